from typing import Dict, Type

import numpy as np

from modulation_lab.exceptions import FileOperationError, InvalidInputError
from modulation_lab.networks.base import (
    HEADER,
    PAYLOAD,
    ShallowNetwork,
    TrainingBatch,
    encode_checkpoint,
    write_checkpoint,
)
from modulation_lab.networks.modulation import ModulationNetwork
from modulation_lab.networks.plain import PlainReluNetwork

NETWORK_CLASS_MAP: Dict[str, Type[ShallowNetwork]] = {
    "modulation": ModulationNetwork,
    "plain": PlainReluNetwork,
}


def network_class(kind: str) -> Type[ShallowNetwork]:
    if kind not in NETWORK_CLASS_MAP:
        raise InvalidInputError(f"Unknown network kind: {kind}")
    return NETWORK_CLASS_MAP[kind]


def parameter_count(kind: str, units: int, dim: int) -> int:
    return network_class(kind).parameter_count(units, dim)


def checkpoint_vector(data: bytes) -> np.ndarray:
    """Read the parameter vector of a checkpoint written by ``to_bytes``."""
    header_size = 4 * HEADER.itemsize
    if len(data) < header_size:
        raise FileOperationError("Checkpoint is truncated")
    kind_code, dim, units, count = np.frombuffer(data[:header_size], dtype=HEADER)
    by_code = {cls.kind_code: cls for cls in NETWORK_CLASS_MAP.values()}
    if kind_code not in by_code:
        raise FileOperationError(f"Unknown network code {kind_code} in checkpoint")
    if by_code[kind_code].parameter_count(int(units), int(dim)) != count:
        raise FileOperationError("Checkpoint header is inconsistent")
    vector = np.frombuffer(data[header_size:], dtype=PAYLOAD)
    if vector.shape != (count,):
        raise FileOperationError("Checkpoint payload does not match its header")
    return vector.copy()


__all__ = [
    "NETWORK_CLASS_MAP",
    "ModulationNetwork",
    "PlainReluNetwork",
    "ShallowNetwork",
    "TrainingBatch",
    "checkpoint_vector",
    "encode_checkpoint",
    "network_class",
    "parameter_count",
    "write_checkpoint",
]
