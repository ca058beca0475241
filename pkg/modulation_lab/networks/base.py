"""
Classes for shallow networks trained with an H1 loss
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar, Tuple

import numpy as np
from loguru import logger

from modulation_lab.exceptions import FileOperationError, InvalidInputError
from modulation_lab.targets import Target

HEADER = np.dtype("<i8")
PAYLOAD = np.dtype("<f8")


def encode_checkpoint(kind_code: int, dim: int, units: int, vector: np.ndarray) -> bytes:
    """Little-endian int64 header (kind, dim, units, count) then float64 parameters."""
    vector = np.asarray(vector, dtype=PAYLOAD)
    header = np.array([kind_code, dim, units, vector.size], dtype=HEADER)
    return header.tobytes() + vector.tobytes()


@dataclass
class TrainingBatch:
    """Points (n, d) with target values (n,) and gradients (n, d)."""

    points: np.ndarray
    value: np.ndarray
    gradient: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.gradient = np.asarray(self.gradient, dtype=float)
        n = self.points.shape[0]
        if n == 0:
            raise InvalidInputError("Training batch is empty")
        if self.value.shape != (n,) or self.gradient.shape != self.points.shape:
            raise InvalidInputError("Batch values and gradients do not match the points")

    @classmethod
    def from_target(cls, target: Target, points: np.ndarray) -> "TrainingBatch":
        value, gradient = target.evaluate(np.asarray(points, dtype=float))
        return cls(points=points, value=value, gradient=gradient)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class ShallowNetwork(ABC):
    """
    Abstract base class for one-hidden-layer networks.
    """

    kind: ClassVar[str] = ""
    kind_code: ClassVar[int] = 0

    @property
    @abstractmethod
    def dim(self) -> int:
        raise NotImplementedError

    @property
    @abstractmethod
    def units(self) -> int:
        raise NotImplementedError

    @staticmethod
    @abstractmethod
    def parameter_count(units: int, dim: int) -> int:
        raise NotImplementedError

    @abstractmethod
    def forward(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Network values (n,) and input gradients (n, d).
        """
        raise NotImplementedError

    @abstractmethod
    def loss_and_grad(self, batch: TrainingBatch) -> Tuple[float, np.ndarray]:
        """
        H1 loss and its gradient with respect to the flat parameter vector.
        """
        raise NotImplementedError

    @abstractmethod
    def to_vector(self) -> np.ndarray:
        raise NotImplementedError

    @abstractmethod
    def set_vector(self, vector: np.ndarray) -> None:
        raise NotImplementedError

    def count_params(self) -> int:
        return self.parameter_count(self.units, self.dim)

    def loss(self, batch: TrainingBatch) -> float:
        """mean[(u - f)^2 + |grad u - grad f|^2] over the batch."""
        value, gradient = self.forward(batch.points)
        residual = value - batch.value
        slope = gradient - batch.gradient
        return float(np.mean(residual * residual + np.sum(slope * slope, axis=1)))

    def _check_vector(self, vector: np.ndarray) -> np.ndarray:
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.count_params(),):
            raise InvalidInputError(
                f"Expected {self.count_params()} parameters, got {vector.shape}"
            )
        return vector

    def to_bytes(self) -> bytes:
        return encode_checkpoint(self.kind_code, self.dim, self.units, self.to_vector())

    def save_checkpoint(self, path: str) -> str:
        return write_checkpoint(path, self.to_bytes())


def write_checkpoint(path: str, data: bytes) -> str:
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as e:
        logger.error(f"Error writing checkpoint {path}: {str(e)}")
        logger.exception(e)
        raise FileOperationError(e)
    return path
