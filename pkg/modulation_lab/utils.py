import os
from datetime import timedelta
from typing import Sequence

import humanize
import numpy as np

from modulation_lab.exceptions import FileOperationError


def ensure_folder(path: str) -> str:
    """
    Create the folder if needed and return it.

    Args:
        path (str): The folder to create.

    Returns:
        str: The same path, now guaranteed to exist.
    """
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise FileOperationError(f"Cannot create folder {path}: {e}")
    return path


def human_duration(seconds: float) -> str:
    """
    Format a wall-clock duration for log messages.

    Args:
        seconds (float): Elapsed time in seconds.

    Returns:
        str: A human readable duration such as "2 minutes and 3.41 seconds".
    """
    return humanize.precisedelta(timedelta(seconds=seconds), minimum_unit="milliseconds")


def child_rng(seed: int, stream: int) -> np.random.Generator:
    """
    Independent generator for one purpose (data, initialisation, ...) of a seed.

    Args:
        seed (int): The run seed.
        stream (int): Stream index; different streams never share draws.

    Returns:
        np.random.Generator: A PCG64 generator seeded with ``[seed, stream]``.
    """
    return np.random.default_rng([seed, stream])


def is_geometric(values: Sequence[float], rtol: float = 1e-9) -> bool:
    """Whether consecutive ratios of a positive, increasing sequence agree."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2 or np.any(arr <= 0) or np.any(np.diff(arr) <= 0):
        return False
    ratios = arr[1:] / arr[:-1]
    return bool(np.allclose(ratios, ratios[0], rtol=rtol, atol=0.0))
