from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, model_validator

from modulation_lab.exceptions import FileOperationError, InvalidInputError
from modulation_lab.windows import GaussianWindow

HEADER_INT = np.dtype("<i8")
HEADER_FLOAT = np.dtype("<f8")
PAYLOAD = np.dtype("<c16")


class AxisGrid(BaseModel):
    """Uniform grid on [start, stop] with ``num`` nodes, both ends included."""

    start: float
    stop: float
    num: int = Field(ge=2)

    @model_validator(mode="after")
    def check_order(self) -> "AxisGrid":
        if not self.stop > self.start:
            raise ValueError(f"stop ({self.stop}) must exceed start ({self.start})")
        return self

    @classmethod
    def from_spacing(cls, start: float, stop: float, spacing: float) -> "AxisGrid":
        if spacing <= 0:
            raise InvalidInputError(f"Grid spacing must be positive, got {spacing}")
        num = int(round((stop - start) / spacing)) + 1
        return cls(start=start, stop=stop, num=num)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)

    @property
    def spacing(self) -> float:
        return (self.stop - self.start) / (self.num - 1)

    def trapezoid_weights(self) -> np.ndarray:
        weights = np.full(self.num, self.spacing)
        weights[0] *= 0.5
        weights[-1] *= 0.5
        return weights


class StftGridSpec(BaseModel):
    """Space and frequency axes of an STFT grid, repeated on every dimension."""

    space: AxisGrid
    freq: AxisGrid
    dim: int = Field(default=1, ge=1, le=2)

    def space_axes(self) -> List[AxisGrid]:
        return [self.space] * self.dim

    def freq_axes(self) -> List[AxisGrid]:
        return [self.freq] * self.dim

    @property
    def entries(self) -> int:
        """Number of complex values an STFT on this grid holds."""
        return (self.space.num * self.freq.num) ** self.dim


def tensor_weights(axes: Sequence[AxisGrid]) -> np.ndarray:
    """Tensor-product trapezoid weights with one array axis per grid axis."""
    weights = axes[0].trapezoid_weights()
    for axis in axes[1:]:
        weights = np.multiply.outer(weights, axis.trapezoid_weights())
    return weights


def mesh_points(axes: Sequence[AxisGrid]) -> np.ndarray:
    """All grid nodes as an (m, d) array in C order."""
    mesh = np.meshgrid(*[axis.nodes for axis in axes], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass
class SampledField:
    """Complex samples of a function on a uniform grid in one or two dimensions."""

    axes: List[AxisGrid]
    values: np.ndarray

    def __post_init__(self):
        if len(self.axes) not in (1, 2):
            raise InvalidInputError(f"Fields must be 1-D or 2-D, got {len(self.axes)}")
        self.values = np.asarray(self.values, dtype=complex)
        shape = tuple(axis.num for axis in self.axes)
        if self.values.shape != shape:
            raise InvalidInputError(
                f"Values of shape {self.values.shape} do not match grid {shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("Sampled field contains non-finite values")

    @classmethod
    def from_function(
        cls, func: Callable[[np.ndarray], np.ndarray], axes: Sequence[AxisGrid]
    ) -> "SampledField":
        """Sample ``func`` (taking (m, d) points) on the grid."""
        points = mesh_points(axes)
        values = np.asarray(func(points)).reshape(tuple(axis.num for axis in axes))
        return cls(list(axes), values)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def origin(self) -> np.ndarray:
        return np.array([axis.start for axis in self.axes])

    @property
    def spacing(self) -> np.ndarray:
        return np.array([axis.spacing for axis in self.axes])

    def points(self) -> np.ndarray:
        return mesh_points(self.axes)

    def boundary_magnitude(self) -> float:
        """Largest modulus on the faces of the grid box."""
        faces = []
        for k in range(self.dim):
            faces.append(np.take(self.values, [0, -1], axis=k))
        return float(max(np.max(np.abs(face)) for face in faces))

    def to_bytes(self) -> bytes:
        header = np.array(
            [self.dim] + [axis.num for axis in self.axes], dtype=HEADER_INT
        ).tobytes()
        geometry = np.concatenate([self.origin, self.spacing]).astype(HEADER_FLOAT)
        return header + geometry.tobytes() + self.values.astype(PAYLOAD).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SampledField":
        dim = int(np.frombuffer(data, dtype=HEADER_INT, count=1)[0])
        if dim not in (1, 2):
            raise InvalidInputError(f"Corrupt field header: dimension {dim}")
        offset = HEADER_INT.itemsize
        lengths = np.frombuffer(data, dtype=HEADER_INT, count=dim, offset=offset)
        offset += dim * HEADER_INT.itemsize
        geometry = np.frombuffer(data, dtype=HEADER_FLOAT, count=2 * dim, offset=offset)
        offset += 2 * dim * HEADER_FLOAT.itemsize
        count = int(np.prod(lengths))
        values = np.frombuffer(data, dtype=PAYLOAD, count=count, offset=offset)
        axes = [
            AxisGrid(
                start=float(geometry[k]),
                stop=float(geometry[k] + geometry[dim + k] * (lengths[k] - 1)),
                num=int(lengths[k]),
            )
            for k in range(dim)
        ]
        return cls(axes, values.reshape(tuple(int(n) for n in lengths)).copy())

    def save(self, path: str) -> str:
        try:
            with open(path, "wb") as fh:
                fh.write(self.to_bytes())
        except OSError as e:
            logger.error(f"Error writing field to {path}: {str(e)}")
            logger.exception(e)
            raise FileOperationError(e)
        return path

    @classmethod
    def load(cls, path: str) -> "SampledField":
        try:
            with open(path, "rb") as fh:
                data = fh.read()
        except OSError as e:
            logger.error(f"Error reading field from {path}: {str(e)}")
            raise FileOperationError(e)
        return cls.from_bytes(data)

    def to_frame(self) -> pd.DataFrame:
        points = self.points()
        columns = {f"x{k}": points[:, k] for k in range(self.dim)}
        flat = self.values.ravel()
        columns["re"] = flat.real
        columns["im"] = flat.imag
        return pd.DataFrame(columns)


@dataclass
class StftGrid:
    """STFT samples V_g f(x, omega); array axes are (x_1..x_d, omega_1..omega_d)."""

    space_axes: List[AxisGrid]
    freq_axes: List[AxisGrid]
    window: GaussianWindow
    values: np.ndarray
    sample_axes: Optional[List[AxisGrid]] = None

    def __post_init__(self):
        if len(self.space_axes) != len(self.freq_axes):
            raise InvalidInputError("Space and frequency axes differ in dimension")
        self.values = np.asarray(self.values, dtype=complex)
        shape = tuple(a.num for a in self.space_axes) + tuple(
            a.num for a in self.freq_axes
        )
        if self.values.shape != shape:
            raise InvalidInputError(
                f"STFT values of shape {self.values.shape} do not match grid {shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("STFT grid contains non-finite values")

    @property
    def dim(self) -> int:
        return len(self.space_axes)

    def cell_weights(self) -> np.ndarray:
        """Trapezoid weight of every (x, omega) node, shaped like ``values``."""
        return np.multiply.outer(
            tensor_weights(self.space_axes), tensor_weights(self.freq_axes)
        )

    def to_frame(self) -> pd.DataFrame:
        xs = mesh_points(self.space_axes)
        ws = mesh_points(self.freq_axes)
        xi = np.repeat(np.arange(len(xs)), len(ws))
        wi = np.tile(np.arange(len(ws)), len(xs))
        columns = {f"x{k}": xs[xi, k] for k in range(self.dim)}
        columns.update({f"omega{k}": ws[wi, k] for k in range(self.dim)})
        flat = self.values.reshape(len(xs) * len(ws))
        columns["abs"] = np.abs(flat)
        columns["re"] = flat.real
        columns["im"] = flat.imag
        return pd.DataFrame(columns)
