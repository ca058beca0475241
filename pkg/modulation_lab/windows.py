"""
Gaussian windows, polynomial weights and breakpoint activations.

Two Gaussian normalizations are used throughout: the canonical window
e^{-pi|x|^2}, which is its own Fourier transform and admits the closed-form
ReLU STFT, and the unit-variance window e^{-|x|^2/2} used by the networks.
Both are written as exp(-rate * |x|^2 / 2).
"""

from dataclasses import dataclass
from typing import Literal, Optional, Tuple, Union

import numpy as np

from modulation_lab.exceptions import InvalidInputError

Normalization = Literal["canonical", "unit"]

ArrayLike = Union[float, np.ndarray]

GAUSSIAN_RATE = {"canonical": 2.0 * np.pi, "unit": 1.0}


def gaussian_rate(normalization: str) -> float:
    try:
        return GAUSSIAN_RATE[normalization]
    except KeyError:
        raise InvalidInputError(f"Unknown window normalization: {normalization}")


def eval_gaussian(
    x: ArrayLike, dim: int = 1, normalization: str = "canonical"
) -> np.ndarray:
    """
    Evaluate the isotropic Gaussian window.

    Args:
        x: Points. For ``dim == 1`` any shape; otherwise the last axis has
            length ``dim``.
        dim: Spatial dimension.
        normalization: "canonical" (e^{-pi|x|^2}) or "unit" (e^{-|x|^2/2}).

    Returns:
        np.ndarray: Window values with the point shape of ``x``.
    """
    rate = gaussian_rate(normalization)
    arr = np.asarray(x, dtype=float)
    if dim == 1:
        norm_sq = arr * arr
    else:
        if arr.shape[-1] != dim:
            raise InvalidInputError(f"Expected points with last axis {dim}")
        norm_sq = np.sum(arr * arr, axis=-1)
    return np.exp(-0.5 * rate * norm_sq)


def eval_weight(
    s: float, z: ArrayLike, vector_axis: Optional[int] = None
) -> np.ndarray:
    """
    Polynomial weight v_s(z) = (1 + |z|^2)^{s/2}, evaluated in log space.

    Args:
        s: Any real exponent.
        z: Scalars, or vectors along ``vector_axis``.
        vector_axis: Axis holding vector components, or None for scalars.
    """
    arr = np.asarray(z, dtype=float)
    if vector_axis is None:
        norm_sq = arr * arr
    else:
        norm_sq = np.sum(arr * arr, axis=vector_axis)
    return np.exp(0.5 * s * np.log1p(norm_sq))


@dataclass(frozen=True)
class PolyWeight:
    s: float

    def __call__(self, z: ArrayLike, vector_axis: Optional[int] = None) -> np.ndarray:
        return eval_weight(self.s, z, vector_axis)


@dataclass(frozen=True)
class GaussianWindow:
    """
    Separable Gaussian window, optionally translated and modulated on every axis.

    g(t) = prod_k exp(-rate (t_k - shift)^2 / 2) exp(2 pi i modulation t_k)
    """

    dim: int = 1
    normalization: Normalization = "canonical"
    shift: float = 0.0
    modulation: float = 0.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidInputError(f"Window dimension must be 1 or 2, got {self.dim}")
        gaussian_rate(self.normalization)

    @property
    def rate(self) -> float:
        return gaussian_rate(self.normalization)

    @property
    def is_real(self) -> bool:
        return self.modulation == 0.0

    def profile(self, t: ArrayLike) -> np.ndarray:
        """One-axis factor of the window."""
        arr = np.asarray(t, dtype=float)
        values = np.exp(-0.5 * self.rate * (arr - self.shift) ** 2)
        if self.is_real:
            return values
        return values * np.exp(2j * np.pi * self.modulation * arr)

    def __call__(self, x: ArrayLike) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if self.dim == 1:
            return self.profile(arr)
        out = self.profile(arr[..., 0])
        for k in range(1, self.dim):
            out = out * self.profile(arr[..., k])
        return out

    def l2_norm_squared(self) -> float:
        # translation and modulation leave the L2 norm unchanged
        return float((np.pi / self.rate) ** (0.5 * self.dim))

    def without_modulation(self) -> "GaussianWindow":
        return GaussianWindow(dim=self.dim, normalization=self.normalization)


ActivationKind = Literal["relu", "ramp", "tooth"]


@dataclass(frozen=True)
class BreakpointActivation:
    """
    Piecewise-linear activation with a finite breakpoint set.

    relu:  max(x, 0)
    ramp:  0 below b1, x - b1 on [b1, b2], b2 - b1 above b2
    tooth: 0 outside [b1, b3], rising on [b1, b2], falling on [b2, b3]

    Derivatives use the right-derivative at every breakpoint.
    """

    kind: ActivationKind = "relu"
    breakpoints: Tuple[float, ...] = (0.0,)

    def __post_init__(self):
        expected = {"relu": 1, "ramp": 2, "tooth": 3}.get(self.kind)
        if expected is None:
            raise InvalidInputError(f"Unknown activation kind: {self.kind}")
        bps = tuple(float(b) for b in self.breakpoints)
        if len(bps) != expected:
            raise InvalidInputError(
                f"{self.kind} activation needs {expected} breakpoints, got {len(bps)}"
            )
        if any(b1 >= b2 for b1, b2 in zip(bps, bps[1:])):
            raise InvalidInputError(f"Breakpoints must increase strictly: {bps}")
        if self.kind == "tooth" and not np.isclose(bps[1] - bps[0], bps[2] - bps[1]):
            raise InvalidInputError(f"Tooth breakpoints must be equally spaced: {bps}")
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def relu(cls) -> "BreakpointActivation":
        return cls("relu", (0.0,))

    def __call__(self, x: ArrayLike) -> np.ndarray:
        return eval_ramp_tooth(self, x)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        b = self.breakpoints
        if self.kind == "relu":
            return np.heaviside(arr - b[0], 1.0)
        if self.kind == "ramp":
            return ((arr >= b[0]) & (arr < b[1])).astype(float)
        rising = (arr >= b[0]) & (arr < b[1])
        falling = (arr >= b[1]) & (arr < b[2])
        return rising.astype(float) - falling.astype(float)

    def second_derivative(self, x: ArrayLike) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))


def relu(x: ArrayLike) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def eval_ramp_tooth(activation: BreakpointActivation, x: ArrayLike) -> np.ndarray:
    """
    Evaluate a breakpoint activation as its ReLU combination.

    ramp:  (x - b1)_+ - (x - b2)_+
    tooth: (x - b1)_+ - 2 (x - b2)_+ + (x - b3)_+
    """
    arr = np.asarray(x, dtype=float)
    b = activation.breakpoints
    if activation.kind == "relu":
        return relu(arr - b[0])
    if activation.kind == "ramp":
        return relu(arr - b[0]) - relu(arr - b[1])
    return relu(arr - b[0]) - 2.0 * relu(arr - b[1]) + relu(arr - b[2])
