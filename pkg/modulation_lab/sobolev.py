"""
Discrete W^{n,r}(Omega) error functionals and log-log rate fits.

    ||f - g||_{W^{n,r}} = ( sum_{|alpha| <= n} ||d^alpha (f - g)||_{L^r}^r )^{1/r}

Each L^r integral is a weighted sum over a quadrature rule: tensor
trapezoid weights on a uniform grid, or |Omega| / M on uniform random samples.
"""

from dataclasses import dataclass
from typing import ClassVar, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from scipy.stats import linregress

from modulation_lab.domain.base import ArtifactModel
from modulation_lab.domain.grid import AxisGrid, mesh_points, tensor_weights
from modulation_lab.exceptions import ArityError, InvalidInputError


class Box(BaseModel):
    """Axis-aligned box [lower_1, upper_1] x ... x [lower_d, upper_d]."""

    lower: List[float]
    upper: List[float]

    @model_validator(mode="after")
    def check_corners(self) -> "Box":
        if len(self.lower) != len(self.upper) or len(self.lower) not in (1, 2):
            raise ValueError("Box corners must both have dimension 1 or 2")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"Empty box: {self.lower} .. {self.upper}")
        return self

    @classmethod
    def symmetric(cls, half_width: float, dim: int = 1) -> "Box":
        return cls(lower=[-half_width] * dim, upper=[half_width] * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @property
    def radius(self) -> float:
        """R_Omega = sup over the box of |x|."""
        corner = np.maximum(np.abs(self.lower), np.abs(self.upper))
        return float(np.linalg.norm(corner))

    def axes(self, num: int) -> List[AxisGrid]:
        return [
            AxisGrid(start=lo, stop=hi, num=num) for lo, hi in zip(self.lower, self.upper)
        ]

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.all((points >= self.lower) & (points <= self.upper), axis=-1)

    def sample(self, rng: np.random.Generator, num: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(num, self.dim))


class SobolevSpec(BaseModel):
    n: int = Field(default=1, ge=0, le=2)
    r: float = Field(default=2.0, ge=2.0)
    domain: Box = Field(default_factory=lambda: Box.symmetric(3.0))
    diagnostics: bool = False

    @model_validator(mode="after")
    def second_order_is_diagnostic(self) -> "SobolevSpec":
        if self.n == 2 and not self.diagnostics:
            raise ValueError("n = 2 is only available with diagnostics enabled")
        return self


@dataclass
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    mode: Literal["grid", "monte_carlo"]
    shape: Optional[Tuple[int, ...]] = None
    spacing: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.ndim != 2 or self.weights.shape != (self.points.shape[0],):
            raise InvalidInputError("Quadrature points must be (m, d) with m weights")

    def __len__(self) -> int:
        return self.points.shape[0]


def grid_rule(box: Box, num_per_axis: int) -> QuadratureRule:
    axes = box.axes(num_per_axis)
    return QuadratureRule(
        points=mesh_points(axes),
        weights=tensor_weights(axes).ravel(),
        mode="grid",
        shape=tuple(axis.num for axis in axes),
        spacing=tuple(axis.spacing for axis in axes),
    )


def monte_carlo_rule(
    box: Box,
    num: int,
    rng: Optional[np.random.Generator] = None,
    points: Optional[np.ndarray] = None,
) -> QuadratureRule:
    """Uniform-sample rule with weights |Omega| / M; reuses ``points`` when given."""
    if points is None:
        rng = rng or np.random.default_rng(0)
        points = box.sample(rng, num)
    points = np.asarray(points, dtype=float)
    weights = np.full(points.shape[0], box.volume / points.shape[0])
    return QuadratureRule(points=points, weights=weights, mode="monte_carlo")


@dataclass
class FunctionChannels:
    """Values (m,), gradients (m, d) and Hessians (m, d, d) at quadrature points."""

    value: np.ndarray
    gradient: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None

    @classmethod
    def zeros_like(cls, other: "FunctionChannels") -> "FunctionChannels":
        return cls(
            value=np.zeros_like(other.value),
            gradient=None if other.gradient is None else np.zeros_like(other.gradient),
            hessian=None if other.hessian is None else np.zeros_like(other.hessian),
        )


def finite_difference_hessian(gradient: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """Second derivatives from gradient samples on a grid rule (diagnostics only)."""
    if rule.mode != "grid" or rule.shape is None or rule.spacing is None:
        raise ArityError("Finite-difference Hessians need a grid rule")
    dim = len(rule.shape)
    hessian = np.empty(gradient.shape + (dim,))
    for j in range(dim):
        component = gradient[:, j].reshape(rule.shape)
        partials = np.gradient(component, *rule.spacing, edge_order=2)
        if dim == 1:
            partials = [partials]
        for i in range(dim):
            hessian[:, j, i] = np.asarray(partials[i]).ravel()
    return 0.5 * (hessian + np.swapaxes(hessian, 1, 2))


def _hessian_of(
    channels: FunctionChannels, spec: SobolevSpec, rule: QuadratureRule
) -> np.ndarray:
    if channels.hessian is not None:
        return channels.hessian
    if spec.diagnostics and channels.gradient is not None and rule.mode == "grid":
        return finite_difference_hessian(channels.gradient, rule)
    raise ArityError("Second derivatives are required for n = 2")


def sobolev_error(
    reference: FunctionChannels,
    approx: FunctionChannels,
    spec: SobolevSpec,
    rule: QuadratureRule,
) -> float:
    """
    Quadrature estimate of the W^{n,r}(Omega) distance between two functions.

    Raises:
        ArityError: If a derivative channel of order <= n is missing.
    """
    m = len(rule)
    if reference.value.shape != (m,) or approx.value.shape != (m,):
        raise InvalidInputError(f"Channels must hold {m} values")
    r = spec.r
    total = np.abs(reference.value - approx.value) ** r
    if spec.n >= 1:
        if reference.gradient is None or approx.gradient is None:
            raise ArityError("Gradients are required for n >= 1")
        total = total + np.sum(np.abs(reference.gradient - approx.gradient) ** r, axis=1)
    if spec.n == 2:
        diff = _hessian_of(reference, spec, rule) - _hessian_of(approx, spec, rule)
        upper = np.triu_indices(diff.shape[1])
        total = total + np.sum(np.abs(diff[:, upper[0], upper[1]]) ** r, axis=1)
    return float(np.dot(rule.weights, total) ** (1.0 / r))


def sobolev_norm(
    channels: FunctionChannels, spec: SobolevSpec, rule: QuadratureRule
) -> float:
    return sobolev_error(channels, FunctionChannels.zeros_like(channels), spec, rule)


def count_inversions(values: Sequence[float]) -> int:
    """Number of increases in a sequence that should be nonincreasing."""
    arr = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(arr) > 0))


class RateReport(ArtifactModel):
    artifact_name: ClassVar[str] = "rate_report"

    n_values: List[int]
    median_errors: List[float]
    q25: List[float]
    q75: List[float]
    slope: float
    intercept: float
    slope_stderr: float
    residual: float
    seed_count: int

    @property
    def confidence_band(self) -> Tuple[float, float]:
        half = 1.96 * self.slope_stderr
        return self.slope - half, self.slope + half

    @property
    def inversions(self) -> int:
        return count_inversions(self.median_errors)

    def summary(self) -> str:
        lo, hi = self.confidence_band
        return (
            f"slope {self.slope:.4f} (95% band [{lo:.4f}, {hi:.4f}]), "
            f"intercept {self.intercept:.4f}, residual {self.residual:.3e}, "
            f"{self.seed_count} seeds, {self.inversions} inversions"
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "N": self.n_values,
                "median_error": self.median_errors,
                "q25": self.q25,
                "q75": self.q75,
                "fitted_slope": [self.slope] * len(self.n_values),
            }
        )


def fit_rate(n_values: Sequence[int], errors: Sequence) -> RateReport:
    """
    Least-squares slope of log(median error) against log(N).

    ``errors`` holds one row per N value and one column per seed (a flat
    sequence means a single seed).
    """
    ns = np.asarray(n_values, dtype=float)
    errs = np.asarray(errors, dtype=float)
    if errs.ndim == 1:
        errs = errs[:, None]
    if errs.shape[0] != ns.size:
        raise InvalidInputError("One error row per N value is required")
    if np.unique(ns).size < 4:
        raise InvalidInputError("Rate fits need at least 4 distinct N values")
    if np.any(np.diff(ns) <= 0):
        raise InvalidInputError("N values must increase strictly")
    if not np.all(np.isfinite(errs)) or np.any(errs <= 0):
        raise InvalidInputError("Errors must be positive and finite")

    medians = np.median(errs, axis=1)
    log_n, log_e = np.log(ns), np.log(medians)
    fit = linregress(log_n, log_e)
    residual = float(np.sqrt(np.mean((log_e - (fit.intercept + fit.slope * log_n)) ** 2)))
    return RateReport(
        n_values=[int(n) for n in ns],
        median_errors=medians.tolist(),
        q25=np.percentile(errs, 25, axis=1).tolist(),
        q75=np.percentile(errs, 75, axis=1).tolist(),
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        slope_stderr=float(fit.stderr),
        residual=residual,
        seed_count=int(errs.shape[1]),
    )
