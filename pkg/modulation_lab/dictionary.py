"""
Modulation dictionary atoms, their weights and the representing measure.

An atom with parameters (y, eta, b) and fixed constants (t, tau) is

    rho(x) = sigma(a) phi_1(a - t) phi_d(x - y),    a = eta . x / tau + b

The phase identity

    int sigma(eta.x/tau + b) phi_1(eta.x/tau + b - t) e^{-2 pi i b tau} db
        = e^{2 pi i eta.x} V_phi sigma(t, tau)

turns the STFT inversion formula into an integral over atoms, with density
C e^{-2 pi i b tau} V_phi f(y, eta) where C = 1 / (V_phi sigma(t, tau) ||phi_d||^2).
"""

from dataclasses import dataclass
from typing import Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.integrate import simpson
from scipy.interpolate import RegularGridInterpolator
from scipy.special import beta, gammaln

from modulation_lab.config import setting
from modulation_lab.domain.grid import StftGrid
from modulation_lab.exceptions import (
    DivergentMarginalError,
    InvalidInputError,
    OutOfSupportError,
)
from modulation_lab.relu_stft import activation_stft, check_condition_A, relu_stft_scaled
from modulation_lab.sobolev import QuadratureRule, SobolevSpec
from modulation_lab.windows import (
    BreakpointActivation,
    GaussianWindow,
    Normalization,
    eval_weight,
    gaussian_rate,
)

RELU = BreakpointActivation.relu()
PHASE_B_TRUNCATION = float(setting("phase_identity", "b_truncation", 40.0))
PHASE_B_SPACING = float(setting("phase_identity", "b_spacing", 2e-3))


class FixedConstants(BaseModel):
    """The point (t, tau) where Condition (A) is imposed, and the window normalization."""

    t: float = 0.0
    tau: float = 1.0
    normalization: Normalization = "canonical"

    @field_validator("tau")
    @classmethod
    def tau_must_be_nonzero(cls, value: float) -> float:
        if value == 0:
            raise InvalidInputError("tau must be nonzero")
        return value

    @model_validator(mode="after")
    def condition_a_must_hold(self) -> "FixedConstants":
        condition = check_condition_A(self.t, self.tau, normalization=self.normalization)
        if not condition.holds:
            raise InvalidInputError(
                f"Condition (A) fails at (t={self.t}, tau={self.tau}): "
                f"|V| = {condition.magnitude:.3e}"
            )
        return self

    @property
    def rate(self) -> float:
        return gaussian_rate(self.normalization)


@dataclass
class AtomParams:
    """A batch of N atoms: y and eta of shape (N, d), b of shape (N,)."""

    y: np.ndarray
    eta: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        self.eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.y.shape != self.eta.shape:
            raise InvalidInputError(
                f"y {self.y.shape} and eta {self.eta.shape} must have equal shapes"
            )
        if self.b.shape != (self.y.shape[0],):
            raise InvalidInputError(f"b must have shape ({self.y.shape[0]},)")

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    def __len__(self) -> int:
        return self.y.shape[0]

    def subset(self, index) -> "AtomParams":
        return AtomParams(self.y[index], self.eta[index], self.b[index])


@dataclass
class AtomDerivatives:
    """Atom values (points x atoms) with gradient and Hessian channels."""

    value: np.ndarray
    gradient: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None


def as_points(x: Union[float, np.ndarray], dim: int) -> np.ndarray:
    """Coerce evaluation points to shape (m, d)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None] if dim == 1 else arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InvalidInputError(f"Expected points of dimension {dim}, got {arr.shape}")
    return arr


def activation_profile(
    activation: BreakpointActivation, u: np.ndarray, t: float, rate: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """h(u) = sigma(u) exp(-rate (u - t)^2 / 2) and its first two derivatives."""
    shifted = u - t
    window = np.exp(-0.5 * rate * shifted * shifted)
    window_1 = -rate * shifted * window
    window_2 = (rate * rate * shifted * shifted - rate) * window
    s0 = activation(u)
    s1 = activation.derivative(u)
    s2 = activation.second_derivative(u)
    h0 = s0 * window
    h1 = s1 * window + s0 * window_1
    h2 = s2 * window + 2.0 * s1 * window_1 + s0 * window_2
    return h0, h1, h2


def atom_grad(
    params: AtomParams,
    constants: FixedConstants,
    x: Union[float, np.ndarray],
    order: int = 1,
    activation: BreakpointActivation = RELU,
) -> AtomDerivatives:
    """
    Atom values and x-derivatives up to ``order`` (at most 2).

    Shapes: value (m, N), gradient (m, N, d), hessian (m, N, d, d).
    Kinks of the activation use the right-derivative.
    """
    if order not in (0, 1, 2):
        raise InvalidInputError(f"Derivative order {order} is not supported")
    points = as_points(x, params.dim)
    rate = constants.rate
    direction = params.eta / constants.tau
    u = points @ direction.T + params.b[None, :]
    h0, h1, h2 = activation_profile(activation, u, constants.t, rate)

    offset = points[:, None, :] - params.y[None, :, :]
    spatial = np.exp(-0.5 * rate * np.sum(offset * offset, axis=-1))
    value = h0 * spatial
    if order == 0:
        return AtomDerivatives(value=value)

    spatial_grad = -rate * offset * spatial[..., None]
    gradient = (h1 * spatial)[..., None] * direction[None, :, :] + h0[
        ..., None
    ] * spatial_grad
    if order == 1:
        return AtomDerivatives(value=value, gradient=gradient)

    dd = direction[None, :, :, None] * direction[None, :, None, :]
    cross = direction[None, :, :, None] * spatial_grad[..., None, :]
    cross = cross + np.swapaxes(cross, -1, -2)
    eye = np.eye(params.dim)
    spatial_hess = (
        rate * rate * offset[..., :, None] * offset[..., None, :] - rate * eye
    ) * spatial[..., None, None]
    hessian = (
        (h2 * spatial)[..., None, None] * dd
        + h1[..., None, None] * cross
        + h0[..., None, None] * spatial_hess
    )
    return AtomDerivatives(value=value, gradient=gradient, hessian=hessian)


def atom_eval(
    params: AtomParams,
    constants: FixedConstants,
    x: Union[float, np.ndarray],
    activation: BreakpointActivation = RELU,
) -> np.ndarray:
    return atom_grad(params, constants, x, order=0, activation=activation).value


class LocalWeightSpec(BaseModel):
    """theta(eta, b) = v_n(eta) v_s((|b| - R |eta/tau|)_+), s < -1."""

    kind: Literal["local"] = "local"
    n: int = Field(default=1, ge=0)
    s: float = -2.0
    radius: float = Field(default=1.0, gt=0)

    @field_validator("s")
    @classmethod
    def s_must_be_integrable(cls, value: float) -> float:
        if value >= -1:
            raise DivergentMarginalError(
                f"Local weight needs s < -1 for a finite marginal, got {value}"
            )
        return value

    @property
    def restricts_centers(self) -> bool:
        return False

    def beta_term(self) -> float:
        return float(beta(0.5, 0.5 * (-self.s - 1.0)))

    def constant(self) -> float:
        """C_{Omega,s} = 2 R + B(1/2, (-s-1)/2)."""
        return 2.0 * self.radius + self.beta_term()

    def theta(self, eta: np.ndarray, b: np.ndarray, tau: float) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        reach = self.radius * np.linalg.norm(eta / tau, axis=-1)
        excess = np.maximum(np.abs(b) - reach, 0.0)
        return eval_weight(self.n, eta, vector_axis=-1) * eval_weight(self.s, excess)

    def marginal(self, eta: np.ndarray, tau: float) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        reach = self.radius * np.linalg.norm(eta / tau, axis=-1)
        return eval_weight(self.n, eta, vector_axis=-1) * (2.0 * reach + self.beta_term())


class GlobalWeightSpec(BaseModel):
    """theta(eta, b) = v_{n+s}(eta) / v_s(b), s > 1; atoms centred in the domain."""

    kind: Literal["global"] = "global"
    n: int = Field(default=1, ge=0)
    s: float = 2.0

    @field_validator("s")
    @classmethod
    def s_must_be_integrable(cls, value: float) -> float:
        if value <= 1:
            raise DivergentMarginalError(
                f"Global weight needs s > 1 for a finite marginal, got {value}"
            )
        return value

    @property
    def restricts_centers(self) -> bool:
        return True

    def constant(self) -> float:
        """sqrt(pi) Gamma((s-1)/2) / Gamma(s/2) = int v_{-s}(b) db."""
        log_ratio = gammaln(0.5 * (self.s - 1.0)) - gammaln(0.5 * self.s)
        return float(np.sqrt(np.pi) * np.exp(log_ratio))

    def theta(self, eta: np.ndarray, b: np.ndarray, tau: float = 1.0) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return eval_weight(self.n + self.s, eta, vector_axis=-1) * eval_weight(-self.s, b)

    def marginal(self, eta: np.ndarray, tau: float = 1.0) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return eval_weight(self.n + self.s, eta, vector_axis=-1) * self.constant()


WeightSpec = Union[LocalWeightSpec, GlobalWeightSpec]


@dataclass
class WeightValue:
    theta: np.ndarray
    marginal: np.ndarray


def local_weight(
    spec: LocalWeightSpec, eta: np.ndarray, b: np.ndarray, tau: float
) -> WeightValue:
    return WeightValue(theta=spec.theta(eta, b, tau), marginal=spec.marginal(eta, tau))


def global_weight(spec: GlobalWeightSpec, eta: np.ndarray, b: np.ndarray) -> WeightValue:
    return WeightValue(theta=spec.theta(eta, b), marginal=spec.marginal(eta))


def activation_value(
    constants: FixedConstants, activation: BreakpointActivation = RELU
) -> complex:
    """V_phi sigma(t, tau) for the configured window normalization."""
    if activation.kind == "relu" and activation.breakpoints == (0.0,):
        return complex(
            relu_stft_scaled(constants.t, constants.tau, constants.normalization).value
        )
    return activation_stft(
        activation, constants.t, constants.tau, normalization=constants.normalization
    )


def representation_constant(
    constants: FixedConstants, dim: int, activation: BreakpointActivation = RELU
) -> complex:
    """1 / (V_phi sigma(t, tau) ||phi_d||^2); its modulus is C_{sigma,phi}."""
    window = GaussianWindow(dim=dim, normalization=constants.normalization)
    return 1.0 / (activation_value(constants, activation) * window.l2_norm_squared())


class StftInterpolator:
    """Multilinear interpolation of an STFT grid at (y, eta) points."""

    def __init__(self, F: StftGrid):
        axes = [a.nodes for a in F.space_axes] + [a.nodes for a in F.freq_axes]
        self.lower = np.array([a[0] for a in axes])
        self.upper = np.array([a[-1] for a in axes])
        self.dim = F.dim
        self._real = RegularGridInterpolator(axes, F.values.real, method="linear")
        self._imag = RegularGridInterpolator(axes, F.values.imag, method="linear")

    def __call__(self, y: np.ndarray, eta: np.ndarray) -> np.ndarray:
        points = np.concatenate(
            [as_points(y, self.dim), as_points(eta, self.dim)], axis=1
        )
        outside = np.any((points < self.lower) | (points > self.upper), axis=1)
        if np.any(outside):
            first = points[np.argmax(outside)]
            raise OutOfSupportError(f"Point (y, eta) = {first.tolist()} is off the grid")
        return self._real(points) + 1j * self._imag(points)


def measure_density(
    F: StftGrid,
    constants: FixedConstants,
    y: np.ndarray,
    eta: np.ndarray,
    b: np.ndarray,
    activation: BreakpointActivation = RELU,
) -> np.ndarray:
    """
    Density of the representing measure at (y, eta, b).

    Raises:
        OutOfSupportError: If (y, eta) lies outside the STFT grid.
    """
    if F.window.normalization != constants.normalization:
        raise InvalidInputError("STFT window and dictionary windows differ")
    values = StftInterpolator(F)(y, eta)
    kappa = representation_constant(constants, F.dim, activation)
    phase = np.exp(-2j * np.pi * np.atleast_1d(np.asarray(b, dtype=float)) * constants.tau)
    return kappa * phase * values


@dataclass
class PhaseIdentityResult:
    value: complex
    expected: complex
    residual: float


def _segment_simpson(func, lo: float, hi: float, spacing: float) -> complex:
    num = max(int(np.ceil((hi - lo) / spacing)), 2)
    num += num % 2
    b = np.linspace(lo, hi, num + 1)
    return complex(simpson(func(b), x=b))


def verify_phase_identity(
    eta: np.ndarray,
    x: np.ndarray,
    constants: FixedConstants,
    b_truncation: float = PHASE_B_TRUNCATION,
    spacing: float = PHASE_B_SPACING,
    activation: BreakpointActivation = RELU,
) -> PhaseIdentityResult:
    """
    Integrate the left side over b in [-B, B] and compare with e^{2 pi i eta.x}.

    The b-range is split at the activation breakpoints so the rule only sees
    smooth pieces.
    """
    u = float(np.dot(np.atleast_1d(eta), np.atleast_1d(x))) / constants.tau
    rate = constants.rate

    def integrand(b: np.ndarray) -> np.ndarray:
        a = u + b
        window = np.exp(-0.5 * rate * (a - constants.t) ** 2)
        return activation(a) * window * np.exp(-2j * np.pi * b * constants.tau)

    knots = [-b_truncation]
    knots += sorted(k - u for k in activation.breakpoints if -b_truncation < k - u < b_truncation)
    knots.append(b_truncation)
    total = sum(
        (_segment_simpson(integrand, lo, hi, spacing) for lo, hi in zip(knots[:-1], knots[1:])),
        0.0 + 0.0j,
    )
    value = total / activation_value(constants, activation)
    expected = complex(np.exp(2j * np.pi * u * constants.tau))
    return PhaseIdentityResult(
        value=value, expected=expected, residual=float(abs(value - expected))
    )


def weighted_atom_norms(
    params: AtomParams,
    constants: FixedConstants,
    weight: WeightSpec,
    spec: SobolevSpec,
    rule: QuadratureRule,
    activation: BreakpointActivation = RELU,
) -> np.ndarray:
    """W^{n,r}(Omega) norm of every weighted atom rho / theta, n <= 1."""
    if spec.n > 1:
        raise InvalidInputError("Weighted atom norms support n <= 1")
    derivs = atom_grad(params, constants, rule.points, order=spec.n, activation=activation)
    theta = weight.theta(params.eta, params.b, constants.tau)
    total = np.tensordot(rule.weights, np.abs(derivs.value / theta) ** spec.r, axes=1)
    if spec.n == 1 and derivs.gradient is not None:
        scaled = np.abs(derivs.gradient / theta[None, :, None]) ** spec.r
        total = total + np.tensordot(rule.weights, scaled.sum(axis=-1), axes=1)
    return total ** (1.0 / spec.r)


def atoms_frame(params: AtomParams, coefficients: np.ndarray) -> pd.DataFrame:
    """One row per atom: y..., eta..., b, coef_re, coef_im."""
    columns = {f"y{k}": params.y[:, k] for k in range(params.dim)}
    columns.update({f"eta{k}": params.eta[:, k] for k in range(params.dim)})
    columns["b"] = params.b
    coefficients = np.asarray(coefficients, dtype=complex)
    columns["coef_re"] = coefficients.real
    columns["coef_im"] = coefficients.imag
    return pd.DataFrame(columns)
