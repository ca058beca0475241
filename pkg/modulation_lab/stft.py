"""
Discrete short-time Fourier transform on uniform grids.

    V_g f(x, w) = int f(t) conj(g(t - x)) e^{-2 pi i t w} dt
    f = (gamma, g)^{-1} int int V_g f(x, w) M_w T_x gamma dx dw

Every integral is a trapezoid sum. Windows are separable, so each transform
is a sequence of one-axis contractions with a (space, frequency, sample)
kernel; ``np.tensordot`` fixes the summation order, which keeps results
bit-stable.
"""

from typing import List, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from modulation_lab.config import setting
from modulation_lab.domain.grid import (
    AxisGrid,
    SampledField,
    StftGrid,
    StftGridSpec,
    mesh_points,
    tensor_weights,
)
from modulation_lab.exceptions import (
    GridTooLargeError,
    IllConditionedInversionError,
    InvalidInputError,
    TailTruncationError,
)
from modulation_lab.windows import GaussianWindow, eval_weight

BOX = tuple(setting("stft", "box", [-6.0, 6.0]))
SAMPLE_SPACING = float(setting("stft", "sample_spacing", 0.05))
GRID_SPACING = float(setting("stft", "grid_spacing", 0.1))
GRID_SPACING_2D = float(setting("stft", "grid_spacing_2d", 0.25))
MAX_GRID_ENTRIES = int(float(setting("stft", "max_grid_entries", 2.0e7)))
BARRON_SPACING = float(setting("stft", "barron_spacing", 0.01))
BARRON_REACH = float(setting("stft", "barron_reach", 8.0))
TAIL_THRESHOLD = float(setting("stft", "tail_threshold", 1e-10))
MIN_PAIRING = float(setting("stft", "min_pairing", 1e-10))


class MixedNormSpec(BaseModel):
    """Exponents and weight orders of ||V_g f||_{L^{p,q}_m}, m = v_{s1}(x) v_{s2}(w)."""

    p: float = Field(default=2.0, gt=0)
    q: float = Field(default=2.0, gt=0)
    s1: float = 0.0
    s2: float = 0.0


def default_sample_axis() -> AxisGrid:
    return AxisGrid.from_spacing(BOX[0], BOX[1], SAMPLE_SPACING)


def default_grid_spacing(dim: int = 1) -> float:
    return GRID_SPACING if dim == 1 else GRID_SPACING_2D


def default_grid_spec(dim: int = 1) -> StftGridSpec:
    axis = AxisGrid.from_spacing(BOX[0], BOX[1], default_grid_spacing(dim))
    return StftGridSpec(space=axis, freq=axis, dim=dim)


def default_barron_axis() -> AxisGrid:
    return AxisGrid.from_spacing(-BARRON_REACH, BARRON_REACH, BARRON_SPACING)


def check_grid_size(grid: StftGridSpec, limit: int = MAX_GRID_ENTRIES) -> None:
    if grid.entries > limit:
        raise GridTooLargeError(grid.entries, limit)


def check_tail(field: SampledField, threshold: float = TAIL_THRESHOLD) -> None:
    magnitude = field.boundary_magnitude()
    if magnitude > threshold:
        raise TailTruncationError(magnitude, threshold)


def _analysis_kernel(
    window: GaussianWindow,
    sample_axis: AxisGrid,
    space_axis: AxisGrid,
    freq_axis: AxisGrid,
) -> np.ndarray:
    t = sample_axis.nodes
    shifted = np.conj(window.profile(t[None, :] - space_axis.nodes[:, None]))
    phase = np.exp(-2j * np.pi * np.outer(freq_axis.nodes, t))
    return shifted[:, None, :] * phase[None, :, :] * sample_axis.trapezoid_weights()


def _synthesis_kernel(
    window: GaussianWindow,
    sample_axis: AxisGrid,
    space_axis: AxisGrid,
    freq_axis: AxisGrid,
) -> np.ndarray:
    t = sample_axis.nodes
    shifted = window.profile(t[None, :] - space_axis.nodes[:, None])
    shifted = shifted * space_axis.trapezoid_weights()[:, None]
    phase = np.exp(2j * np.pi * np.outer(freq_axis.nodes, t))
    phase = phase * freq_axis.trapezoid_weights()[:, None]
    return shifted[:, None, :] * phase[None, :, :]


def _interleaved(dim: int) -> List[int]:
    """Axis order (x1, w1, x2, w2, ...) of a (x1..xd, w1..wd) array."""
    order: List[int] = []
    for k in range(dim):
        order.extend([k, dim + k])
    return order


def stft(
    field: SampledField,
    window: Optional[GaussianWindow] = None,
    grid: Optional[StftGridSpec] = None,
    tail_threshold: float = TAIL_THRESHOLD,
) -> StftGrid:
    """
    STFT of a sampled field on a (space, frequency) grid.

    Raises:
        TailTruncationError: If the field is not negligible on its boundary.
        GridTooLargeError: If the output would exceed the grid entry budget.
    """
    window = window or GaussianWindow(dim=field.dim)
    grid = grid or default_grid_spec(field.dim)
    if window.dim != field.dim or grid.dim != field.dim:
        raise InvalidInputError(
            f"Field, window and grid dimensions differ: {field.dim}, "
            f"{window.dim}, {grid.dim}"
        )
    check_tail(field, tail_threshold)
    check_grid_size(grid)

    space_axes, freq_axes = grid.space_axes(), grid.freq_axes()
    out = field.values
    for k in range(field.dim):
        kernel = _analysis_kernel(window, field.axes[k], space_axes[k], freq_axes[k])
        out = np.tensordot(out, kernel, axes=([0], [2]))
    # contraction order leaves (x1, w1, x2, w2, ...)
    inverse = np.argsort(_interleaved(field.dim))
    values = np.transpose(out, inverse)
    return StftGrid(
        space_axes=space_axes,
        freq_axes=freq_axes,
        window=window,
        values=values,
        sample_axes=list(field.axes),
    )


def window_pairing(
    synthesis: GaussianWindow, analysis: GaussianWindow, sample_axes: Sequence[AxisGrid]
) -> complex:
    """(gamma, g) = int gamma conj(g), by trapezoid rule on the sample grid."""
    pairing = 1.0 + 0.0j
    for axis in sample_axes:
        t = axis.nodes
        integrand = synthesis.profile(t) * np.conj(analysis.profile(t))
        pairing *= complex(np.sum(axis.trapezoid_weights() * integrand))
    return pairing


def istft(
    F: StftGrid,
    synthesis_window: Optional[GaussianWindow] = None,
    sample_axes: Optional[Sequence[AxisGrid]] = None,
) -> SampledField:
    """
    Reconstruct a field from its STFT grid with synthesis window gamma.

    The analysis window is the one recorded on ``F``.

    Raises:
        IllConditionedInversionError: If |(gamma, g)| is below the tolerance.
    """
    synthesis = synthesis_window or F.window
    axes = list(sample_axes or F.sample_axes or [default_sample_axis()] * F.dim)
    pairing = window_pairing(synthesis, F.window, axes)
    if abs(pairing) < MIN_PAIRING:
        raise IllConditionedInversionError(
            f"Window pairing |(gamma, g)| = {abs(pairing):.3e} is below {MIN_PAIRING:.1e}"
        )
    out = np.transpose(F.values, _interleaved(F.dim))
    for k in range(F.dim):
        kernel = _synthesis_kernel(
            synthesis, axes[k], F.space_axes[k], F.freq_axes[k]
        )
        out = np.tensordot(out, kernel, axes=([0, 1], [0, 1]))
    return SampledField(axes, out / pairing)


def _grid_weight(axes: Sequence[AxisGrid], s: float) -> np.ndarray:
    shape = tuple(axis.num for axis in axes)
    return eval_weight(s, mesh_points(axes), vector_axis=-1).reshape(shape)


def _lp_reduce(values: np.ndarray, weights: np.ndarray, p: float) -> np.ndarray:
    """Weighted l^p reduction over the leading ``weights.ndim`` axes."""
    lead = tuple(range(weights.ndim))
    if np.isinf(p):
        return np.max(values, axis=lead)
    summed = np.tensordot(weights, values**p, axes=(lead, lead))
    return summed ** (1.0 / p)


def mixed_norm(F: StftGrid, spec: MixedNormSpec) -> float:
    """
    Grid estimate of the weighted mixed norm of V_g f.

    Inner L^p over space, outer L^q over frequency; an infinite exponent is
    the grid maximum.
    """
    modulus = np.abs(F.values)
    weight = np.multiply.outer(
        _grid_weight(F.space_axes, spec.s1), _grid_weight(F.freq_axes, spec.s2)
    )
    inner = _lp_reduce(modulus * weight, tensor_weights(F.space_axes), spec.p)
    outer = _lp_reduce(inner, tensor_weights(F.freq_axes), spec.q)
    return float(outer)


def modulation_norm(
    field: SampledField,
    spec: MixedNormSpec,
    window: Optional[GaussianWindow] = None,
    grid: Optional[StftGridSpec] = None,
) -> float:
    return mixed_norm(stft(field, window, grid), spec)


def fourier_transform(
    field: SampledField, freq_axes: Sequence[AxisGrid]
) -> SampledField:
    """f^(xi) = int f(x) e^{-2 pi i x xi} dx on the given frequency axes."""
    if len(freq_axes) != field.dim:
        raise InvalidInputError("Frequency axes do not match the field dimension")
    out = field.values
    for k in range(field.dim):
        t = field.axes[k].nodes
        kernel = np.exp(-2j * np.pi * np.outer(freq_axes[k].nodes, t))
        kernel = kernel * field.axes[k].trapezoid_weights()
        out = np.tensordot(out, kernel, axes=([0], [1]))
    return SampledField(list(freq_axes), out)


def barron_norm(
    field: SampledField,
    s: float,
    freq_axes: Optional[Sequence[AxisGrid]] = None,
    tail_threshold: float = TAIL_THRESHOLD,
) -> float:
    """int (1 + |xi|)^s |f^(xi)| d xi by trapezoid rule."""
    check_tail(field, tail_threshold)
    axes = list(freq_axes or [default_barron_axis()] * field.dim)
    transform = fourier_transform(field, axes)
    radius = np.linalg.norm(mesh_points(axes), axis=-1).reshape(transform.values.shape)
    integrand = (1.0 + radius) ** s * np.abs(transform.values)
    total = float(np.sum(tensor_weights(axes) * integrand))
    logger.debug(f"Barron norm s={s}: {total:.6g}")
    return total


def l2_norm(field: SampledField) -> float:
    return float(np.sqrt(np.sum(tensor_weights(field.axes) * np.abs(field.values) ** 2)))
