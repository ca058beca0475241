"""
Verification suite for the closed-form ReLU STFT.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from modulation_lab.domain.grid import AxisGrid
from modulation_lab.relu_stft import (
    BoundsReport,
    FaddeevaFn,
    check_condition_A,
    faddeeva,
    relu_stft,
    relu_stft_quadrature,
    verify_bounds,
)

QUADRATURE_TOLERANCE = 1e-8
ORIGIN_TOLERANCE = 1e-12
ORIGIN_VALUE = 1.0 / (2.0 * np.pi)


@dataclass
class AppendixResult:
    max_deviation: float
    worst_point: Tuple[float, float]
    origin_value: complex
    bounds: BoundsReport
    condition_magnitudes: Tuple[float, float]
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def perturbed_faddeeva(relative: float = 1e-6) -> FaddeevaFn:
    """A Faddeeva kernel with a relative error, for exercising the failure path."""

    def kernel(z):
        return faddeeva(z) * (1.0 + relative)

    return kernel


def compare_with_quadrature(
    axis: AxisGrid, faddeeva_fn: FaddeevaFn = faddeeva
) -> Tuple[float, Tuple[float, float], Optional[Tuple[float, float]]]:
    """
    Max |closed form - quadrature| over axis x axis, the point where it
    occurs, and the first point (row-major) above the tolerance.
    """
    xs, ws = np.meshgrid(axis.nodes, axis.nodes, indexing="ij")
    xs, ws = xs.ravel(), ws.ravel()
    closed = relu_stft(xs, ws, faddeeva_fn=faddeeva_fn).value
    oracle = relu_stft_quadrature(xs, ws)
    deviation = np.abs(closed - oracle)
    worst = int(np.argmax(deviation))
    failing = np.flatnonzero(deviation >= QUADRATURE_TOLERANCE)
    first = (float(xs[failing[0]]), float(ws[failing[0]])) if failing.size else None
    return float(deviation[worst]), (float(xs[worst]), float(ws[worst])), first


def run_appendix_checks(
    faddeeva_fn: FaddeevaFn = faddeeva,
    quadrature_axis: Optional[AxisGrid] = None,
    bounds_axis: Optional[AxisGrid] = None,
) -> AppendixResult:
    quadrature_axis = quadrature_axis or AxisGrid(start=-3.0, stop=3.0, num=41)
    bounds_axis = bounds_axis or AxisGrid(start=-4.0, stop=4.0, num=101)
    failures: List[str] = []

    max_deviation, worst, first = compare_with_quadrature(quadrature_axis, faddeeva_fn)
    if first is not None:
        failures.append(
            f"closed form differs from quadrature by {max_deviation:.3e} "
            f"(first failing point x={first[0]:.4f}, omega={first[1]:.4f})"
        )

    origin = complex(relu_stft(0.0, 0.0, faddeeva_fn=faddeeva_fn).value)
    if abs(origin - ORIGIN_VALUE) > ORIGIN_TOLERANCE:
        failures.append(f"value at (0, 0) is {origin.real:.15f}, expected 1/(2 pi)")

    bounds = verify_bounds(bounds_axis, bounds_axis, faddeeva_fn=faddeeva_fn)
    if bounds.reference_violations:
        worst_bound = int(np.argmax(bounds.reference_deviation))
        failures.append(
            f"bounds grid: {bounds.reference_violations} points off the reference "
            f"quadrature, worst {bounds.max_reference_deviation:.3e} at "
            f"x={bounds.x[worst_bound]:.4f}, omega={bounds.omega[worst_bound]:.4f}"
        )
    if bounds.triangle_violations:
        point = np.column_stack([bounds.x, bounds.omega])[
            np.argmin(bounds.abs_value - bounds.lower_bound + bounds.term1_abs)
        ]
        failures.append(
            f"{bounds.triangle_violations} triangle-bound violations "
            f"(worst at x={point[0]:.4f}, omega={point[1]:.4f})"
        )

    magnitudes = []
    for normalization in ("canonical", "unit"):
        condition = check_condition_A(normalization=normalization)
        magnitudes.append(condition.magnitude)
        if not condition.holds:
            failures.append(f"Condition (A) fails for the {normalization} window")

    if failures:
        logger.error(f"Appendix checks failed: {failures[0]}")
    else:
        logger.info(
            f"Appendix checks passed: max deviation {max_deviation:.3e}, "
            f"{bounds.lower_bound_violations} lower-bound violations reported"
        )
    return AppendixResult(
        max_deviation=max_deviation,
        worst_point=worst,
        origin_value=origin,
        bounds=bounds,
        condition_magnitudes=(magnitudes[0], magnitudes[1]),
        failures=failures,
    )
