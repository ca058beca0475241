"""
N-term approximants by Monte-Carlo sampling of the representing measure.

The STFT inversion integral, rewritten with the phase identity, is an
integral of weighted atoms rho / theta against the measure with density
kappa e^{-2 pi i b tau} theta(eta, b) V f(y, eta). Sampling (y, eta) from the
grid cells in proportion to |kappa V| w_cell I(eta), then b from theta(eta, .)
/ I(eta), and giving every atom the coefficient (M / N) x phase is importance
sampling of that integral: unbiased, with l1 coefficient mass exactly M.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, model_validator

from modulation_lab.config import setting
from modulation_lab.dictionary import (
    RELU,
    AtomParams,
    FixedConstants,
    GlobalWeightSpec,
    LocalWeightSpec,
    atom_grad,
    atoms_frame,
    representation_constant,
)
from modulation_lab.domain.grid import (
    AxisGrid,
    SampledField,
    StftGrid,
    StftGridSpec,
    mesh_points,
)
from modulation_lab.exceptions import (
    DegenerateSamplerError,
    FileOperationError,
    InvalidInputError,
)
from modulation_lab.sobolev import (
    Box,
    FunctionChannels,
    QuadratureRule,
    RateReport,
    SobolevSpec,
    fit_rate,
    grid_rule,
    sobolev_error,
)
from modulation_lab.stft import default_grid_spec, default_sample_axis, stft
from modulation_lab.targets import Target
from modulation_lab.utils import human_duration, is_geometric
from modulation_lab.windows import BreakpointActivation, GaussianWindow

B_TRUNCATION = float(setting("maurey", "b_truncation", 40.0))
TABLE_SIZE = int(setting("maurey", "table_size", 4096))
MAX_WORKERS = int(setting("maurey", "max_workers", 8))


class SamplingPlan(BaseModel):
    grid: StftGridSpec = Field(default_factory=default_grid_spec)
    weight: Union[LocalWeightSpec, GlobalWeightSpec] = Field(
        default_factory=lambda: LocalWeightSpec(radius=3.0), discriminator="kind"
    )
    constants: FixedConstants = Field(default_factory=FixedConstants)
    domain: Box = Field(default_factory=lambda: Box.symmetric(3.0))
    b_truncation: float = Field(default=B_TRUNCATION, gt=0)
    table_size: int = Field(default=TABLE_SIZE, ge=16)

    @model_validator(mode="after")
    def check_geometry(self) -> "SamplingPlan":
        if self.domain.dim != self.grid.dim:
            raise ValueError("Domain and STFT grid dimensions differ")
        if isinstance(self.weight, LocalWeightSpec):
            if self.weight.radius < self.domain.radius - 1e-12:
                raise ValueError(
                    f"Local weight radius {self.weight.radius} is below the domain "
                    f"radius {self.domain.radius}"
                )
        return self


@dataclass
class BTable:
    """Per-eta tables of theta on a b grid with the matching trapezoid CDF."""

    nodes: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    marginal: np.ndarray

    @classmethod
    def build(
        cls,
        weight: Union[LocalWeightSpec, GlobalWeightSpec],
        etas: np.ndarray,
        tau: float,
        truncation: float,
        size: int,
    ) -> "BTable":
        nodes = np.linspace(-truncation, truncation, size)
        density = weight.theta(etas[:, None, :], nodes[None, :], tau)
        step = nodes[1] - nodes[0]
        increments = 0.5 * step * (density[:, 1:] + density[:, :-1])
        cumulative = np.concatenate(
            [np.zeros((density.shape[0], 1)), np.cumsum(increments, axis=1)], axis=1
        )
        marginal = cumulative[:, -1].copy()
        return cls(
            nodes=nodes,
            density=density,
            cdf=cumulative / marginal[:, None],
            marginal=marginal,
        )

    def sample(self, rows: np.ndarray, u: np.ndarray):
        """
        Inverse-CDF draws from the piecewise-linear density of each row.

        Returns the b values and the table density theta at each draw.
        """
        step = self.nodes[1] - self.nodes[0]
        cells = np.empty(rows.shape, dtype=int)
        for row in np.unique(rows):
            mask = rows == row
            idx = np.searchsorted(self.cdf[row], u[mask], side="right") - 1
            cells[mask] = np.clip(idx, 0, self.nodes.size - 2)
        left = self.density[rows, cells]
        right = self.density[rows, cells + 1]
        slope = (right - left) / step
        remainder = (u - self.cdf[rows, cells]) * self.marginal[rows]
        remainder = np.maximum(remainder, 0.0)
        root = np.sqrt(np.maximum(left * left + 2.0 * slope * remainder, 0.0))
        offset = np.clip(2.0 * remainder / (left + root), 0.0, step)
        return self.nodes[cells] + offset, left + slope * offset


@dataclass
class MaureySampler:
    plan: SamplingPlan
    stft_grid: StftGrid
    cell_y: np.ndarray
    cell_eta: np.ndarray
    cell_table: np.ndarray
    probabilities: np.ndarray
    phases: np.ndarray
    tables: BTable
    mass: float

    @property
    def variation_estimate(self) -> float:
        return self.mass

    @property
    def dim(self) -> int:
        return self.cell_y.shape[1]


def build_sampler(samples: SampledField, plan: SamplingPlan) -> MaureySampler:
    """
    Tabulate the sampling distribution of a field's representing measure.

    Raises:
        DegenerateSamplerError: If the measure has zero total mass.
    """
    constants = plan.constants
    window = GaussianWindow(dim=samples.dim, normalization=constants.normalization)
    F = stft(samples, window, plan.grid)
    ys = mesh_points(F.space_axes)
    etas = mesh_points(F.freq_axes)
    values = F.values.reshape(len(ys), len(etas))
    weights = F.cell_weights().reshape(len(ys), len(etas))

    tables = BTable.build(
        plan.weight, etas, constants.tau, plan.b_truncation, plan.table_size
    )
    kappa = representation_constant(constants, samples.dim)
    cell_mass = abs(kappa) * np.abs(values) * weights * tables.marginal[None, :]
    if plan.weight.restricts_centers:
        cell_mass[~plan.domain.contains(ys), :] = 0.0
    mass = float(np.sum(cell_mass))
    if not np.isfinite(mass) or mass <= 0.0:
        raise DegenerateSamplerError("Representing measure has zero total mass")

    support = np.flatnonzero(cell_mass.ravel())
    y_index, eta_index = np.divmod(support, len(etas))
    density = kappa * values.ravel()[support]
    logger.debug(
        f"Sampler over {support.size} cells, mass estimate {mass:.6g}, "
        f"|kappa| {abs(kappa):.6g}"
    )
    return MaureySampler(
        plan=plan,
        stft_grid=F,
        cell_y=ys[y_index],
        cell_eta=etas[eta_index],
        cell_table=eta_index,
        probabilities=cell_mass.ravel()[support] / mass,
        phases=density / np.abs(density),
        tables=tables,
        mass=mass,
    )


@dataclass
class Approximant:
    """Real part of sum_j c_j rho_j / theta_j plus a constant offset."""

    atoms: AtomParams
    coefficients: np.ndarray
    thetas: np.ndarray
    constants: FixedConstants
    offset: float = 0.0
    mass: Optional[float] = None
    activation: BreakpointActivation = RELU

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        self.thetas = np.asarray(self.thetas, dtype=float)
        if self.coefficients.shape != (len(self.atoms),) or self.thetas.shape != (
            len(self.atoms),
        ):
            raise InvalidInputError("One coefficient and one weight per atom required")

    @classmethod
    def from_atoms(
        cls,
        atoms: AtomParams,
        coefficients: Sequence[complex],
        constants: FixedConstants,
        offset: float = 0.0,
    ) -> "Approximant":
        return cls(
            atoms=atoms,
            coefficients=np.asarray(coefficients, dtype=complex),
            thetas=np.ones(len(atoms)),
            constants=constants,
            offset=offset,
        )

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def l1_mass(self) -> float:
        return float(np.sum(np.abs(self.coefficients)))

    def atom_terms(self, points: np.ndarray) -> np.ndarray:
        """Per-atom contributions Re(c_j) rho_j(x) / theta_j, shape (m, N)."""
        values = atom_grad(
            self.atoms, self.constants, points, order=0, activation=self.activation
        ).value
        return values * (self.coefficients.real / self.thetas)[None, :]

    def evaluate(
        self, points: np.ndarray, order: int = 1, chunk: int = 512
    ) -> FunctionChannels:
        scale = self.coefficients.real / self.thetas
        value: Optional[np.ndarray] = None
        gradient: Optional[np.ndarray] = None
        for start in range(0, len(self), chunk):
            part = slice(start, start + chunk)
            derivs = atom_grad(
                self.atoms.subset(part),
                self.constants,
                points,
                order=order,
                activation=self.activation,
            )
            v = derivs.value @ scale[part]
            value = v if value is None else value + v
            if order >= 1 and derivs.gradient is not None:
                g = np.einsum("mnd,n->md", derivs.gradient, scale[part])
                gradient = g if gradient is None else gradient + g
        if value is None:
            raise InvalidInputError("Approximant has no atoms")
        return FunctionChannels(value=value + self.offset, gradient=gradient)

    def to_frame(self) -> pd.DataFrame:
        frame = atoms_frame(self.atoms, self.coefficients)
        frame["theta"] = self.thetas
        return frame

    def save(self, path: str) -> str:
        try:
            self.to_frame().to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            logger.error(f"Error writing approximant to {path}: {str(e)}")
            raise FileOperationError(e)
        return path


def sample_approximant(sampler: MaureySampler, n_atoms: int, seed: int) -> Approximant:
    """Draw ``n_atoms`` i.i.d. atoms; identical seeds give identical approximants."""
    if n_atoms < 1:
        raise InvalidInputError(f"Atom count must be positive, got {n_atoms}")
    rng = np.random.default_rng(seed)
    cells = rng.choice(sampler.probabilities.size, size=n_atoms, p=sampler.probabilities)
    u = rng.random(n_atoms)
    b, thetas = sampler.tables.sample(sampler.cell_table[cells], u)
    tau = sampler.plan.constants.tau
    phases = sampler.phases[cells] * np.exp(-2j * np.pi * b * tau)
    return Approximant(
        atoms=AtomParams(y=sampler.cell_y[cells], eta=sampler.cell_eta[cells], b=b),
        coefficients=(sampler.mass / n_atoms) * phases,
        thetas=thetas,
        constants=sampler.plan.constants,
        mass=sampler.mass,
    )


@dataclass
class RateExperimentResult:
    report: RateReport
    errors: pd.DataFrame
    mass: float


def rate_experiment(
    target: Target,
    plan: SamplingPlan,
    n_values: Sequence[int],
    seeds: Sequence[int],
    spec: SobolevSpec,
    rule: Optional[QuadratureRule] = None,
    sample_axes: Optional[List[AxisGrid]] = None,
    max_workers: int = MAX_WORKERS,
) -> RateExperimentResult:
    """Sobolev error of sampled approximants for every (N, seed), and the fitted rate."""
    if len(n_values) < 4 or not is_geometric(n_values):
        raise InvalidInputError(
            f"Rate experiments need at least 4 geometrically spaced N values, got {list(n_values)}"
        )
    if not seeds:
        raise InvalidInputError("At least one seed is required")
    if target.dim != plan.grid.dim:
        raise InvalidInputError("Target and sampling grid dimensions differ")

    started = time.perf_counter()
    axes = sample_axes or [default_sample_axis()] * target.dim
    sampler = build_sampler(SampledField.from_function(target, axes), plan)
    rule = rule or grid_rule(spec.domain, 601 if target.dim == 1 else 81)
    reference = target.channels(rule.points)

    jobs = [(int(n), int(seed)) for n in n_values for seed in seeds]

    def run(job):
        n_atoms, seed = job
        approx = sample_approximant(sampler, n_atoms, seed)
        channels = approx.evaluate(rule.points, order=min(spec.n, 1))
        return sobolev_error(reference, channels, spec, rule)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        errors = list(executor.map(run, jobs))

    table = np.asarray(errors).reshape(len(n_values), len(seeds))
    report = fit_rate(n_values, table)
    frame = pd.DataFrame(
        {"N": [j[0] for j in jobs], "seed": [j[1] for j in jobs], "error": errors}
    )
    logger.info(
        f"Rate experiment over {len(jobs)} runs in "
        f"{human_duration(time.perf_counter() - started)}: {report.summary()}"
    )
    return RateExperimentResult(report=report, errors=frame, mass=sampler.mass)
