"""
Experiment configuration documents.

A config is a YAML mapping with one section per concern (experiment, target,
domain, grid, sobolev, maurey, training, optimizer, scheduler, output).
Unknown keys are rejected so typos surface as configuration errors.
"""

import os
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from modulation_lab.config import RESULTS_FOLDER
from modulation_lab.dictionary import FixedConstants, GlobalWeightSpec, LocalWeightSpec
from modulation_lab.domain.grid import AxisGrid, StftGridSpec
from modulation_lab.exceptions import (
    ConfigurationError,
    FileOperationError,
    ModulationLabError,
    ParameterCountMismatchError,
)
from modulation_lab.networks import parameter_count
from modulation_lab.sobolev import Box, QuadratureRule, SobolevSpec, grid_rule
from modulation_lab.stft import (
    BOX,
    MAX_GRID_ENTRIES,
    SAMPLE_SPACING,
    default_grid_spacing,
)
from modulation_lab.targets import Target, make_target
from modulation_lab.utils import ensure_folder, is_geometric

CONFIG_ECHO = "config.yaml"


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExperimentSection(Section):
    kind: Literal["rate", "train_compare", "stft", "phase_identity"] = "rate"
    name: str = ""
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)


class TargetConfig(Section):
    id: Literal["target1d", "target2d", "custom"] = "target1d"
    dim: Optional[int] = Field(default=None, ge=1, le=2)
    expression: str = ""

    @model_validator(mode="after")
    def resolve_dim(self) -> "TargetConfig":
        builtin = {"target1d": 1, "target2d": 2}
        if self.id in builtin:
            if self.dim not in (None, builtin[self.id]):
                raise ValueError(f"{self.id} has dimension {builtin[self.id]}")
            self.dim = builtin[self.id]
        elif not self.expression:
            raise ValueError("A custom target needs an expression")
        elif self.dim is None:
            self.dim = 1
        return self

    def build(self) -> Target:
        return make_target(self.id, self.dim or 1, self.expression)


class GridConfig(Section):
    """Sampling box of the target and spacings of the sample and STFT grids."""

    box: Tuple[float, float] = BOX
    sample_spacing: float = Field(default=SAMPLE_SPACING, gt=0)
    grid_spacing: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def check_box(self) -> "GridConfig":
        if self.box[1] <= self.box[0]:
            raise ValueError(f"Empty grid box {self.box}")
        return self

    def sample_axes(self, dim: int) -> List[AxisGrid]:
        return [AxisGrid.from_spacing(self.box[0], self.box[1], self.sample_spacing)] * dim

    def spec(self, dim: int) -> StftGridSpec:
        spacing = self.grid_spacing or default_grid_spacing(dim)
        axis = AxisGrid.from_spacing(self.box[0], self.box[1], spacing)
        return StftGridSpec(space=axis, freq=axis, dim=dim)


class SobolevConfig(Section):
    n: int = Field(default=1, ge=0, le=2)
    r: float = Field(default=2.0, ge=2.0)
    points_per_axis: int = Field(default=601, ge=3)
    diagnostics: bool = False


class MaureyConfig(Section):
    n_values: List[int] = Field(
        default_factory=lambda: [16 * 2**k for k in range(9)]
    )
    weight: Literal["local", "global"] = "local"
    weight_order: int = Field(default=1, ge=0)
    s_local: float = -2.0
    s_global: float = 2.0
    t: float = 0.0
    tau: float = 1.0
    b_truncation: float = Field(default=40.0, gt=0)
    table_size: int = Field(default=4096, ge=16)

    @model_validator(mode="after")
    def check_n_values(self) -> "MaureyConfig":
        if len(self.n_values) < 4 or not is_geometric(self.n_values):
            raise ValueError(
                "n_values needs at least 4 geometrically spaced values, "
                f"got {self.n_values}"
            )
        return self


class TrainingConfig(Section):
    samples: int = Field(default=10000, ge=1)
    epochs: int = Field(default=100000, ge=0)
    log_every: int = Field(default=1000, ge=1)
    modulation_units: int = Field(default=300, ge=1)
    plain_units: int = Field(default=400, ge=1)
    units_sweep: List[Tuple[int, int]] = Field(default_factory=list)
    use_scheduler: bool = False
    holdout: bool = True
    t: float = 0.0
    tau: float = 1.0

    def unit_pairs(self) -> List[Tuple[int, int]]:
        """(modulation units, plain units) pairs to compare, in order."""
        if self.units_sweep:
            return list(self.units_sweep)
        return [(self.modulation_units, self.plain_units)]


class OptimizerConfig(Section):
    """
    Adam or AdamW hyperparameters. ``weight_decay`` defaults to 0.01 for
    AdamW and must stay 0 for Adam.
    """

    kind: Literal["adam", "adamw"] = "adam"
    lr: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, gt=0, lt=1)
    beta2: float = Field(default=0.999, gt=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    weight_decay: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def resolve_weight_decay(self) -> "OptimizerConfig":
        if self.weight_decay is None:
            self.weight_decay = 0.01 if self.kind == "adamw" else 0.0
        elif self.kind == "adam" and self.weight_decay > 0:
            raise ValueError("weight_decay is only available with adamw")
        return self


class PlateauSchedulerConfig(Section):
    factor: float = Field(default=0.9, gt=0, lt=1)
    patience: int = Field(default=100, ge=1)
    cooldown: int = Field(default=200, ge=0)
    min_lr: float = Field(default=1e-8, gt=0)
    threshold: float = Field(default=0.0, ge=0, lt=1)


class OutputConfig(Section):
    directory: Optional[str] = None


class ExperimentConfig(Section):
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    target: TargetConfig = Field(default_factory=TargetConfig)
    domain: Optional[Box] = None
    grid: GridConfig = Field(default_factory=GridConfig)
    sobolev: SobolevConfig = Field(default_factory=SobolevConfig)
    maurey: MaureyConfig = Field(default_factory=MaureyConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    scheduler: PlateauSchedulerConfig = Field(default_factory=PlateauSchedulerConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def check_consistency(self) -> "ExperimentConfig":
        dim = self.dim
        if self.domain is None:
            self.domain = Box.symmetric(3.0, dim)
        if self.domain.dim != dim:
            raise ValueError(
                f"Domain dimension {self.domain.dim} differs from target dimension {dim}"
            )
        if self.grid.grid_spacing is None:
            self.grid.grid_spacing = default_grid_spacing(dim)
        kind = self.experiment.kind
        if kind in ("rate", "stft"):
            entries = self.grid.spec(dim).entries
            if entries > MAX_GRID_ENTRIES:
                raise ValueError(
                    f"grid.grid_spacing {self.grid.grid_spacing} gives {entries:,} STFT "
                    f"values in {dim}-D, above the limit of {MAX_GRID_ENTRIES:,}"
                )
        if kind == "rate":
            self.sampling_constants()
            self.weight_spec()
        if kind == "train_compare":
            self.training_constants()
            for modulation_units, plain_units in self.training.unit_pairs():
                modulation = parameter_count("modulation", modulation_units, dim)
                plain = parameter_count("plain", plain_units, dim)
                if modulation != plain:
                    raise ParameterCountMismatchError(modulation, plain)
        return self

    @property
    def dim(self) -> int:
        return self.target.dim or 1

    @property
    def box(self) -> Box:
        return self.domain or Box.symmetric(3.0, self.dim)

    @property
    def seeds(self) -> List[int]:
        return list(self.experiment.seeds)

    def build_target(self) -> Target:
        return self.target.build()

    def sampling_constants(self) -> FixedConstants:
        return FixedConstants(t=self.maurey.t, tau=self.maurey.tau)

    def training_constants(self) -> FixedConstants:
        return FixedConstants(
            t=self.training.t, tau=self.training.tau, normalization="unit"
        )

    def weight_spec(self):
        if self.maurey.weight == "global":
            return GlobalWeightSpec(n=self.maurey.weight_order, s=self.maurey.s_global)
        radius = max(self.box.radius, 1.0)
        return LocalWeightSpec(
            n=self.maurey.weight_order, s=self.maurey.s_local, radius=radius
        )

    def sobolev_spec(self) -> SobolevSpec:
        return SobolevSpec(
            n=self.sobolev.n,
            r=self.sobolev.r,
            domain=self.box,
            diagnostics=self.sobolev.diagnostics,
        )

    def quadrature_rule(self) -> QuadratureRule:
        per_axis = self.sobolev.points_per_axis
        if self.dim == 2:
            per_axis = min(per_axis, 101)
        return grid_rule(self.box, per_axis)

    def output_dir(self) -> str:
        if self.output.directory:
            return self.output.directory
        name = self.experiment.name or self.experiment.kind
        return os.path.join(RESULTS_FOLDER, name)

    def echo(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def format_validation_error(error: ValidationError) -> str:
    """One ``dotted.path: message`` entry per failed field."""
    parts = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        parts.append(f"{path}: {item['msg']}")
    return "; ".join(parts)


def merge_overrides(data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(data)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_overrides(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_experiment_config(
    data: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("An experiment config must be a mapping of sections")
    data = merge_overrides(data, overrides or {})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(format_validation_error(e))
    except ConfigurationError:
        raise
    except ModulationLabError as e:
        raise ConfigurationError(str(e))


def load_experiment_config(
    path: str, overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    try:
        with open(path, "r") as file:
            data = yaml.safe_load(file) or {}
    except OSError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}")
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Malformed YAML in {path}: {e}")
    config = parse_experiment_config(data, overrides)
    logger.debug(f"Loaded {config.experiment.kind} config from {path}")
    return config


def save_config_echo(config: ExperimentConfig, out_dir: str) -> str:
    path = os.path.join(ensure_folder(out_dir), CONFIG_ECHO)
    try:
        with open(path, "w") as file:
            file.write(config.echo())
    except OSError as e:
        logger.error(f"Error writing config echo {path}: {str(e)}")
        logger.exception(e)
        raise FileOperationError(e)
    return path

