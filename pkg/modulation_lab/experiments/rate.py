import os

from loguru import logger

from modulation_lab.domain.experiment import ExperimentConfig
from modulation_lab.exceptions import FileOperationError
from modulation_lab.maurey import RateExperimentResult, SamplingPlan, rate_experiment
from modulation_lab.utils import ensure_folder

SLOPE_RANGE = (-0.65, -0.35)
MAX_INVERSIONS = 1


def sampling_plan(config: ExperimentConfig) -> SamplingPlan:
    return SamplingPlan(
        grid=config.grid.spec(config.dim),
        weight=config.weight_spec(),
        constants=config.sampling_constants(),
        domain=config.box,
        b_truncation=config.maurey.b_truncation,
        table_size=config.maurey.table_size,
    )


def run_rate(config: ExperimentConfig) -> RateExperimentResult:
    logger.info(
        f"Rate experiment: {config.maurey.weight} weight, N={config.maurey.n_values}, "
        f"{len(config.seeds)} seeds"
    )
    return rate_experiment(
        config.build_target(),
        sampling_plan(config),
        config.maurey.n_values,
        config.seeds,
        config.sobolev_spec(),
        rule=config.quadrature_rule(),
        sample_axes=config.grid.sample_axes(config.dim),
    )


def rate_within_bounds(result: RateExperimentResult) -> bool:
    report = result.report
    return (
        SLOPE_RANGE[0] <= report.slope <= SLOPE_RANGE[1]
        and report.inversions <= MAX_INVERSIONS
    )


def save_rate(result: RateExperimentResult, out_dir: str) -> str:
    path = result.report.save(out_dir)
    errors_path = os.path.join(ensure_folder(out_dir), "rate_errors.csv")
    try:
        result.errors.to_csv(errors_path, index=False, float_format="%.17g")
    except OSError as e:
        logger.error(f"Error writing {errors_path}: {str(e)}")
        logger.exception(e)
        raise FileOperationError(e)
    return path
