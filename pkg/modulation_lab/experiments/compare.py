"""
Matched-budget comparison of modulation networks and plain ReLU networks.
"""

import os
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from modulation_lab.domain.experiment import ExperimentConfig, save_config_echo
from modulation_lab.exceptions import FileOperationError, ParameterCountMismatchError
from modulation_lab.networks import (
    encode_checkpoint,
    network_class,
    parameter_count,
    write_checkpoint,
)
from modulation_lab.reports import plot_loss_curves
from modulation_lab.training import RunRecord, train_seeds
from modulation_lab.utils import ensure_folder

MODEL_KINDS = ("modulation", "plain")
QUANTILES = [0.25, 0.5, 0.75]


@dataclass
class ComparisonResult:
    runs: Dict[Tuple[str, int], List[RunRecord]]
    curves: pd.DataFrame
    final: pd.DataFrame

    def median_final(self, kind: str, units: int) -> float:
        row = self.final[(self.final["architecture"] == kind) & (self.final["units"] == units)]
        return float(row["median_final_loss"].iloc[0])


def check_budget(modulation_units: int, plain_units: int, dim: int) -> int:
    modulation = parameter_count("modulation", modulation_units, dim)
    plain = parameter_count("plain", plain_units, dim)
    if modulation != plain:
        raise ParameterCountMismatchError(modulation, plain)
    return modulation


def loss_curves(kind: str, units: int, runs: List[RunRecord]) -> pd.DataFrame:
    """Per-epoch median and quartiles of the loss over seeds."""
    traces = pd.DataFrame(np.array([run.losses for run in runs]).T)
    stats = traces.quantile(QUANTILES, axis=1).T
    return pd.DataFrame(
        {
            "epoch": np.arange(len(traces)),
            "model": kind,
            "units": units,
            "median": stats[0.5].to_numpy(),
            "q25": stats[0.25].to_numpy(),
            "q75": stats[0.75].to_numpy(),
        }
    )


def final_row(kind: str, units: int, params: int, runs: List[RunRecord]) -> dict:
    holdout = [run.holdout_loss for run in runs if run.holdout_loss is not None]
    return {
        "architecture": kind,
        "units": units,
        "params": params,
        "median_final_loss": float(np.median([run.final_loss for run in runs])),
        "median_holdout_loss": float(np.median(holdout)) if holdout else np.nan,
    }


def run_train_compare(config: ExperimentConfig) -> ComparisonResult:
    target = config.build_target()
    runs: Dict[Tuple[str, int], List[RunRecord]] = {}
    curves = []
    final = []
    for modulation_units, plain_units in config.training.unit_pairs():
        params = check_budget(modulation_units, plain_units, config.dim)
        for kind, units in zip(MODEL_KINDS, (modulation_units, plain_units)):
            logger.info(f"Training {kind} networks with {units} units ({params} params)")
            records = train_seeds(kind, target, config, units)
            runs[(kind, units)] = records
            curves.append(loss_curves(kind, units, records))
            final.append(final_row(kind, units, params, records))
    final_frame = pd.DataFrame(final)
    for row in final:
        logger.info(
            f"{row['architecture']} [{row['units']} units]: "
            f"median final loss {row['median_final_loss']:.4e}"
        )
    return ComparisonResult(
        runs=runs, curves=pd.concat(curves, ignore_index=True), final=final_frame
    )


def save_comparison(
    result: ComparisonResult, config: ExperimentConfig, out_dir: str
) -> List[str]:
    """comparison.csv, final.csv, loss_curves.svg, per-run tables and checkpoints."""
    ensure_folder(out_dir)
    runs_dir = ensure_folder(os.path.join(out_dir, "runs"))
    paths = [save_config_echo(config, out_dir)]
    for name, frame in (("comparison.csv", result.curves), ("final.csv", result.final)):
        path = os.path.join(out_dir, name)
        try:
            frame.to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            logger.error(f"Error writing {path}: {str(e)}")
            logger.exception(e)
            raise FileOperationError(e)
        paths.append(path)
    paths.append(
        plot_loss_curves(
            result.curves,
            os.path.join(out_dir, "loss_curves.svg"),
            title=f"{config.target.id}: modulation vs plain ReLU",
        )
    )
    for (kind, units), records in result.runs.items():
        for record in records:
            paths.append(record.save(runs_dir, record.run_suffix()))
            checkpoint = os.path.join(runs_dir, f"params{record.run_suffix()}.bin")
            data = encode_checkpoint(
                network_class(kind).kind_code, config.dim, units, record.final_parameters
            )
            paths.append(write_checkpoint(checkpoint, data))
    return paths
