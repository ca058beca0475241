import time
from concurrent.futures import ThreadPoolExecutor
from typing import ClassVar, List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from modulation_lab.config import setting
from modulation_lab.domain.base import ArtifactModel
from modulation_lab.domain.experiment import ExperimentConfig
from modulation_lab.domain.grid import AxisGrid, mesh_points
from modulation_lab.exceptions import NonFiniteLossError
from modulation_lab.networks import (
    ModulationNetwork,
    PlainReluNetwork,
    ShallowNetwork,
    TrainingBatch,
    network_class,
)
from modulation_lab.sobolev import Box
from modulation_lab.targets import Target
from modulation_lab.training.optimizers import AdamState, adam_step
from modulation_lab.training.scheduler import PlateauState, plateau_scheduler_step
from modulation_lab.utils import child_rng, human_duration

MAX_WORKERS = int(setting("training", "max_workers", 4))

DATA_STREAM = 0
INIT_STREAM = 1
HOLDOUT_STREAM = 2


class RunRecord(ArtifactModel):
    """
    One training run. ``losses[k]`` is the full-batch H1 loss after k epochs,
    ``lrs[k]`` the learning rate in force at that point.
    """

    artifact_name: ClassVar[str] = "run"

    model_kind: str
    seed: int
    units: int
    parameter_count: int
    losses: List[float]
    lrs: List[float]
    final_parameters: np.ndarray
    wall_time: float
    holdout_loss: Optional[float] = None

    @property
    def epochs(self) -> int:
        return len(self.losses) - 1

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    def run_suffix(self) -> str:
        return f"_{self.model_kind}_{self.units}_seed{self.seed}"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "epoch": np.arange(len(self.losses)),
                "loss": self.losses,
                "lr": self.lrs,
            }
        )


def make_training_data(
    target: Target, box: Box, samples: int, seed: int, holdout: bool = False
) -> TrainingBatch:
    """
    1-D: uniform random points from the seed's data stream (holdout uses its
    own stream). 2-D: a uniform grid of about ``samples`` points; the holdout
    set is the grid of cell midpoints.
    """
    if box.dim == 1:
        rng = child_rng(seed, HOLDOUT_STREAM if holdout else DATA_STREAM)
        return TrainingBatch.from_target(target, box.sample(rng, samples))

    per_axis = max(int(round(samples ** (1.0 / box.dim))), 2)
    axes = box.axes(per_axis)
    if holdout:
        axes = [
            AxisGrid(
                start=axis.start + axis.spacing / 2,
                stop=axis.stop - axis.spacing / 2,
                num=axis.num - 1,
            )
            for axis in axes
        ]
    return TrainingBatch.from_target(target, mesh_points(axes))


def build_network(
    kind: str, units: int, config: ExperimentConfig, seed: int
) -> ShallowNetwork:
    rng = child_rng(seed, INIT_STREAM)
    if network_class(kind) is ModulationNetwork:
        constants = config.training_constants()
        return ModulationNetwork.initialize(
            units, config.dim, config.box, rng, t=constants.t, tau=constants.tau
        )
    return PlainReluNetwork.initialize(units, config.dim, config.box, rng)


def _check_finite(epoch: int, loss: float, grad: Optional[np.ndarray] = None) -> None:
    if not np.isfinite(loss) or (grad is not None and not np.all(np.isfinite(grad))):
        logger.error(f"Training diverged at epoch {epoch} with loss {loss}")
        raise NonFiniteLossError(epoch, loss)


def train(
    kind: str,
    target: Target,
    config: ExperimentConfig,
    seed: int,
    units: Optional[int] = None,
) -> RunRecord:
    """
    Full-batch Adam/AdamW training of one network on the H1 loss.

    Deterministic for a given (kind, units, seed, config).
    """
    if units is None:
        units = (
            config.training.modulation_units
            if kind == "modulation"
            else config.training.plain_units
        )
    started = time.perf_counter()
    model = build_network(kind, units, config, seed)
    batch = make_training_data(target, config.box, config.training.samples, seed)

    params = model.to_vector()
    state = AdamState.fresh(params.size)
    lr = config.optimizer.lr
    schedule = PlateauState(lr=lr)
    losses: List[float] = []
    lrs: List[float] = []

    for epoch in range(config.training.epochs):
        loss, grad = model.loss_and_grad(batch)
        _check_finite(epoch, loss, grad)
        losses.append(loss)
        lrs.append(lr)
        state, params = adam_step(state, params, grad, config.optimizer, lr=lr)
        model.set_vector(params)
        if config.training.use_scheduler:
            schedule, lr = plateau_scheduler_step(schedule, loss, config.scheduler)
        if epoch % config.training.log_every == 0:
            logger.debug(
                f"{kind}[{units}] seed {seed} epoch {epoch}: loss {loss:.6e} lr {lr:.3e}"
            )

    final = model.loss(batch)
    _check_finite(config.training.epochs, final)
    losses.append(final)
    lrs.append(lr)

    holdout_loss = None
    if config.training.holdout:
        holdout = make_training_data(
            target, config.box, config.training.samples, seed, holdout=True
        )
        holdout_loss = model.loss(holdout)

    wall_time = time.perf_counter() - started
    logger.info(
        f"Trained {kind} network ({model.count_params()} params, seed {seed}) "
        f"for {config.training.epochs} epochs in {human_duration(wall_time)}: "
        f"final loss {final:.4e}"
    )
    return RunRecord(
        model_kind=kind,
        seed=seed,
        units=units,
        parameter_count=model.count_params(),
        losses=losses,
        lrs=lrs,
        final_parameters=model.to_vector(),
        wall_time=wall_time,
        holdout_loss=holdout_loss,
    )


def train_seeds(
    kind: str,
    target: Target,
    config: ExperimentConfig,
    units: int,
    seeds: Optional[Sequence[int]] = None,
    max_workers: int = MAX_WORKERS,
) -> List[RunRecord]:
    """Independent runs for every seed, returned in seed order."""
    seeds = list(seeds if seeds is not None else config.seeds)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(
            executor.map(lambda seed: train(kind, target, config, seed, units), seeds)
        )
