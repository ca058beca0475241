from modulation_lab.training.loop import (
    RunRecord,
    make_training_data,
    train,
    train_seeds,
)
from modulation_lab.training.optimizers import AdamState, adam_step
from modulation_lab.training.scheduler import PlateauState, plateau_scheduler_step

__all__ = [
    "AdamState",
    "PlateauState",
    "RunRecord",
    "adam_step",
    "make_training_data",
    "plateau_scheduler_step",
    "train",
    "train_seeds",
]
