import math
from dataclasses import dataclass, field
from typing import List, Tuple

from modulation_lab.domain.experiment import PlateauSchedulerConfig


@dataclass
class PlateauState:
    lr: float
    best: float = math.inf
    num_bad_epochs: int = 0
    cooldown_counter: int = 0
    epoch: int = -1
    reductions: List[int] = field(default_factory=list)


def plateau_scheduler_step(
    state: PlateauState, epoch_loss: float, config: PlateauSchedulerConfig
) -> Tuple[PlateauState, float]:
    """
    Reduce-on-plateau update after one epoch.

    A loss improves when it is strictly below best * (1 - threshold). Once more
    than ``patience`` epochs pass without improvement, lr becomes
    max(lr * factor, min_lr) and the bad-epoch count is suppressed for
    ``cooldown`` epochs.
    """
    epoch = state.epoch + 1
    best = state.best
    bad = state.num_bad_epochs
    cooldown = state.cooldown_counter
    lr = state.lr
    reductions = list(state.reductions)

    if epoch_loss < best * (1.0 - config.threshold):
        best = epoch_loss
        bad = 0
    else:
        bad += 1

    if cooldown > 0:
        cooldown -= 1
        bad = 0

    if bad > config.patience:
        reduced = max(lr * config.factor, config.min_lr)
        if reduced < lr:
            lr = reduced
            reductions.append(epoch)
        cooldown = config.cooldown
        bad = 0

    new_state = PlateauState(
        lr=lr,
        best=best,
        num_bad_epochs=bad,
        cooldown_counter=cooldown,
        epoch=epoch,
        reductions=reductions,
    )
    return new_state, lr
