from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from modulation_lab.domain.experiment import OptimizerConfig
from modulation_lab.exceptions import InvalidInputError


@dataclass
class AdamState:
    """First and second moment estimates plus the number of steps taken."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), step=0)


def adam_step(
    state: AdamState,
    params: np.ndarray,
    grads: np.ndarray,
    config: OptimizerConfig,
    lr: Optional[float] = None,
) -> Tuple[AdamState, np.ndarray]:
    """
    One bias-corrected Adam update. For AdamW the decoupled decay
    theta <- theta (1 - lr lambda) is applied before the moment step.
    ``lr`` overrides the configured rate (the scheduler drives it).
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise InvalidInputError(
            f"Shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"moments {state.m.shape}"
        )
    lr = config.lr if lr is None else lr
    step = state.step + 1
    if config.kind == "adamw" and config.weight_decay:
        params = params * (1.0 - lr * config.weight_decay)
    m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    v = config.beta2 * state.v + (1.0 - config.beta2) * grads * grads
    m_hat = m / (1.0 - config.beta1**step)
    v_hat = v / (1.0 - config.beta2**step)
    params = params - lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return AdamState(m=m, v=v, step=step), params
