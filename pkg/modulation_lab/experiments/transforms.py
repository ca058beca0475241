import os
from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd
from loguru import logger

from modulation_lab.dictionary import verify_phase_identity
from modulation_lab.domain.experiment import ExperimentConfig
from modulation_lab.domain.grid import SampledField, StftGrid
from modulation_lab.exceptions import FileOperationError
from modulation_lab.stft import MixedNormSpec, istft, l2_norm, mixed_norm, stft
from modulation_lab.utils import child_rng, ensure_folder

ROUND_TRIP_TOLERANCE = 1e-6
PHASE_TOLERANCE = 1e-6


@dataclass
class RoundTrip:
    field: SampledField
    transform: StftGrid
    reconstruction: SampledField
    relative_error: float
    modulation_norm: float

    @property
    def passed(self) -> bool:
        return self.relative_error < ROUND_TRIP_TOLERANCE


def stft_round_trip(config: ExperimentConfig) -> RoundTrip:
    """Sample the target, transform, invert, and compare in L2."""
    target = config.build_target()
    field = SampledField.from_function(target, config.grid.sample_axes(config.dim))
    transform = stft(field, grid=config.grid.spec(config.dim))
    reconstruction = istft(transform)
    difference = SampledField(field.axes, reconstruction.values - field.values)
    relative = l2_norm(difference) / l2_norm(field)
    norm = mixed_norm(transform, MixedNormSpec(p=1.0, q=1.0))
    logger.info(f"STFT round trip: relative L2 error {relative:.3e}, M^1 norm {norm:.6g}")
    return RoundTrip(
        field=field,
        transform=transform,
        reconstruction=reconstruction,
        relative_error=float(relative),
        modulation_norm=norm,
    )


def save_round_trip(result: RoundTrip, out_dir: str) -> List[str]:
    """Field as binary and CSV; the STFT table only in 1-D, where it stays small."""
    ensure_folder(out_dir)
    paths = [result.field.save(os.path.join(out_dir, "field.bin"))]
    tables = [("field.csv", result.field.to_frame)]
    if result.field.dim == 1:
        tables.append(("stft.csv", result.transform.to_frame))
    for name, build in tables:
        path = os.path.join(out_dir, name)
        try:
            build().to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            logger.error(f"Error writing {path}: {str(e)}")
            logger.exception(e)
            raise FileOperationError(e)
        paths.append(path)
    return paths


def phase_identity_battery(
    config: ExperimentConfig, count: int = 100, reach: float = 3.0
) -> pd.DataFrame:
    """Residuals of the phase identity for random (eta, x) with |eta|, |x| <= reach."""
    rng = child_rng(config.seeds[0], 0)
    constants = config.sampling_constants()
    dim = config.dim
    rows = []
    for _ in range(count):
        eta = rng.uniform(-reach, reach, size=dim)
        x = rng.uniform(-reach, reach, size=dim)
        result = verify_phase_identity(
            eta, x, constants, b_truncation=config.maurey.b_truncation
        )
        rows.append(
            {
                **{f"eta{k}": eta[k] for k in range(dim)},
                **{f"x{k}": x[k] for k in range(dim)},
                "residual": result.residual,
            }
        )
    frame = pd.DataFrame(rows)
    logger.info(
        f"Phase identity over {count} points: max residual {frame['residual'].max():.3e}"
    )
    return frame


def max_residual(frame: pd.DataFrame) -> float:
    return float(np.max(frame["residual"]))
