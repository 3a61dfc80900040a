"""Short-dwell raster scan simulation by per-voxel Poisson sampling.

Every voxel draws from its own counter-based stream keyed on
``(seed, h, w, c)``, so a simulation is a pure function of its inputs no matter
how the voxels are scheduled across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

import numpy as np

from . import kernels
from .exceptions import InvariantError
from .volume import CountVolume, RateVolume

#: Reference dwell of the long ground-truth acquisition, seconds per pixel.
REFERENCE_DWELL = 0.285
DEFAULT_FACTORS = (5, 10, 20, 50, 100)
MAX_MEAN = 2.0**31


@dataclass(frozen=True)
class SimConfig:
    dwell: float
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.dwell) and self.dwell > 0):
            raise InvariantError(f"dwell must be positive, got {self.dwell}")
        if not (0 <= int(self.seed) < 2**64):
            raise InvariantError("seed must be an unsigned 64-bit integer")


def ground_truth_rates(y: CountVolume) -> RateVolume:
    """Rates of a long acquisition, counts divided by its dwell."""
    return RateVolume(y.data / y.dwell)


def simulate_scan(rates: RateVolume, cfg: SimConfig) -> CountVolume:
    """Draw ``counts ~ Poisson(cfg.dwell * rates)`` independently per voxel."""
    mean_max = cfg.dwell * float(rates.data.max())
    if mean_max > MAX_MEAN:
        raise InvariantError(f"expected count {mean_max:.3g} exceeds 2**31")
    counts = kernels.poisson_volume(rates.data, cfg.dwell, cfg.seed)
    return CountVolume(counts, cfg.dwell)


def speedup_dwell(t_ref: float, factor: float) -> float:
    """Dwell of a ``factor``-times faster scan.

    The quotient is taken in decimal on the shortest representations, so
    ``speedup_dwell(0.285, 20)`` is the double nearest 0.01425 (plain float
    division lands one ulp below it).
    """
    if factor < 1:
        raise ValueError(f"speedup factor must be >= 1, got {factor}")
    if t_ref <= 0:
        raise ValueError(f"reference dwell must be positive, got {t_ref}")
    return float(Decimal(repr(float(t_ref))) / Decimal(repr(factor)))
