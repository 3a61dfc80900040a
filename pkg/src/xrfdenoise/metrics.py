"""Error metrics for restored rate volumes."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError
from .volume import CountVolume, RateVolume

PNLL_EPS = 1e-8


def _data(v):
    return v.data if isinstance(v, (RateVolume, CountVolume)) else np.asarray(v)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def mse(est, gt) -> float:
    e, g = _data(est).astype(np.float64), _data(gt).astype(np.float64)
    _same_shape(e, g)
    return float(np.mean((e - g) ** 2))


def psnr(est, gt, peak: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB; the peak defaults to the ground-truth maximum."""
    err = mse(est, gt)
    if peak is None:
        peak = float(np.max(_data(gt)))
    if peak <= 0:
        raise ValueError("peak must be positive")
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / err)


def pnll_metric(est, counts: CountVolume, eps: float = PNLL_EPS) -> float:
    """Mean per-voxel Poisson NLL of the counts under the model mean ``t * est``."""
    e = _data(est).astype(np.float64)
    x = counts.data.astype(np.float64)
    _same_shape(e, x)
    mu = counts.dwell * e
    return float(np.mean(mu - x * np.log(mu + eps)))


def self_pnll(counts: CountVolume, eps: float = PNLL_EPS) -> float:
    """The floor of :func:`pnll_metric`: the counts scored against their own rates."""
    return pnll_metric(counts.data / counts.dwell, counts, eps)


def band_map(v, band) -> np.ndarray:
    """Per-pixel sum over the half-open channel interval ``band = (start, stop)``."""
    arr = _data(v)
    start, stop = band
    if not (0 <= start < stop <= arr.shape[2]):
        raise ValueError(f"band {band} is empty or outside [0, {arr.shape[2]})")
    return arr[:, :, start:stop].sum(axis=2)


def default_bands(channels: int, count: int = 8):
    edges = np.linspace(0, channels, min(count, channels) + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


@dataclass
class BandResult:
    label: str
    mse: float
    psnr: float
    pnll: float | None


@dataclass
class EvalResult:
    mse: float
    psnr: float
    pnll: float | None
    pnll_floor: float | None = None
    bands: list = field(default_factory=list)

    def to_dict(self):
        def num(v):
            if v is None:
                return None
            return "inf" if v == math.inf else v

        return {
            "mse": num(self.mse),
            "psnr": num(self.psnr),
            "pnll": num(self.pnll),
            "pnll_floor": num(self.pnll_floor),
            "bands": [
                {"band": b.label, "mse": num(b.mse), "psnr": num(b.psnr), "pnll": num(b.pnll)}
                for b in self.bands
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["band", "mse", "psnr", "pnll"])
        writer.writerow(["all", repr(self.mse), repr(self.psnr), repr(self.pnll)])
        for b in self.bands:
            writer.writerow([b.label, repr(b.mse), repr(b.psnr), repr(b.pnll)])
        return buf.getvalue()


def evaluate(est: RateVolume, gt: RateVolume, counts: CountVolume | None = None, bands=None):
    """Whole-volume and per-band MSE, PSNR and (when counts are given) PNLL."""
    _same_shape(est.data, gt.data)
    result = EvalResult(
        mse=mse(est, gt),
        psnr=psnr(est, gt),
        pnll=pnll_metric(est, counts) if counts is not None else None,
        pnll_floor=self_pnll(counts) if counts is not None else None,
    )
    for start, stop in bands or ():
        e, g = band_map(est, (start, stop)), band_map(gt, (start, stop))
        peak = float(g.max())
        band_pnll = None
        if counts is not None:
            summed = CountVolume(band_map(counts, (start, stop))[..., None], counts.dwell)
            band_pnll = pnll_metric(e[..., None], summed)
        result.bands.append(
            BandResult(
                label=f"{start}:{stop}",
                mse=mse(e, g),
                psnr=psnr(e, g, peak) if peak > 0 else (math.inf if mse(e, g) == 0 else -math.inf),
                pnll=band_pnll,
            )
        )
    return result
