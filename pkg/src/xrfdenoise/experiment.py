"""Restoration pipeline and the dwell-time sweep shared by the CLI and the experiments.

A sweep starts from a long reference scan ``Y``. Its rates ``Y / t_ref`` are the
ground truth. Each speedup factor ``f`` simulates a fast scan at ``t_ref / f``
from those rates, and every method is scored against them: MSE and PSNR on the
rates, PNLL against the reference counts.
"""

from __future__ import annotations

import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .baseline import McrConfig, mcr_als
from .dictinit import KMeansConfig, NnlsConfig, kmeans_dictionary, nnls_abundance
from .exceptions import DimensionError
from .metrics import mse, pnll_metric, psnr
from .objective import ObjectiveConfig
from .scansim import SimConfig, ground_truth_rates, simulate_scan, speedup_dwell
from .solver import SolverConfig, recover_rates, solve
from .volume import CountVolume, RateVolume, RgbImage, to_matrix

METHODS = ("raw", "mcr-als", "ours")


def scan_seed(seed: int, factor: float) -> int:
    """64-bit simulation seed of the scan at ``factor``.

    It depends on the factor value rather than its position in the grid, so a
    single-factor rerun reproduces that row of a larger sweep.
    """
    bits = struct.unpack("<Q", struct.pack("<d", float(factor)))[0]
    return int(np.random.SeedSequence([int(seed), bits]).generate_state(1, np.uint64)[0])


@dataclass
class Restoration:
    dictionary: object
    abundance: object
    rates: RateVolume
    report: object
    init: tuple


def initialize(counts: CountVolume, atoms: int, seed: int = 0, kmeans_iters: int = 100,
               normalize: str = "none", nnls: NnlsConfig = NnlsConfig()):
    """K-means dictionary and NNLS abundances for ``counts``."""
    x_mat = to_matrix(counts).astype(np.float64)
    d0 = kmeans_dictionary(
        x_mat, KMeansConfig(clusters=atoms, max_iters=kmeans_iters, seed=seed, normalize=normalize)
    )
    return d0, nnls_abundance(x_mat, d0, nnls)


def denoise(counts: CountVolume, rgb: RgbImage, atoms: int, seed: int = 0,
            obj_cfg: ObjectiveConfig = ObjectiveConfig(), solver_cfg: SolverConfig = SolverConfig(),
            init=None) -> Restoration:
    """Initialize (unless ``init`` is given) and solve; returns factors, rates and report."""
    H, W, _ = counts.shape
    if rgb.shape[:2] != (H, W):
        raise DimensionError(f"rgb image is {rgb.shape[:2]} but the volume is {(H, W)}")
    d0, a0 = init if init is not None else initialize(counts, atoms, seed)
    d, a, report = solve(counts, rgb, d0, a0, obj_cfg, solver_cfg)
    return Restoration(d, a, recover_rates(d, a, counts.dwell, H, W), report, (d0, a0))


@dataclass
class SweepRow:
    dwell: float
    factor: float
    method: str
    mse: float
    psnr: float
    pnll: float
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def csv_fields(self):
        return [repr(self.dwell), repr(self.factor), self.method,
                _num(self.mse), _num(self.psnr), _num(self.pnll)]


CSV_HEADER = ["dwell", "factor", "method", "mse", "psnr", "pnll"]


def _num(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def sweep(reference: CountVolume, rgb: RgbImage, factors, seed: int = 0, atoms: int = 37,
          obj_cfg: ObjectiveConfig = ObjectiveConfig(), solver_cfg: SolverConfig = SolverConfig(),
          mcr_cfg: McrConfig | None = None, methods=METHODS, on_row=None):
    """Score every method at every speedup factor against the reference scan.

    Parameters
    ----------
    reference : CountVolume
        The long acquisition; its rates are the ground truth.
    factors : iterable of float
        Speedups relative to ``reference.dwell``.
    on_row : callable, optional
        Called with each :class:`SweepRow` as soon as it is scored.

    Returns
    -------
    list of SweepRow
        One row per (factor, method), factors in the given order.
    """
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; choose from {list(METHODS)}")
    gt = ground_truth_rates(reference)
    mcr_cfg = mcr_cfg or McrConfig(atoms=atoms, seed=seed)
    rows = []

    def emit(row):
        rows.append(row)
        if on_row is not None:
            on_row(row)

    for factor in factors:
        dwell = speedup_dwell(reference.dwell, factor)
        start = time.perf_counter()
        counts = simulate_scan(gt, SimConfig(dwell, scan_seed(seed, factor)))

        def score(method, est, begun, details):
            emit(SweepRow(dwell, factor, method, mse(est, gt), psnr(est, gt),
                          pnll_metric(est, reference), time.perf_counter() - begun, details))

        if "raw" in methods:
            score("raw", ground_truth_rates(counts), start, {})
        init = None
        if "mcr-als" in methods or "ours" in methods:
            init = initialize(counts, atoms, seed)
        if "mcr-als" in methods:
            begun = time.perf_counter()
            _, _, rates, rep = mcr_als(counts, mcr_cfg, d0=init[0])
            score("mcr-als", rates, begun,
                  {"iterations": rep.iterations, "stopped_by": rep.stopped_by,
                   "final_loss": rep.loss_trace[-1] if rep.loss_trace else None})
        if "ours" in methods:
            begun = time.perf_counter()
            res = denoise(counts, rgb, atoms, seed, obj_cfg, solver_cfg, init=init)
            score("ours", res.rates, begun,
                  {"iterations": res.report.iterations, "best_iteration": res.report.best_iteration,
                   "stopped_by": res.report.stopped_by, "final_loss": res.report.best_loss})
    return rows
