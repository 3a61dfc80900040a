"""MCR-ALS baseline: non-negative factorization under a Frobenius loss.

Alternates exact NNLS solves for the abundances (per pixel) and the dictionary
(per channel), starting from the K-means dictionary. Every half-step is an
exact constrained minimization, so the residual never increases.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dictinit import KMeansConfig, NnlsConfig, kmeans_dictionary, nnls_matrix
from .exceptions import ConvergenceError, DegenerateAtomError, InvariantError
from .volume import Abundance, CountVolume, Dictionary, RateVolume, to_matrix, to_volume


@dataclass(frozen=True)
class McrConfig:
    atoms: int = 37
    max_outer: int = 200
    tol: float = 1e-5
    seed: int = 0
    nnls: NnlsConfig = NnlsConfig()

    def __post_init__(self):
        if self.atoms < 1 or self.max_outer < 1 or self.tol <= 0:
            raise InvariantError("atoms, max_outer and tol must be positive")


@dataclass
class McrReport:
    iterations: int
    loss_trace: list
    half_steps: list = field(default_factory=list)
    reseeded: list = field(default_factory=list)
    stopped_by: str = "max_outer"

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


#: rounding slack allowed when asserting that a half-step did not increase the loss,
#: relative to the previous residual and to ||X||_F^2 respectively
MONOTONE_SLACK = 1e-9
MONOTONE_FLOOR = 1e-13


def _fro2(x, d, a):
    r = x - d @ a
    return float(np.sum(r * r))


def mcr_als(x: CountVolume, cfg: McrConfig = McrConfig(), d0: Dictionary | None = None):
    """Factorize the counts of ``x`` as ``D A`` with both factors non-negative.

    Returns
    -------
    d : Dictionary
    a : Abundance
    rates : RateVolume
        ``D A / t`` in volume layout.
    report : McrReport
        ``half_steps`` holds the squared Frobenius residual after every half-step.
    """
    H, W, _ = x.shape
    X = to_matrix(x).astype(np.float64)
    if d0 is None:
        d0 = kmeans_dictionary(X, KMeansConfig(clusters=cfg.atoms, seed=cfg.seed))
    D = np.array(d0.data)
    reseeded = []
    half = []
    trace = []
    stopped_by = "max_outer"
    A = np.zeros((D.shape[1], X.shape[1]))
    previous = None
    floor = MONOTONE_FLOOR * float(np.sum(X * X))
    for outer in range(cfg.max_outer):
        dead = np.flatnonzero(~np.any(D > 0, axis=0))
        if dead.size:
            D = _reseed(D, A, X, dead, reseeded)
        A = nnls_matrix(D, X, cfg.nnls, what="pixel")
        _push_monotone(half, _fro2(X, D, A), floor, fresh=dead.size > 0)
        D = nnls_matrix(A.T, X.T, cfg.nnls, what="channel").T
        current = _fro2(X, D, A)
        _push_monotone(half, current, floor)
        trace.append(current)
        if current == 0.0 or (previous is not None and previous - current <= cfg.tol * previous):
            stopped_by = "tol"
            break
        previous = current
    dead = np.flatnonzero(~np.any(D > 0, axis=0))
    if dead.size:
        # an unused atom contributes nothing; its abundance row is already zero
        A[dead] = 0.0
    report = McrReport(len(trace), trace, half, reseeded, stopped_by)
    rates = RateVolume(to_volume(D @ A / x.dwell, H, W))
    return Dictionary(D), Abundance(A), rates, report


def _push_monotone(half, value, floor, fresh=False):
    # a reseed replaces the dictionary, so the comparison restarts there
    if half and not fresh and value > half[-1] * (1.0 + MONOTONE_SLACK) + floor:
        raise ConvergenceError(
            f"half-step {len(half)} increased the residual from {half[-1]!r} to {value!r}"
        )
    half.append(value)


def _reseed(D, A, X, dead, history):
    """Replace dead atoms by the worst-fit pixel spectra, once per atom."""
    D = D.copy()
    resid = np.linalg.norm(X - D @ A, axis=0)
    for j in dead:
        if j in history:
            raise DegenerateAtomError(f"atom {int(j)} collapsed to zero twice")
        n = int(np.argmax(resid))
        if not np.any(X[:, n] > 0):
            raise DegenerateAtomError(f"no non-zero spectrum left to reseed atom {int(j)}")
        D[:, j] = X[:, n]
        resid[n] = -1.0
        history.append(int(j))
    return D
