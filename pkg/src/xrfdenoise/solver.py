"""Alternating projected-Adam optimization of the restoration objective.

Each outer iteration takes ``alt_block`` Adam steps on the abundances and one
on the dictionary, clamping both at zero after every step. Abundances whose
dwell-normalized value falls under ``lasso_tau`` are pruned every
``prune_every`` iterations and stay frozen at zero. The loop stops once
``patience`` iterations have passed without improving on the best loss, and the
best iterate (not the last) is returned.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .exceptions import DimensionError, InvariantError, SolverError
from .objective import ObjectiveConfig, grad_a, grad_d, loss_terms, tv_weights
from .volume import Abundance, CountVolume, Dictionary, RateVolume, RgbImage, to_matrix, to_volume


ATOM_NORMS = {
    "none": None,
    "l1": lambda d: np.sum(d, axis=0),
    "l2": lambda d: np.linalg.norm(d, axis=0),
    "max": lambda d: np.max(d, axis=0),
}


def normalize_atoms(D, A, kind="max"):
    """Rescale atoms to unit norm in place, moving the scale into ``A`` so ``DA`` is kept."""
    norm = ATOM_NORMS[kind]
    if norm is None:
        return D, A
    s = norm(D)
    s = np.where(s > 0, s, 1.0)
    D /= s
    A *= s[:, None]
    return D, A


@dataclass(frozen=True)
class SolverConfig:
    """Optimizer settings; ``lr_a``/``lr_d`` of None scale with the initial factors."""

    lr_a: float | None = None
    lr_d: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 100
    max_iters: int = 2000
    lasso_tau: float = 1e-3
    prune_every: int = 200
    alt_block: int = 10
    update_dict: bool = True
    atom_norm: str = "max"

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise InvariantError("beta1 and beta2 must lie in (0, 1)")
        for name in ("adam_eps", "patience", "max_iters", "prune_every", "alt_block"):
            if getattr(self, name) <= 0:
                raise InvariantError(f"{name} must be positive")
        for name in ("lr_a", "lr_d"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise InvariantError(f"{name} must be positive")
        if self.lasso_tau < 0:
            raise InvariantError("lasso_tau must be non-negative")
        if self.atom_norm not in ATOM_NORMS:
            raise InvariantError(f"atom_norm must be one of {sorted(ATOM_NORMS)}")


@dataclass
class AdamState:
    """First/second moments and step count for one parameter block."""

    lr: float
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def zeros(cls, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(lr, np.zeros(shape), np.zeros(shape), beta1, beta2, eps)

    def update(self, x, g, mask=None):
        """Adam step on ``x`` in place followed by projection onto ``x >= 0``."""
        if not np.all(np.isfinite(g)):
            raise SolverError("non-finite gradient")
        self.step += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * g * g
        mhat = self.m / (1.0 - self.beta1**self.step)
        vhat = self.v / (1.0 - self.beta2**self.step)
        delta = self.lr * mhat / (np.sqrt(vhat) + self.eps)
        if mask is not None:
            delta[~mask] = 0.0
        x -= delta
        np.maximum(x, 0.0, out=x)
        return x


@dataclass
class SolveReport:
    iterations: int
    best_iteration: int
    loss_trace: list
    pruned: list = field(default_factory=list)
    final_terms: dict = field(default_factory=dict)
    stopped_by: str = "max_iters"

    @property
    def best_loss(self):
        return min(self.loss_trace)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class Patience:
    """Convergence rule: stop at iteration ``i`` once ``i == i_min + j``.

    ``i_min`` is the iteration with the smallest loss so far (first one wins on
    ties).
    """

    def __init__(self, j: int):
        if j < 1:
            raise ValueError("patience must be positive")
        self.j = j
        self.best = np.inf
        self.i_min = -1

    def update(self, i, loss) -> bool:
        """Record the loss of iteration ``i``; True when the run should stop."""
        if loss < self.best:
            self.best = loss
            self.i_min = i
        return i >= self.i_min + self.j


def stop_iteration(trace, j, max_iters=None):
    """Replay the stopping rule on a loss trace; returns ``(stop_index, i_min)``."""
    rule = Patience(j)
    last = len(trace) - 1 if max_iters is None else min(len(trace) - 1, max_iters)
    for i in range(last + 1):
        if rule.update(i, trace[i]):
            return i, rule.i_min
    return last, rule.i_min


def _median_positive(x, default=1e-2):
    pos = x[x > 0]
    return float(np.median(pos)) if pos.size else default


def default_learning_rates(d0, a0):
    return 1e-2 * _median_positive(np.asarray(a0)), 1e-2 * _median_positive(np.asarray(d0))


def step_a(state: AdamState, d, a: Abundance, x_mat, img, cfg: ObjectiveConfig):
    """One projected Adam step on the active abundances; returns ``(Abundance, state)``."""
    g = grad_a(d, a, x_mat, img, cfg)
    data = np.array(a.data)
    state.update(data, g, a.active)
    return Abundance(data, a.active), state


def step_d(state: AdamState, d: Dictionary, a, x_mat, cfg: ObjectiveConfig):
    """One projected Adam step on the dictionary; returns ``(Dictionary, state)``."""
    g = grad_d(d, a, x_mat, cfg)
    data = np.array(d.data)
    state.update(data, g)
    return Dictionary(data), state


def prune(a: Abundance, tau: float, t: float) -> Abundance:
    """Zero and permanently freeze active entries whose ``value / t`` is below ``tau``."""
    if tau < 0:
        raise InvariantError("tau must be non-negative")
    hit = a.active & (a.data / t < tau)
    if not np.any(hit):
        return a
    data = np.array(a.data)
    data[hit] = 0.0
    return Abundance(data, a.active & ~hit)


def recover_rates(d, a, t: float, height: int = 1, width: int | None = None) -> RateVolume:
    """Rates ``DA / t`` reshaped to ``(height, width, C)``; defaults to a single row."""
    if t <= 0:
        raise InvariantError("dwell must be positive")
    dm = d.data if isinstance(d, Dictionary) else np.asarray(d, dtype=np.float64)
    am = a.data if isinstance(a, Abundance) else np.asarray(a, dtype=np.float64)
    mat = (dm @ am) / t
    if width is None:
        width = mat.shape[1] // height
    return RateVolume(to_volume(mat, height, width))


def solve(
    x: CountVolume,
    img: RgbImage,
    d0: Dictionary,
    a0: Abundance,
    obj_cfg: ObjectiveConfig = ObjectiveConfig(),
    solver_cfg: SolverConfig = SolverConfig(),
    callback=None,
):
    """Minimize the restoration objective from ``(d0, a0)``.

    Parameters
    ----------
    x : CountVolume
        Fast-scan counts; its dwell overrides ``obj_cfg.dwell``.
    img : RgbImage
        Registered colour image with the same height and width as ``x``.
    d0, a0 : Dictionary, Abundance
        Starting factors, typically from :mod:`xrfdenoise.dictinit`.
    callback : callable, optional
        Called as ``callback(i, loss)`` after every outer iteration.

    Returns
    -------
    d, a : Dictionary, Abundance
        The iterate with the smallest loss.
    report : SolveReport
    """
    H, W, C = x.shape
    if img.shape[:2] != (H, W):
        raise DimensionError(f"rgb image {img.shape[:2]} does not match volume {(H, W)}")
    if d0.channels != C or a0.pixels != H * W or d0.atoms != a0.atoms:
        raise DimensionError("initial factors do not match the volume")
    cfg = replace(obj_cfg, dwell=x.dwell)
    t = x.dwell
    x_mat = to_matrix(x).astype(np.float64)
    weights = tv_weights(img, cfg.beta)

    D = np.array(d0.data)
    A = np.array(a0.data)
    mask = np.array(a0.active)
    normalize_atoms(D, A, solver_cfg.atom_norm)
    auto_a, auto_d = default_learning_rates(D, A)
    sa = AdamState.zeros(A.shape, solver_cfg.lr_a or auto_a, solver_cfg.beta1, solver_cfg.beta2,
                         solver_cfg.adam_eps)
    sd = AdamState.zeros(D.shape, solver_cfg.lr_d or auto_d, solver_cfg.beta1, solver_cfg.beta2,
                         solver_cfg.adam_eps)

    def evaluate():
        terms = loss_terms(D, A, x_mat, weights, cfg)
        loss = terms[0] + cfg.lambda_tv * terms[1] + cfg.lambda_en * terms[2]
        if not np.isfinite(loss):
            raise SolverError(f"non-finite loss at iteration {len(trace)}")
        return loss, terms

    trace = []
    pruned = []
    loss, terms = evaluate()
    trace.append(loss)
    rule = Patience(solver_cfg.patience)
    rule.update(0, loss)
    best = (0, D.copy(), A.copy(), mask.copy(), terms)
    stopped_by = "max_iters"

    for i in range(1, solver_cfg.max_iters + 1):
        for _ in range(solver_cfg.alt_block):
            g = _grad_a_masked(D, A, mask, x_mat, weights, cfg)
            sa.update(A, g, mask)
        if solver_cfg.update_dict:
            sd.update(D, grad_d(D, A, x_mat, cfg))
            normalize_atoms(D, A, solver_cfg.atom_norm)
        if solver_cfg.lasso_tau > 0 and i % solver_cfg.prune_every == 0:
            hit = mask & (A / t < solver_cfg.lasso_tau)
            count = int(hit.sum())
            if count:
                A[hit] = 0.0
                mask &= ~hit
                sa.m[hit] = 0.0
                sa.v[hit] = 0.0
            pruned.append([i, count])
        loss, terms = evaluate()
        trace.append(loss)
        if callback is not None:
            callback(i, loss)
        improved = loss < rule.best
        stop = rule.update(i, loss)
        if improved:
            best = (i, D.copy(), A.copy(), mask.copy(), terms)
        if stop:
            stopped_by = "patience"
            break

    i_best, D, A, mask, terms = best
    report = SolveReport(
        iterations=len(trace),
        best_iteration=i_best,
        loss_trace=[float(v) for v in trace],
        pruned=pruned,
        final_terms={"pnll": float(terms[0]), "tv": float(terms[1]), "en": float(terms[2])},
        stopped_by=stopped_by,
    )
    return Dictionary(D), Abundance(A, mask), report


def _grad_a_masked(D, A, mask, x_mat, weights, cfg):
    g = grad_a(D, A, x_mat, weights, cfg)
    g[~mask] = 0.0
    return g
