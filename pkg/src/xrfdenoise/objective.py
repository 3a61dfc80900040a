"""Loss terms of the restoration problem and their analytic gradients.

The objective is::

    pnll(D, A) + lambda_tv * tv(A) + lambda_en * elastic_net(A)

with the Poisson negative log-likelihood evaluated on the factorization ``DA``,
a total variation penalty on the abundance planes whose neighbour weights come
from the RGB image, and an Elastic Net penalty on the dwell-normalized
abundances. Everything here is a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, InvariantError
from .volume import Abundance, Dictionary, RgbImage

LAMBDA_TV = 1e-2
LAMBDA_EN = 1e-4
BETA = 16.0
ALPHA = 0.2
LOG_EPS = 1e-8


@dataclass(frozen=True)
class TvWeights:
    """Vertical ``(H-1, W)`` and horizontal ``(H, W-1)`` neighbour weights in (0, 1]."""

    omega_h: np.ndarray
    omega_w: np.ndarray
    beta: float

    @property
    def height(self):
        return self.omega_w.shape[0]

    @property
    def width(self):
        return self.omega_h.shape[1]


@dataclass(frozen=True)
class ObjectiveConfig:
    lambda_tv: float = LAMBDA_TV
    lambda_en: float = LAMBDA_EN
    alpha: float = ALPHA
    beta: float = BETA
    log_eps: float = LOG_EPS
    dwell: float = 1.0

    def __post_init__(self):
        if self.lambda_tv < 0 or self.lambda_en < 0:
            raise InvariantError("regularization weights must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvariantError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta <= 0 or self.log_eps <= 0 or self.dwell <= 0:
            raise InvariantError("beta, log_eps and dwell must be positive")


def _arr(x):
    return x.data if isinstance(x, (Dictionary, Abundance)) else np.asarray(x, dtype=np.float64)


def _mask(a):
    return a.active if isinstance(a, Abundance) else None


def tv_weights(img, beta: float = BETA) -> TvWeights:
    """Edge-stopping weights ``exp(-beta * |I(p') - I(p)|^2)`` between neighbours."""
    if beta <= 0:
        raise InvariantError("beta must be positive")
    rgb = img.data if isinstance(img, RgbImage) else np.asarray(img, dtype=np.float64)
    dh = np.sum((rgb[1:] - rgb[:-1]) ** 2, axis=2)
    dw = np.sum((rgb[:, 1:] - rgb[:, :-1]) ** 2, axis=2)
    return TvWeights(np.exp(-beta * dh), np.exp(-beta * dw), float(beta))


def _resolve_weights(img, cfg) -> TvWeights:
    if isinstance(img, TvWeights):
        return img
    return tv_weights(img, cfg.beta)


def pnll(d, a, x_mat, log_eps: float = LOG_EPS) -> float:
    """``sum(DA) - sum(X * log(DA + eps))``."""
    model = _arr(d) @ _arr(a)
    x_mat = np.asarray(x_mat, dtype=np.float64)
    if model.shape != x_mat.shape:
        raise DimensionError(f"model {model.shape} vs data {x_mat.shape}")
    return float(np.sum(model) - np.sum(x_mat * np.log(model + log_eps)))


def _as_planes(a_vol, w: TvWeights):
    a_vol = np.asarray(a_vol, dtype=np.float64)
    if a_vol.ndim != 3 or a_vol.shape[:2] != (w.height, w.width):
        raise DimensionError(
            f"abundance volume {a_vol.shape} does not match weights {w.height}x{w.width}"
        )
    return a_vol


def tv_loss(a_vol, w: TvWeights, t: float) -> float:
    """Weighted squared differences between vertical and horizontal neighbours, over all planes."""
    a_vol = _as_planes(a_vol, w)
    dv = a_vol[1:] - a_vol[:-1]
    dh = a_vol[:, 1:] - a_vol[:, :-1]
    total = np.sum(w.omega_h[..., None] * dv**2) + np.sum(w.omega_w[..., None] * dh**2)
    return float(total / t**2)


def tv_grad(a_vol, w: TvWeights, t: float) -> np.ndarray:
    a_vol = _as_planes(a_vol, w)
    g = np.zeros_like(a_vol)
    dv = (2.0 / t**2) * w.omega_h[..., None] * (a_vol[1:] - a_vol[:-1])
    g[1:] += dv
    g[:-1] -= dv
    dh = (2.0 / t**2) * w.omega_w[..., None] * (a_vol[:, 1:] - a_vol[:, :-1])
    g[:, 1:] += dh
    g[:, :-1] -= dh
    return g


def elastic_net(a, t: float, alpha: float = ALPHA) -> float:
    """``alpha * ||A/t||_2^2 + (1 - alpha) * ||A/t||_1``."""
    scaled = _arr(a) / t
    return float(alpha * np.sum(scaled**2) + (1.0 - alpha) * np.sum(np.abs(scaled)))


def elastic_net_grad(a, t: float, alpha: float = ALPHA) -> np.ndarray:
    # subgradient of |.| taken as 0 at 0
    a = _arr(a)
    return 2.0 * alpha * a / t**2 + (1.0 - alpha) * np.sign(a) / t


def abundance_volume(a, height: int, width: int) -> np.ndarray:
    """``(M, N)`` abundances as ``(H, W, M)`` planes under the row-major pixel order."""
    a = _arr(a)
    if a.shape[1] != height * width:
        raise DimensionError(f"{a.shape[1]} pixels cannot fill a {height}x{width} grid")
    return a.T.reshape(height, width, a.shape[0])


def loss_terms(d, a, x_mat, img, cfg: ObjectiveConfig):
    """Return the unweighted ``(pnll, tv, en)`` triple."""
    w = _resolve_weights(img, cfg)
    p = pnll(d, a, x_mat, cfg.log_eps)
    tv = tv_loss(abundance_volume(a, w.height, w.width), w, cfg.dwell) if cfg.lambda_tv else 0.0
    en = elastic_net(a, cfg.dwell, cfg.alpha) if cfg.lambda_en else 0.0
    return p, tv, en


def total_loss(d, a, x_mat, img, cfg: ObjectiveConfig) -> float:
    p, tv, en = loss_terms(d, a, x_mat, img, cfg)
    return p + cfg.lambda_tv * tv + cfg.lambda_en * en


def _pnll_residual(d, a, x_mat, log_eps):
    # d(pnll)/d(DA)
    model = _arr(d) @ _arr(a)
    return 1.0 - np.asarray(x_mat, dtype=np.float64) / (model + log_eps)


def grad_a(d, a, x_mat, img, cfg: ObjectiveConfig) -> np.ndarray:
    """Gradient of :func:`total_loss` with respect to ``A``; pruned entries get 0."""
    dm = _arr(d)
    am = _arr(a)
    g = dm.T @ _pnll_residual(dm, am, x_mat, cfg.log_eps)
    if cfg.lambda_tv:
        w = _resolve_weights(img, cfg)
        gv = tv_grad(abundance_volume(am, w.height, w.width), w, cfg.dwell)
        g += cfg.lambda_tv * gv.reshape(-1, am.shape[0]).T
    if cfg.lambda_en:
        g += cfg.lambda_en * elastic_net_grad(am, cfg.dwell, cfg.alpha)
    mask = _mask(a)
    if mask is not None:
        g[~mask] = 0.0
    return g


def grad_d(d, a, x_mat, cfg: ObjectiveConfig) -> np.ndarray:
    """Gradient of :func:`total_loss` with respect to ``D`` (only the data term depends on it)."""
    am = _arr(a)
    return _pnll_residual(d, am, x_mat, cfg.log_eps) @ am.T
