"""Dictionary and abundance initialization.

The dictionary comes from K-means over pixel spectra (k-means++ seeding, Lloyd
iterations). Abundances come from a per-pixel non-negative least squares fit
against that dictionary, and every column is certified by its KKT residual
before it is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .exceptions import ConvergenceError, DimensionError, InvariantError
from .volume import Abundance, Dictionary

DEFAULT_ATOMS = 37


@dataclass(frozen=True)
class KMeansConfig:
    clusters: int = DEFAULT_ATOMS
    max_iters: int = 100
    seed: int = 0
    tol: float = 1e-6
    normalize: str = "none"

    def __post_init__(self):
        if self.clusters < 1 or self.max_iters < 1 or self.tol <= 0:
            raise InvariantError("clusters, max_iters and tol must be positive")
        if self.normalize not in ("none", "l2"):
            raise InvariantError(f"normalize must be 'none' or 'l2', got {self.normalize!r}")


@dataclass(frozen=True)
class NnlsConfig:
    kkt_tol: float = 1e-6
    max_iters: int = 500

    def __post_init__(self):
        if self.kkt_tol <= 0 or self.max_iters < 1:
            raise InvariantError("kkt_tol and max_iters must be positive")


def _sq_dists(points, centers):
    # (N, K) squared distances; clipped since the expansion can dip below zero
    d = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ centers.T
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = _sq_dists(points, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[i] = points[idx]
        closest = np.minimum(closest, _sq_dists(points, centers[i : i + 1])[:, 0])
    return centers


def kmeans(points, cfg: KMeansConfig):
    """Lloyd's algorithm on the rows of ``points``.

    Returns
    -------
    centers : ndarray, shape (K, C)
    labels : ndarray, shape (N,)
    inertia : list of float
        Sum of squared distances after each assignment step.
    """
    points = np.asarray(points, dtype=np.float64)
    n, k = points.shape[0], cfg.clusters
    if k > n:
        raise DimensionError(f"cannot form {k} clusters from {n} pixels")
    rng = np.random.default_rng(cfg.seed)
    centers = _kmeanspp(points, k, rng)
    inertia = []
    labels = np.zeros(n, dtype=np.intp)
    for _ in range(cfg.max_iters):
        dist = _sq_dists(points, centers)
        labels = np.argmin(dist, axis=1)
        inertia.append(float(dist[np.arange(n), labels].sum()))
        counts = np.bincount(labels, minlength=k)
        new = np.zeros_like(centers)
        np.add.at(new, labels, points)
        filled = counts > 0
        new[filled] /= counts[filled, None]
        if not np.all(filled):
            # reseed each empty cluster at the point farthest from its centroid
            far = dist[np.arange(n), labels].copy()
            for j in np.flatnonzero(~filled):
                idx = int(np.argmax(far))
                new[j] = points[idx]
                far[idx] = -1.0
        shift = np.linalg.norm(new - centers)
        scale = max(np.linalg.norm(centers), np.finfo(float).tiny)
        centers = new
        if shift <= cfg.tol * scale:
            break
    dist = _sq_dists(points, centers)
    labels = np.argmin(dist, axis=1)
    return centers, labels, inertia


def kmeans_dictionary(x_mat, cfg: KMeansConfig) -> Dictionary:
    """Cluster the pixel spectra (columns of ``x_mat``) into ``cfg.clusters`` atoms."""
    x_mat = np.asarray(x_mat, dtype=np.float64)
    if np.any(x_mat < 0):
        raise InvariantError("spectra must be non-negative")
    points = x_mat.T
    if cfg.normalize == "l2":
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        points = np.divide(points, norms, out=np.zeros_like(points), where=norms > 0)
    centers, _, _ = kmeans(points, cfg)
    return Dictionary(np.maximum(centers.T, 0.0))


def kkt_violations(d, a, x_mat, kkt_tol):
    """Boolean per-column flag: True where ``a[:, n]`` fails the NNLS optimality test."""
    d = np.asarray(d, dtype=np.float64)
    grad = 2.0 * (d.T @ (d @ a - x_mat))
    bound = kkt_tol * np.linalg.norm(d, 2) * np.linalg.norm(x_mat, axis=0)
    positive = a > 0
    bad = (positive & (np.abs(grad) > bound)) | (~positive & (grad < -bound))
    return np.any(bad, axis=0)


def nnls_abundance(x_mat, d: Dictionary, cfg: NnlsConfig = NnlsConfig()) -> Abundance:
    """Per-pixel ``argmin_{a >= 0} ||x_n - D a||^2`` with an all-true active mask."""
    x_mat = np.asarray(x_mat, dtype=np.float64)
    if x_mat.shape[0] != d.channels:
        raise DimensionError(f"data has {x_mat.shape[0]} channels, dictionary {d.channels}")
    zero = d.zero_atoms()
    if zero.size:
        raise InvariantError(f"dictionary has all-zero atoms {zero.tolist()}")
    a = nnls_matrix(d.data, x_mat, cfg, what="pixel")
    return Abundance(a)


def nnls_matrix(d, x_mat, cfg: NnlsConfig, what="column"):
    """Certified column-wise NNLS shared by the initializer and the MCR-ALS baseline."""
    a, status = kernels.nnls_columns(d, x_mat, max_iter=cfg.max_iters)
    a = np.maximum(a, 0.0)
    failed = (status != 0) | kkt_violations(d, a, x_mat, cfg.kkt_tol)
    if np.any(failed):
        bad = np.flatnonzero(failed)
        raise ConvergenceError(
            f"NNLS failed to certify {bad.size} {what}(s), first indices {bad[:10].tolist()}"
        )
    return a
