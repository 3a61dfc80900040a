"""Synthetic ground-truth scenes with planted factors and a matching RGB image."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import InvariantError
from .scansim import REFERENCE_DWELL
from .volume import Abundance, Dictionary, RateVolume, RgbImage, to_volume

#: Peak rate that puts the brightest voxel at ~60 expected counts over the reference dwell.
DEFAULT_PEAK_RATE = 60.0 / REFERENCE_DWELL


@dataclass(frozen=True)
class PhantomConfig:
    height: int = 32
    width: int = 32
    channels: int = 32
    atoms: int = 4
    regions: int = 12
    peak_rate: float = DEFAULT_PEAK_RATE
    rgb_correlation: float = 0.9
    seed: int = 0

    def __post_init__(self):
        for name in ("height", "width", "channels", "atoms", "regions"):
            if getattr(self, name) < 1:
                raise InvariantError(f"{name} must be positive")
        if self.atoms > self.channels:
            raise InvariantError("atoms cannot exceed channels")
        if self.regions > self.height * self.width:
            raise InvariantError("more regions than pixels")
        if self.peak_rate <= 0:
            raise InvariantError("peak_rate must be positive")
        if not 0.0 <= self.rgb_correlation <= 1.0:
            raise InvariantError("rgb_correlation must lie in [0, 1]")


class Phantom(NamedTuple):
    rates: RateVolume
    rgb: RgbImage
    dictionary: Dictionary
    abundance: Abundance
    labels: np.ndarray


def _atoms(rng, channels, atoms):
    grid = np.arange(channels, dtype=np.float64)
    mains = rng.choice(channels, size=atoms, replace=False)
    d = np.zeros((channels, atoms))
    for m, main in enumerate(mains):
        centers = [float(main)] + list(rng.uniform(0, channels - 1, size=rng.integers(0, 3)))
        amps = [1.0] + list(rng.uniform(0.2, 0.6, size=len(centers) - 1))
        for c, amp in zip(centers, amps):
            width = rng.uniform(0.6, 1.2)
            d[:, m] += amp * np.exp(-0.5 * ((grid - c) / width) ** 2)
        # overlapping secondary lines must not overtake the main one
        d[:, m] /= d[main, m]
        others = np.arange(channels) != main
        d[others, m] = np.minimum(d[others, m], 0.95)
    d[d < 1e-3] = 0.0
    return d


def _voronoi(rng, height, width, regions):
    sites = rng.choice(height * width, size=regions, replace=False)
    sh, sw = np.divmod(sites, width)
    hh, ww = np.mgrid[0:height, 0:width]
    dist = (hh[..., None] - sh) ** 2 + (ww[..., None] - sw) ** 2
    return np.argmin(dist, axis=2)


def _region_pairs(labels):
    pairs = set()
    for a, b in ((labels[1:], labels[:-1]), (labels[:, 1:], labels[:, :-1])):
        diff = a != b
        for p, q in zip(a[diff], b[diff]):
            pairs.add((min(p, q), max(p, q)))
    return sorted(pairs)


def _colors(rng, groups, adjacent, min_sq=0.25, tries=200):
    colors = np.zeros((groups, 3))
    for g in range(groups):
        best, best_gap = None, -1.0
        for _ in range(tries):
            cand = rng.uniform(0.05, 0.95, size=3)
            gaps = [np.sum((cand - colors[h]) ** 2) for h in adjacent.get(g, ()) if h < g]
            gap = min(gaps) if gaps else np.inf
            if gap > best_gap:
                best, best_gap = cand, gap
            if gap >= min_sq:
                break
        colors[g] = best
    return colors


def make_phantom(cfg: PhantomConfig = PhantomConfig()) -> Phantom:
    """Build planted factors, their rate volume and an RGB image with matching edges.

    Each Voronoi region gets its own abundance vector. Neighbouring regions keep
    a colour edge between them with probability ``rgb_correlation``, and are
    merged into one colour otherwise.
    """
    rng = np.random.default_rng(cfg.seed)
    H, W = cfg.height, cfg.width
    d = _atoms(rng, cfg.channels, cfg.atoms)

    labels = _voronoi(rng, H, W, cfg.regions)
    coef = np.zeros((cfg.regions, cfg.atoms))
    for r in range(cfg.regions):
        present = rng.random(cfg.atoms) < 0.6
        if not present.any():
            present[rng.integers(cfg.atoms)] = True
        coef[r, present] = rng.uniform(0.2, 1.0, size=int(present.sum()))
    a = coef[labels.ravel()].T
    scale = cfg.peak_rate / float((d @ a).max())
    a = a * scale

    # union-find over region adjacency decides which boundaries lose their colour edge
    parent = list(range(cfg.regions))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pairs = _region_pairs(labels)
    for p, q in pairs:
        if rng.random() >= cfg.rgb_correlation:
            parent[find(p)] = find(q)
    roots = sorted({find(r) for r in range(cfg.regions)})
    group_of = {root: g for g, root in enumerate(roots)}
    group = np.array([group_of[find(r)] for r in range(cfg.regions)])
    adjacent = {}
    for p, q in pairs:
        gp, gq = group[p], group[q]
        if gp != gq:
            adjacent.setdefault(gp, set()).add(gq)
            adjacent.setdefault(gq, set()).add(gp)
    colors = _colors(rng, len(roots), adjacent)
    rgb = colors[group[labels]]

    rates = to_volume(d @ a, H, W)
    return Phantom(RateVolume(rates), RgbImage(rgb), Dictionary(d), Abundance(a), labels)
