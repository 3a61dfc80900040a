"""Core data types and the pixel ordering between volume and matrix layouts.

Volumes are stored as ``(H, W, C)`` arrays. The matrix layout is ``(C, N)`` with
``N = H * W`` and pixels enumerated row-major, ``n = h * W + w``. Every module
goes through :func:`to_matrix` / :func:`to_volume` (or :class:`PixelOrder`)
instead of reshaping by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, InvariantError

__all__ = [
    "CountVolume",
    "RateVolume",
    "RgbImage",
    "Dictionary",
    "Abundance",
    "PixelOrder",
    "to_matrix",
    "to_volume",
]


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PixelOrder:
    """Row-major pixel enumeration for an ``H x W`` grid."""

    height: int
    width: int

    @property
    def size(self) -> int:
        return self.height * self.width

    def index(self, h, w):
        return h * self.width + w

    def coords(self, n):
        return divmod(n, self.width)


@dataclass(frozen=True, eq=False)
class CountVolume:
    """Photon counts of shape ``(H, W, C)`` acquired at a uniform dwell time (s/px)."""

    data: np.ndarray
    dwell: float

    def __post_init__(self):
        raw = np.asarray(self.data)
        if raw.ndim != 3 or min(raw.shape) < 1:
            raise DimensionError(f"count volume must be a non-empty H x W x C array, got {raw.shape}")
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise InvariantError("counts must be integral")
        elif raw.dtype.kind not in "iub":
            raise InvariantError(f"counts must be numeric, got dtype {raw.dtype}")
        if np.any(raw < 0):
            raise InvariantError("counts must be non-negative")
        if np.any(raw > np.iinfo(np.uint32).max):
            raise InvariantError("counts exceed the 32-bit storage range")
        if not (np.isfinite(self.dwell) and self.dwell > 0):
            raise InvariantError(f"dwell time must be positive, got {self.dwell}")
        object.__setattr__(self, "data", _frozen(raw, np.uint32))
        object.__setattr__(self, "dwell", float(self.dwell))

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return (
            isinstance(other, CountVolume)
            and self.dwell == other.dwell
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class RateVolume:
    """Non-negative photon rates (photons/s) of shape ``(H, W, C)``."""

    data: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.data, dtype=np.float64)
        if raw.ndim != 3 or min(raw.shape) < 1:
            raise DimensionError(f"rate volume must be a non-empty H x W x C array, got {raw.shape}")
        if not np.all(np.isfinite(raw)):
            raise InvariantError("rates must be finite")
        if np.any(raw < 0):
            raise InvariantError("rates must be non-negative")
        object.__setattr__(self, "data", _frozen(raw, np.float64))

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, RateVolume) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Registered colour image of shape ``(H, W, 3)`` with components in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.data, dtype=np.float64)
        if raw.ndim != 3 or raw.shape[2] != 3 or min(raw.shape) < 1:
            raise DimensionError(f"rgb image must be H x W x 3, got {raw.shape}")
        if not np.all(np.isfinite(raw)) or np.any(raw < 0) or np.any(raw > 1):
            raise InvariantError("rgb components must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(raw, np.float64))

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        return isinstance(other, RgbImage) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Spectral atoms as the columns of a non-negative ``(C, M)`` matrix."""

    data: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.data, dtype=np.float64)
        if raw.ndim != 2 or min(raw.shape) < 1:
            raise DimensionError(f"dictionary must be a non-empty C x M matrix, got {raw.shape}")
        if not np.all(np.isfinite(raw)) or np.any(raw < 0):
            raise InvariantError("dictionary entries must be finite and non-negative")
        object.__setattr__(self, "data", _frozen(raw, np.float64))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def atoms(self) -> int:
        return self.data.shape[1]

    def zero_atoms(self) -> np.ndarray:
        """Indices of all-zero columns."""
        return np.flatnonzero(~np.any(self.data > 0, axis=0))

    def __eq__(self, other):
        return isinstance(other, Dictionary) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class Abundance:
    """Non-negative ``(M, N)`` coefficients plus the mask of entries still free to move.

    Entries whose mask is False were pruned and are pinned at exactly zero.
    """

    data: np.ndarray
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        raw = np.asarray(self.data, dtype=np.float64)
        if raw.ndim != 2 or min(raw.shape) < 1:
            raise DimensionError(f"abundance must be a non-empty M x N matrix, got {raw.shape}")
        if not np.all(np.isfinite(raw)) or np.any(raw < 0):
            raise InvariantError("abundance entries must be finite and non-negative")
        if self.active is None:
            mask = np.ones(raw.shape, dtype=bool)
        else:
            mask = np.asarray(self.active)
            if mask.shape != raw.shape:
                raise DimensionError(f"active mask {mask.shape} does not match data {raw.shape}")
            if mask.dtype != bool:
                if not np.all((mask == 0) | (mask == 1)):
                    raise InvariantError("active mask must be boolean")
                mask = mask.astype(bool)
        if np.any(raw[~mask] != 0):
            raise InvariantError("inactive abundance entries must be zero")
        object.__setattr__(self, "data", _frozen(raw, np.float64))
        object.__setattr__(self, "active", _frozen(mask, bool))

    @property
    def atoms(self) -> int:
        return self.data.shape[0]

    @property
    def pixels(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, Abundance)
            and np.array_equal(self.data, other.data)
            and np.array_equal(self.active, other.active)
        )


def to_matrix(v) -> np.ndarray:
    """Reorder an ``(H, W, C)`` volume into a ``(C, N)`` matrix, one pixel per column."""
    arr = v.data if isinstance(v, (CountVolume, RateVolume)) else np.asarray(v)
    if arr.ndim != 3:
        raise DimensionError(f"expected an H x W x C volume, got shape {arr.shape}")
    h, w, c = arr.shape
    return np.ascontiguousarray(arr.reshape(h * w, c).T)


def to_volume(m, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`to_matrix`: ``(C, N)`` back to ``(H, W, C)``."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError(f"expected a C x N matrix, got shape {m.shape}")
    if m.shape[1] != height * width:
        raise DimensionError(f"matrix has {m.shape[1]} columns but H*W = {height * width}")
    return np.ascontiguousarray(m.T.reshape(height, width, m.shape[0]))
