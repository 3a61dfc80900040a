"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
``XRFDENOISE_PURE_PYTHON`` environment variable is set to a non-empty value,
the pure-Python implementations take over. ``BACKEND`` names the active one.
"""

import os
from contextlib import contextmanager

from . import _fallback

if os.environ.get("XRFDENOISE_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _fallback

BACKEND = _impl.BACKEND
_threads = 1


def compiled_available() -> bool:
    try:
        from . import _core  # noqa: F401
    except ImportError:
        return False
    return True


def get_threads() -> int:
    return _threads


def set_threads(n: int) -> None:
    """Cap the worker count used by the kernels and by BLAS."""
    global _threads
    if n < 1:
        raise ValueError("thread count must be at least 1")
    _threads = int(n)


@contextmanager
def thread_limit(n):
    """Temporarily cap kernel and BLAS threads (``None`` leaves them alone)."""
    if n is None:
        yield
        return
    from threadpoolctl import threadpool_limits

    previous = _threads
    set_threads(n)
    try:
        with threadpool_limits(limits=int(n)):
            yield
    finally:
        set_threads(previous)


def poisson_volume(rates, dwell, seed):
    return _impl.poisson_volume(rates, float(dwell), int(seed), _threads)


def nnls_columns(D, X, max_iter=500):
    return _impl.nnls_columns(D, X, max_iter=max_iter, num_threads=_threads)


voxel_key = _impl.voxel_key
uniform_stream = _impl.uniform_stream
