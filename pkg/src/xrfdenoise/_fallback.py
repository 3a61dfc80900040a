"""Pure-Python twins of the compiled kernels in ``_core.pyx``.

The sampler mirrors the compiled arithmetic operation by operation (same hash,
same log-gamma series, same branch order) so both backends produce identical
counts. NNLS delegates to :func:`scipy.optimize.nnls` column by column.
"""

import math

import numpy as np
from scipy.optimize import nnls as _scipy_nnls

BACKEND = "python"

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
INV_2_53 = 1.0 / 9007199254740992.0
SMALL_MEAN = 10.0

_LOGGAM_COEF = (
    8.333333333333333e-02,
    -2.777777777777778e-03,
    7.936507936507937e-04,
    -5.952380952380952e-04,
    8.417508417508418e-04,
    -1.917526917526918e-03,
    6.410256410256410e-03,
    -2.955065359477124e-02,
    1.796443723688307e-01,
    -1.39243221690590e00,
)


def mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _absorb(z, v):
    return mix64(((z ^ v) + GAMMA) & MASK64)


def voxel_key(seed, h, w, c):
    return _absorb(_absorb(_absorb(mix64((seed + GAMMA) & MASK64), h), w), c)


class _Stream:
    __slots__ = ("state",)

    def __init__(self, key):
        self.state = key

    def uniform(self):
        self.state = (self.state + GAMMA) & MASK64
        return ((mix64(self.state) >> 11) + 0.5) * INV_2_53


def uniform_stream(key, n):
    s = _Stream(key)
    return np.array([s.uniform() for _ in range(n)], dtype=np.float64)


def loggam(x):
    if x == 1.0 or x == 2.0:
        return 0.0
    n = int(7 - x) if x < 7.0 else 0
    x0 = x + n
    x2 = (1.0 / x0) * (1.0 / x0)
    gl0 = _LOGGAM_COEF[9]
    for k in range(8, -1, -1):
        gl0 = gl0 * x2
        gl0 = gl0 + _LOGGAM_COEF[k]
    gl = gl0 / x0 + 0.5 * 1.8378770664093453 + (x0 - 0.5) * math.log(x0) - x0
    if x < 7.0:
        for _ in range(n):
            gl = gl - math.log(x0 - 1.0)
            x0 = x0 - 1.0
    return gl


def _poisson_small(stream, mu):
    u = stream.uniform()
    p = math.exp(-mu)
    cdf = p
    k = 0
    while u > cdf:
        k += 1
        p = p * (mu / k)
        cdf = cdf + p
        if p < 1e-300:
            break
    return k


def _poisson_ptrs(stream, mu):
    slam = math.sqrt(mu)
    loglam = math.log(mu)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2)
    while True:
        U = stream.uniform() - 0.5
        V = stream.uniform()
        us = 0.5 - abs(U)
        k = math.floor((2 * a / us + b) * U + mu + 0.43)
        if us >= 0.07 and V <= vr:
            return k
        if k < 0 or (us < 0.013 and V > us):
            continue
        if (math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b)) <= (
            -mu + k * loglam - loggam(float(k + 1))
        ):
            return k


def sample_voxel(key, mu):
    if mu <= 0.0:
        return 0
    stream = _Stream(key)
    if mu < SMALL_MEAN:
        return _poisson_small(stream, mu)
    return _poisson_ptrs(stream, mu)


def poisson_volume(rates, dwell, seed, num_threads=1):
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    H, W, C = rates.shape
    out = np.zeros((H, W, C), dtype=np.uint32)
    seed = int(seed) & MASK64
    for (h, w, c), rate in np.ndenumerate(rates):
        mu = dwell * float(rate)
        if mu > 0.0:
            out[h, w, c] = sample_voxel(voxel_key(seed, h, w, c), mu)
    return out


def nnls_columns(D, X, max_iter=500, rtol=1e-12, num_threads=1):
    D = np.asarray(D, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    k, n = D.shape[1], X.shape[1]
    out = np.zeros((k, n))
    status = np.zeros(n, dtype=np.int32)
    for col in range(n):
        try:
            out[:, col], _ = _scipy_nnls(D, X[:, col], maxiter=max(max_iter, 3 * k))
        except RuntimeError:
            status[col] = 1
    return out, status
