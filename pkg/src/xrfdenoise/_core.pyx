# cython: language_level=3
"""Compiled hot kernels: counter-based Poisson sampling and batched NNLS.

Must stay numerically identical to ``_fallback.py`` for the sampler; the
NNLS kernel is an independent active-set route checked against it.
"""

import numpy as np

cimport cython
from cython.parallel cimport prange
from libc.math cimport exp, fabs, floor, log, sqrt
from libc.stdint cimport int64_t, uint32_t, uint64_t
from libc.stdlib cimport free, malloc

BACKEND = "compiled"

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef double SMALL_MEAN = 10.0


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t absorb(uint64_t z, uint64_t v) noexcept nogil:
    return mix64((z ^ v) + GAMMA)


cdef inline uint64_t c_voxel_key(uint64_t seed, uint64_t h, uint64_t w, uint64_t c) noexcept nogil:
    return absorb(absorb(absorb(mix64(seed + GAMMA), h), w), c)


cdef inline double next_uniform(uint64_t* state) noexcept nogil:
    state[0] = state[0] + GAMMA
    return (<double>(mix64(state[0]) >> 11) + 0.5) * INV_2_53


cdef double loggam(double x) noexcept nogil:
    cdef double a[10]
    a[0] = 8.333333333333333e-02
    a[1] = -2.777777777777778e-03
    a[2] = 7.936507936507937e-04
    a[3] = -5.952380952380952e-04
    a[4] = 8.417508417508418e-04
    a[5] = -1.917526917526918e-03
    a[6] = 6.410256410256410e-03
    a[7] = -2.955065359477124e-02
    a[8] = 1.796443723688307e-01
    a[9] = -1.39243221690590e+00
    cdef double x0, x2, gl, gl0
    cdef int64_t k, n
    if x == 1.0 or x == 2.0:
        return 0.0
    if x < 7.0:
        n = <int64_t>(7 - x)
    else:
        n = 0
    x0 = x + n
    x2 = (1.0 / x0) * (1.0 / x0)
    gl0 = a[9]
    k = 8
    while k >= 0:
        gl0 = gl0 * x2
        gl0 = gl0 + a[k]
        k -= 1
    gl = gl0 / x0 + 0.5 * 1.8378770664093453 + (x0 - 0.5) * log(x0) - x0
    if x < 7.0:
        k = 1
        while k <= n:
            gl = gl - log(x0 - 1.0)
            x0 = x0 - 1.0
            k += 1
    return gl


cdef uint32_t poisson_small(uint64_t* state, double mu) noexcept nogil:
    # inversion by sequential search
    cdef double u = next_uniform(state)
    cdef double p = exp(-mu)
    cdef double cdf = p
    cdef int64_t k = 0
    while u > cdf:
        k += 1
        p = p * (mu / k)
        cdf = cdf + p
        if p < 1e-300:
            break
    return <uint32_t>k


cdef uint32_t poisson_ptrs(uint64_t* state, double mu) noexcept nogil:
    # transformed rejection with squeeze (Hormann 1993)
    cdef double slam = sqrt(mu)
    cdef double loglam = log(mu)
    cdef double b = 0.931 + 2.53 * slam
    cdef double a = -0.059 + 0.02483 * b
    cdef double invalpha = 1.1239 + 1.1328 / (b - 3.4)
    cdef double vr = 0.9277 - 3.6224 / (b - 2)
    cdef double U, V, us
    cdef int64_t k
    while True:
        U = next_uniform(state) - 0.5
        V = next_uniform(state)
        us = 0.5 - fabs(U)
        k = <int64_t>floor((2 * a / us + b) * U + mu + 0.43)
        if us >= 0.07 and V <= vr:
            return <uint32_t>k
        if k < 0 or (us < 0.013 and V > us):
            continue
        if (log(V) + log(invalpha) - log(a / (us * us) + b)) <= (-mu + k * loglam - loggam(k + 1)):
            return <uint32_t>k


cdef inline uint32_t sample_voxel(uint64_t key, double mu) noexcept nogil:
    cdef uint64_t state = key
    if mu <= 0.0:
        return 0
    if mu < SMALL_MEAN:
        return poisson_small(&state, mu)
    return poisson_ptrs(&state, mu)


def voxel_key(uint64_t seed, uint64_t h, uint64_t w, uint64_t c):
    return c_voxel_key(seed, h, w, c)


def uniform_stream(uint64_t key, Py_ssize_t n):
    cdef uint64_t state = key
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(n):
        o[i] = next_uniform(&state)
    return out


@cython.boundscheck(False)
@cython.wraparound(False)
def poisson_volume(const double[:, :, ::1] rates, double dwell, uint64_t seed, int num_threads=1):
    """Poisson counts with mean ``dwell * rates`` from per-voxel counter streams."""
    cdef Py_ssize_t H = rates.shape[0], W = rates.shape[1], C = rates.shape[2]
    cdef Py_ssize_t total = H * W * C
    out = np.empty((H, W, C), dtype=np.uint32)
    cdef uint32_t[:, :, ::1] o = out
    cdef Py_ssize_t i, h, w, c, rem
    if num_threads < 1:
        num_threads = 1
    for i in prange(total, nogil=True, num_threads=num_threads, schedule="static"):
        h = i // (W * C)
        rem = i - h * (W * C)
        w = rem // C
        c = rem - w * C
        o[h, w, c] = sample_voxel(c_voxel_key(seed, h, w, c), dwell * rates[h, w, c])
    return out


# ---------------------------------------------------------------------------
# Lawson-Hanson active set on the normal equations, one column at a time.
# ---------------------------------------------------------------------------

cdef int solve_passive(const double* G, const double* b, const int* idx, int p, int k,
                       double* L, double* y) noexcept nogil:
    """Cholesky solve of G[P, P] y = b[P]; returns 0 when the block is not positive definite."""
    cdef int r, s, q
    cdef double acc, diag
    for r in range(p):
        for s in range(r + 1):
            acc = G[idx[r] * k + idx[s]]
            for q in range(s):
                acc = acc - L[r * p + q] * L[s * p + q]
            if r == s:
                diag = G[idx[r] * k + idx[r]]
                if acc <= 1e-12 * diag or acc <= 0.0:
                    return 0
                L[r * p + r] = sqrt(acc)
            else:
                L[r * p + s] = acc / L[s * p + s]
    for r in range(p):
        acc = b[idx[r]]
        for q in range(r):
            acc = acc - L[r * p + q] * y[q]
        y[r] = acc / L[r * p + r]
    r = p - 1
    while r >= 0:
        acc = y[r]
        for q in range(r + 1, p):
            acc = acc - L[q * p + r] * y[q]
        y[r] = acc / L[r * p + r]
        r -= 1
    return 1


cdef int nnls_column(const double* G, const double* b, double* x, int k, double tol, int max_iter,
                     char* passive, char* blocked, int* idx, double* L, double* y,
                     double* z, double* w, int* iters_out) noexcept nogil:
    cdef int i, j, p, r, iters = 0, first, ok, feasible, arg
    cdef double best, acc, alpha, ratio
    for i in range(k):
        x[i] = 0.0
        passive[i] = 0
        blocked[i] = 0
    while True:
        for i in range(k):
            acc = b[i]
            for r in range(k):
                acc = acc - G[i * k + r] * x[r]
            w[i] = acc
        j = -1
        best = tol
        for i in range(k):
            if passive[i] == 0 and blocked[i] == 0 and w[i] > best:
                best = w[i]
                j = i
        if j < 0:
            iters_out[0] = iters
            return 0
        if iters >= max_iter:
            iters_out[0] = iters
            return 1
        iters += 1
        passive[j] = 1
        first = 1
        while True:
            p = 0
            for i in range(k):
                if passive[i]:
                    idx[p] = i
                    p += 1
            ok = solve_passive(G, b, idx, p, k, L, y)
            if ok:
                for i in range(k):
                    z[i] = 0.0
                for r in range(p):
                    z[idx[r]] = y[r]
            if ok == 0 or (first and z[j] <= 0.0):
                passive[j] = 0
                blocked[j] = 1
                break
            first = 0
            feasible = 1
            for r in range(p):
                if z[idx[r]] <= 0.0:
                    feasible = 0
            if feasible:
                for i in range(k):
                    x[i] = z[i]
                    blocked[i] = 0
                break
            alpha = 2.0
            arg = -1
            for r in range(p):
                i = idx[r]
                if z[i] <= 0.0:
                    ratio = x[i] / (x[i] - z[i])
                    if ratio < alpha:
                        alpha = ratio
                        arg = i
            for r in range(p):
                i = idx[r]
                x[i] = x[i] + alpha * (z[i] - x[i])
            x[arg] = 0.0
            for r in range(p):
                i = idx[r]
                if x[i] <= 0.0:
                    x[i] = 0.0
                    passive[i] = 0
            iters += 1
            if iters >= 3 * max_iter:
                iters_out[0] = iters
                return 1


@cython.boundscheck(False)
@cython.wraparound(False)
def nnls_columns(D, X, int max_iter=500, double rtol=1e-12, int num_threads=1):
    """Solve ``min ||X[:, n] - D a||`` subject to ``a >= 0`` for every column.

    Returns ``(A, status)`` where ``status[n]`` is 0 on convergence and 1 when
    ``max_iter`` was exhausted.
    """
    D = np.ascontiguousarray(D, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t k = D.shape[1]
    cdef Py_ssize_t n = X.shape[1]
    Gm = np.ascontiguousarray(D.T @ D)
    Bt = np.ascontiguousarray((D.T @ X).T)
    scale = np.max(np.abs(Bt), axis=1) if n else np.zeros(0)
    tols = np.ascontiguousarray(rtol * max(int(k), 1) * scale)
    out = np.zeros((n, k), dtype=np.float64)
    status = np.zeros(n, dtype=np.int32)
    cdef double[:, ::1] G = Gm
    cdef double[:, ::1] B = Bt
    cdef double[::1] T = tols
    cdef double[:, ::1] A = out
    cdef int[::1] S = status
    cdef Py_ssize_t col
    cdef int kk = <int>k
    cdef char* passive
    cdef char* blocked
    cdef int* idx
    cdef double* work
    cdef int it
    if n == 0 or k == 0:
        return out.T.copy(), status
    if num_threads < 1:
        num_threads = 1
    for col in prange(n, nogil=True, num_threads=num_threads, schedule="static"):
        passive = <char*>malloc(2 * kk * sizeof(char))
        blocked = passive + kk
        idx = <int*>malloc(kk * sizeof(int))
        work = <double*>malloc((kk * kk + 3 * kk) * sizeof(double))
        S[col] = nnls_column(&G[0, 0], &B[col, 0], &A[col, 0], kk, T[col], max_iter,
                             passive, blocked, idx, work, work + kk * kk,
                             work + kk * kk + kk, work + kk * kk + 2 * kk, &it)
        free(work)
        free(idx)
        free(passive)
    return np.ascontiguousarray(out.T), status
