"""Compare the compiled kernels against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--threads 1]

Each kernel runs on the same inputs under both backends. The script reports the
best wall time and the speedup, and checks that the outputs agree (bit-for-bit
for the sampler, to 1e-9 for NNLS).
"""

import argparse
import time

import numpy as np

from xrfdenoise import _fallback

try:
    from xrfdenoise import _core
except ImportError:  # pragma: no cover - depends on the build
    _core = None


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def cases(rng):
    rates = rng.random((16, 16, 32)) * 210.0
    yield (
        "poisson_volume 16x16x32 (mean <= 60)",
        lambda impl, threads: impl.poisson_volume(rates, 0.285, 7, threads),
        lambda a, b: np.array_equal(a, b),
    )
    d = rng.random((32, 8))
    x = rng.random((32, 1024)) * 50
    yield (
        "nnls_columns 32x8 dictionary, 1024 pixels",
        lambda impl, threads: impl.nnls_columns(d, x, num_threads=threads)[0],
        lambda a, b: np.allclose(a, b, atol=1e-9),
    )
    d37 = rng.random((32, 37))
    x37 = d37 @ rng.random((37, 256))
    yield (
        "nnls_columns 32x37 dictionary, 256 pixels",
        lambda impl, threads: impl.nnls_columns(d37, x37, num_threads=threads)[0],
        lambda a, b: np.allclose(np.linalg.norm(x37 - d37 @ a, axis=0),
                                 np.linalg.norm(x37 - d37 @ b, axis=0), atol=1e-8),
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    if _core is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    print(f"{'kernel':45s} {'compiled':>10s} {'python':>10s} {'speedup':>8s}  agree")
    for name, run, agree in cases(rng):
        t_c, out_c = best_of(lambda: run(_core, args.threads), args.repeat)
        t_p, out_p = best_of(lambda: run(_fallback, args.threads), args.repeat)
        print(f"{name:45s} {t_c:9.4f}s {t_p:9.4f}s {t_p / t_c:7.1f}x  {agree(out_c, out_p)}")


if __name__ == "__main__":
    main()
