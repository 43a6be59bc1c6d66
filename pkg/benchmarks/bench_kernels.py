"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 64 128 256] [--batch 128] [--reps 5]

Each entry is the best of ``--reps`` calls, in milliseconds.
"""

import argparse
import time

import numpy as np

from wldreg import _fallback
from wldreg._backend import compiled


def best_ms(fn, reps):
    best = float("inf")
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best * 1e3


def cases(rng, batch, units):
    acts = rng.normal(size=(batch, units))
    a = rng.normal(size=(units, units))
    spd = a @ a.T / units + np.eye(units)
    gsym = a + a.T
    return {
        "matmul": lambda k: k.matmul(acts.T.copy(), acts),
        "rbf_similarity": lambda k: k.rbf_similarity(acts, 10.0, False),
        "rbf_similarity_grad": lambda k: k.rbf_similarity_grad(acts, gsym, 10.0, False),
        "cholesky": lambda k: k.cholesky(spd, 0.0),
        "cholesky_inverse": lambda k: k.cholesky_inverse(k.cholesky(spd, 0.0)[0]),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    parser.add_argument("--batch", type=int, default=128)
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args()
    if compiled is None:
        raise SystemExit("compiled extension not built (or WLDREG_PURE_PYTHON is set)")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'C':>5} {'compiled ms':>12} {'python ms':>12} {'speedup':>8}")
    for units in args.sizes:
        for name, call in cases(rng, args.batch, units).items():
            fast = best_ms(lambda: call(compiled), args.reps)
            slow = best_ms(lambda: call(_fallback), max(1, args.reps // 2))
            print(f"{name:<20} {units:>5} {fast:>12.3f} {slow:>12.3f} {slow / fast:>7.1f}x")


if __name__ == "__main__":
    main()
