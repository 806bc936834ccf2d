"""numba vs numpy timing for the two hot kernels: the one-sided Jacobi SVD
behind the exact polar oracle, and column normalization.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are called through the same public functions with an explicit
``use_numba`` switch, so this measures exactly what MUONLAB_DISABLE_NUMBA=1
would change. The first numba call (JIT compile or cache load) is excluded.
"""
import argparse
import time

import numpy as np

from muonlab import _accel
from muonlab.norm import norm_col
from muonlab.polar import svd_small
from muonlab.tensorcore import Rng


def best_time(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = Rng(0)
    cases = [
        ("svd", (16, 16)),
        ("svd", (64, 64)),
        ("svd", (256, 64)),
        ("norm_col", (64, 64)),
        ("norm_col", (256, 64)),
        ("norm_col", (1024, 1024)),
    ]
    print(f"{'kernel':10s} {'shape':>10s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for kernel, shape in cases:
        a = rng.normal(shape)
        if kernel == "svd":
            fast = lambda: svd_small(a, use_numba=True)  # noqa: E731
            slow = lambda: svd_small(a, use_numba=False)  # noqa: E731
        else:
            fast = lambda: norm_col(a, use_numba=True)  # noqa: E731
            slow = lambda: norm_col(a, use_numba=False)  # noqa: E731
        t_fast = best_time(fast, args.repeat)
        t_slow = best_time(slow, args.repeat)
        label = f"{shape[0]}x{shape[1]}"
        print(f"{kernel:10s} {label:>10s} {t_fast * 1e3:10.3f} {t_slow * 1e3:10.3f} {t_slow / t_fast:8.2f}")


if __name__ == "__main__":
    main()
