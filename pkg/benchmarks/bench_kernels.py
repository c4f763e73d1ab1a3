"""Time the numba and numpy forms of each metrics kernel on run-sized inputs.

    python benchmarks/bench_kernels.py [--n 2000000] [--repeat 5]

Inputs mimic one 300 s proof-of-concept replication pooled over 20 seeds
(about 5M transmitted packets). Compilation happens in a warm-up call and is
reported separately.
"""
from __future__ import annotations

import argparse
import time
import timeit

import numpy as np

from aqmsim import kernels
from aqmsim._accel import NUMBA_ENABLED

NS_PER_S = 1_000_000_000


def make_inputs(n: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    gaps = rng.integers(1_200_000, 1_300_000, n)
    starts = np.cumsum(gaps).astype(np.int64)
    ends = starts + 1_200_000
    delays = np.sort(rng.integers(0, 200_000_000, n)).astype(np.int64)
    n_bins = int(ends[-1] // NS_PER_S) + 1
    m = min(n, 100_000)
    qs = np.linspace(0, 100, 201)
    bounds = np.arange(0, int(ends[-1]), 30_000_000, dtype=np.int64)
    return {
        "pie_update_batch": (rng.random(m), rng.integers(0, 10**9, m).astype(np.float64),
                             rng.integers(0, 10**9, m).astype(np.float64), np.full(m, 0.125),
                             np.full(m, 1.25), np.full(m, 2e7), True),
        "bin_sum": (ends, np.full(n, 1500.0 * 8), NS_PER_S, n_bins),
        "max_window_sum": (ends, np.full(n, 1500.0 * 8), NS_PER_S),
        "nearest_rank": (delays, qs),
        "ecdf": (delays // 1_000_000,),
        "max_per_interval": (starts[::50], bounds),
        "busy_per_bin": (starts, ends, NS_PER_S, n_bins),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    inputs = make_inputs(args.n)
    print(f"n={args.n}  active backend: {kernels.BACKEND}")
    print(f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}{'compile s':>11}")
    for name, call_args in inputs.items():
        np_fn = kernels.NUMPY_FORMS[name]
        t_np = min(timeit.repeat(lambda: np_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        if NUMBA_ENABLED:
            jit_fn = kernels.JIT_FORMS[name]
            t0 = time.perf_counter()
            jit_fn(*call_args)
            compile_s = time.perf_counter() - t0
            t_jit = min(timeit.repeat(lambda: jit_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:<18}{t_np:>10.2f}{t_jit:>10.2f}{t_np / t_jit:>8.1f}x{compile_s:>11.2f}")
        else:
            print(f"{name:<18}{t_np:>10.2f}{'-':>10}{'-':>9}{'-':>11}")


if __name__ == "__main__":
    main()
