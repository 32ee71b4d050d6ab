#!/usr/bin/env python3
"""Benchmark the numba-compiled kernels against the pure-numpy fallback.

Runs each kernel pair on training-shaped inputs and reports per-call times
plus the speedup. The compiled path is also what GRADECAST_NUMBA=0 disables
at import time; here both are imported explicitly so one process can time
the two side by side.

Usage: python benchmarks/bench_kernels.py [--repeats 3000]
"""

import argparse
import time

import numpy as np

from gradecast import kernels, nn


def timeit(fn, args, repeats):
    fn(*args)  # warm (and JIT-compile) once
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def bench_case(name, fast, slow, args, repeats):
    t_fast = timeit(fast, args, repeats)
    t_slow = timeit(slow, args, max(repeats // 10, 10))
    print(f"{name:28} numba {t_fast * 1e6:9.1f} us   numpy {t_slow * 1e6:9.1f} us"
          f"   speedup {t_slow / t_fast:6.1f}x")
    return t_fast, t_slow


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=3000)
    args = parser.parse_args()
    if not kernels.NUMBA_ENABLED:
        raise SystemExit("numba path disabled (GRADECAST_NUMBA=0); nothing to compare")

    rng = np.random.default_rng(0)
    print(f"repeats={args.repeats}\n")

    # MLP at the desk-grid shape used during training
    d, h, L = 8, 32, 3
    p = nn.init_mlp_params(d, h, L, rng)
    x = rng.normal(size=d)
    drop = nn.mlp_masks(0.1, L, h, rng)
    fwd_args = (p["W0"], p["b0"], p["Wh"], p["bh"], p["wo"], 0.1, x, drop)
    bench_case("mlp_fwd (8->32x3)", kernels.mlp_fwd, kernels.mlp_fwd_numpy,
               fwd_args, args.repeats)
    _, Z, A = kernels.mlp_fwd(*fwd_args)
    bwd_args = (p["W0"], p["Wh"], p["wo"], x, Z, A, drop, 1.0)
    bench_case("mlp_bwd (8->32x3)", kernels.mlp_bwd, kernels.mlp_bwd_numpy,
               bwd_args, args.repeats)

    # LSTM at the two desk shapes (training-dominant workloads)
    for hidden, stack, steps in ((16, 1, 8), (32, 2, 8)):
        p = nn.init_lstm_params(d, hidden, stack, rng)
        X = rng.normal(size=(steps, d))
        masks = nn.lstm_masks(0.1, steps, d, stack, hidden, rng)
        fwd_args = (p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"], p["B"], p["wo"],
                    0.0, X) + masks
        label = f"lstm_fwd (h{hidden} s{stack} t{steps})"
        bench_case(label, kernels.lstm_fwd, kernels.lstm_fwd_numpy,
                   fwd_args, args.repeats)
        out = kernels.lstm_fwd(*fwd_args)
        bwd_args = (p["Wx0"], p["Wh0"], p["Wxd"], p["Whd"], p["wo"]) \
            + out[1:] + masks + (1.0,)
        label = f"lstm_bwd (h{hidden} s{stack} t{steps})"
        bench_case(label, kernels.lstm_bwd, kernels.lstm_bwd_numpy,
                   bwd_args, args.repeats)


if __name__ == "__main__":
    main()
