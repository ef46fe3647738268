"""Timing comparison of the compiled kernels against the numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeat 50] [--size large]

Reports per-kernel best-of-N wall times for both backends plus the
speedup.  The matmul-heavy parts of the models go through BLAS in both
backends, so the interesting wins are the fused row-wise passes below.
"""
import argparse
import time

import numpy as np

import infill.kernels.numpy_ref as ref

try:
    import infill.kernels._ckernels as compiled
except ImportError:
    compiled = None

SIZES = {
    "small": {"rows": 256, "cols": 512, "flat": 1 << 16},
    "large": {"rows": 2048, "cols": 1024, "flat": 1 << 22},
}


def make_cases(size, rng):
    rows, cols = size["rows"], size["cols"]
    flat = size["flat"]
    x = rng.standard_normal((rows, cols)).astype(np.float32)
    y = ref.softmax_fwd(x)
    gy = rng.standard_normal((rows, cols)).astype(np.float32)
    targets = rng.integers(0, cols, size=rows).astype(np.int64)
    mask = (rng.random(rows) > 0.2).astype(np.float32)
    gamma = rng.standard_normal(cols).astype(np.float32)
    beta = rng.standard_normal(cols).astype(np.float32)
    _, probs = ref.cross_entropy_fwd(x, targets, mask)
    _, mean, rstd = ref.layer_norm_fwd(x, gamma, beta, np.float32(1e-5))
    p, g = (rng.standard_normal(flat).astype(np.float32) for _ in range(2))
    m = np.zeros(flat, dtype=np.float32)
    v = np.zeros(flat, dtype=np.float32)
    return {
        "softmax_fwd": lambda ops: ops.softmax_fwd(x),
        "softmax_bwd": lambda ops: ops.softmax_bwd(y, gy),
        "cross_entropy_fwd": lambda ops: ops.cross_entropy_fwd(
            x, targets, mask),
        "cross_entropy_bwd": lambda ops: ops.cross_entropy_bwd(
            probs, targets, mask, np.float32(1.0)),
        "layer_norm_fwd": lambda ops: ops.layer_norm_fwd(
            x, gamma, beta, np.float32(1e-5)),
        "layer_norm_bwd": lambda ops: ops.layer_norm_bwd(
            x, gamma, mean, rstd, gy),
        "adam_step": lambda ops: ops.adam_step(
            p, g, m, v, np.float32(1e-3), np.float32(0.9),
            np.float32(0.997), np.float32(1e-9), 3),
    }


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--size", choices=sorted(SIZES), default="small")
    args = ap.parse_args()

    if compiled is None:
        print("compiled extension not available; nothing to compare")
        return

    cases = make_cases(SIZES[args.size], np.random.default_rng(0))
    print(f"size={args.size} repeat={args.repeat} (best-of wall times)")
    print(f"{'kernel':<20} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for name, call in cases.items():
        t_ref = best_of(lambda: call(ref), args.repeat)
        t_cmp = best_of(lambda: call(compiled), args.repeat)
        print(f"{name:<20} {t_ref * 1e6:>8.1f}us {t_cmp * 1e6:>8.1f}us "
              f"{t_ref / t_cmp:>7.2f}x")


if __name__ == "__main__":
    main()
