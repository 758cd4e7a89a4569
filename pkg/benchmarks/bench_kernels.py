#!/usr/bin/env python3
"""Compare the numba kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py [--repeats 5]
The jitted kernels are warmed once before timing so compilation cost is
excluded. The same workloads also run under ACTSEG_KERNELS=numpy via the
package path, so the flag itself is exercised.
"""

import argparse
import time

import numpy as np

from actseg.kernels import numba_impl, numpy_impl


def bench(fn, args, repeats):
    fn(*args)  # warm-up (and JIT compile for the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(rng):
    img = rng.random((256, 256, 3))
    x = rng.random((16, 32, 64, 64)).astype(np.float32)
    cols = numpy_impl.im2col3x3(x)
    pooled, arg = numpy_impl.maxpool2x2(x)
    d = 64
    a = rng.random((d, d))
    cov = a @ a.T + 0.1 * np.eye(d)
    chol = np.linalg.cholesky(cov)
    z = rng.random((4000, d))
    n_patches = 400
    x0s = rng.integers(0, 400, n_patches)
    y0s = rng.integers(0, 400, n_patches)
    ws = np.full(n_patches, 64, dtype=np.int64)
    hs = np.full(n_patches, 64, dtype=np.int64)
    cxs = x0s + 32.0
    cys = y0s + 32.0
    labels = rng.integers(0, 5, n_patches)
    risks = rng.random(n_patches)
    return {
        "bilinear_resize 256->512": ("bilinear_resize", (img, 512, 512)),
        "im2col3x3 16x32x64x64": ("im2col3x3", (x,)),
        "col2im3x3": ("col2im3x3", (cols, 64, 64)),
        "maxpool2x2": ("maxpool2x2", (x,)),
        "maxpool2x2_backward": ("maxpool2x2_backward", (pooled, arg, 64, 64)),
        "gaussian_logpdf 4000x64": ("gaussian_logpdf", (np.ascontiguousarray(z),
                                                        rng.random(d), chol)),
        "accumulate_votes 400 patches": ("accumulate_votes", (
            x0s.astype(np.int64), y0s.astype(np.int64), ws, hs, cxs, cys,
            labels.astype(np.int64), risks, 6, 464, 464, 0)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':34} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, (attr, call_args) in workloads(rng).items():
        t_np = bench(getattr(numpy_impl, attr), call_args, args.repeats)
        t_nb = bench(getattr(numba_impl, attr), call_args, args.repeats)
        print(f"{name:34} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms "
              f"{t_np / t_nb:7.2f}x")


if __name__ == "__main__":
    main()
