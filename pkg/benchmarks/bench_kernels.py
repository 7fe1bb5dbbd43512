"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py --repeat 20

Shapes mirror the desk workloads: a 3x3 conv over a batch of 16 feature maps
at 32x32, a 21-tap blur of a 32x32 RGB image, and a bicubic resize to 48.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from blindrestore import _accel
from blindrestore.degradation.ops import resize_taps


def cases(rng):
    xp = rng.normal(size=(16, 32, 34, 34)).astype(np.float32)
    cols = rng.normal(size=(16 * 32 * 32, 32 * 9)).astype(np.float32)
    padded = rng.uniform(size=(52, 52, 3))
    kernel = rng.uniform(size=(21, 21))
    src = rng.uniform(size=(32, 32 * 3))
    idx, wts = resize_taps(32, 48, "bicubic")
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    wts = np.ascontiguousarray(wts, dtype=np.float64)
    return {
        "im2col 16x32x32x32 k3": (_accel._im2col_nb, _accel._im2col_np, (xp, 3, 3, 1, 32, 32)),
        "col2im 16x32x32x32 k3": (_accel._col2im_nb, _accel._col2im_np, (cols, 16, 32, 34, 34, 3, 3, 1, 32, 32)),
        "blur 32x32x3 k21": (_accel._correlate_nb, _accel._correlate_np, (padded, kernel, 32, 32)),
        "bicubic taps 32->48": (_accel._taps_nb, _accel._taps_np, (src, idx, wts)),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=10)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, (nb, npy, a) in cases(rng).items():
        nb(*a)  # compile outside the timing
        t_nb = min(timeit.repeat(lambda: nb(*a), number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(lambda: npy(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{t_nb:>10.2f}{t_np:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
