"""Compare the jit kernels against their numpy fallbacks.

Runs every hot kernel on both backends with realistic inputs (a textured
image pair, quickshift features at the default parameters, a LIME-sized
mask matrix) and prints the best-of-N wall time per call plus the speedup.

    python3 benchmarks/bench_kernels.py --side 128 --repeats 3
"""

import argparse
import math
import time

import numpy as np

from reconaudit._kernels import numba_impl, numpy_impl
from reconaudit.synthdata import clean_texture

KERNEL_SIZE = 4.0
RATIO = 0.2
COLOR_SCALE = 255.0
N_MASKS = 300
N_SEGMENTS = 100
MSE_CALLS = 200


def build_inputs(side: int, seed: int):
    rng = np.random.default_rng(seed)
    inp = np.ascontiguousarray(clean_texture(side, rng))
    rec = np.ascontiguousarray(clean_texture(side, rng))
    feats = np.ascontiguousarray(inp * (COLOR_SCALE * RATIO))
    radius = int(math.ceil(3.0 * KERNEL_SIZE))
    max_dist = 200.0 * (side / 128.0)

    cells = side // 8
    labels = (
        np.arange(side)[:, None] // cells * cells + np.arange(side)[None, :] // cells
    )
    labels = np.ascontiguousarray(
        (labels % N_SEGMENTS).astype(np.int64)
    )
    masks = np.vstack(
        [
            np.ones(N_SEGMENTS, dtype=np.uint8),
            rng.integers(0, 2, (N_MASKS - 1, N_SEGMENTS)).astype(np.uint8),
        ]
    )
    region = np.zeros((side, side), dtype=np.bool_)
    region[side // 4 : side // 2, side // 4 : side // 2] = True
    return inp, rec, feats, radius, max_dist, labels, masks, region


def best_of(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--side", type=int, default=128, help="image side in pixels")
    ap.add_argument("--repeats", type=int, default=3, help="timing repeats, best kept")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    inp, rec, feats, radius, max_dist, labels, masks, region = build_inputs(
        args.side, args.seed
    )
    dens = numpy_impl.quickshift_density(feats, KERNEL_SIZE, radius)

    cases = [
        ("quickshift_density", lambda m: m.quickshift_density(feats, KERNEL_SIZE, radius)),
        ("quickshift_link", lambda m: m.quickshift_link(feats, dens, max_dist)),
        (f"mask_targets (n={N_MASKS})", lambda m: m.mask_targets(inp, rec, labels, masks)),
        (
            f"masked_mse (x{MSE_CALLS})",
            lambda m: [m.masked_mse(inp, rec, region) for _ in range(MSE_CALLS)],
        ),
    ]

    # first numba call per kernel compiles; do it outside the timed region
    for _name, call in cases:
        call(numba_impl)

    print(f"side={args.side}, repeats={args.repeats} (best kept)")
    print(f"{'kernel':<28} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for name, call in cases:
        t_nb = best_of(lambda: call(numba_impl), args.repeats)
        t_np = best_of(lambda: call(numpy_impl), args.repeats)
        print(f"{name:<28} {t_nb * 1e3:>8.1f}ms {t_np * 1e3:>8.1f}ms {t_np / t_nb:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
