"""Jit-compiled kernels. See `numpy_impl` for the reference semantics.

All kernels are single-threaded and release the GIL, so callers may run
several samples concurrently from a thread pool without the backends
fighting over cores.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def quickshift_density(feats, kernel_size, radius):
    """Parzen density in joint (color, position) space.

    feats is (h, w, c) float64 with color channels already scaled so that
    one unit of color distance is comparable to one pixel of spatial
    distance. The kernel is Gaussian with bandwidth kernel_size, truncated
    to a square window of the given radius. The self term is included.
    """
    h, w, nc = feats.shape
    inv = 1.0 / (2.0 * kernel_size * kernel_size)
    dens = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            yy0 = y - radius
            if yy0 < 0:
                yy0 = 0
            yy1 = y + radius
            if yy1 > h - 1:
                yy1 = h - 1
            xx0 = x - radius
            if xx0 < 0:
                xx0 = 0
            xx1 = x + radius
            if xx1 > w - 1:
                xx1 = w - 1
            for yy in range(yy0, yy1 + 1):
                for xx in range(xx0, xx1 + 1):
                    d2 = float((yy - y) * (yy - y)) + float((xx - x) * (xx - x))
                    for c in range(nc):
                        df = feats[y, x, c] - feats[yy, xx, c]
                        d2 += df * df
                    acc += math.exp(-d2 * inv)
            dens[y, x] = acc
    return dens


@njit(cache=True, nogil=True)
def quickshift_link(feats, dens, max_dist):
    """Link every pixel to its nearest better neighbor within max_dist.

    "Better" is the total order (higher density, then smaller flat index),
    distance is measured in the joint (color, position) space, and distance
    ties also resolve toward the smaller flat index. Returns the flat parent
    index per pixel; roots point at themselves.

    Candidates are scanned over Chebyshev rings of growing radius r. After
    finishing ring r the scan stops early when the incumbent distance is
    below r + 1: every unscanned pixel is at spatial (hence joint) distance
    at least r + 1 and can neither beat nor tie the incumbent.
    """
    h, w, nc = feats.shape
    md2 = max_dist * max_dist
    parent = np.empty(h * w, dtype=np.int64)
    rmax = int(max_dist)
    cap = h - 1 if h > w else w - 1
    if rmax > cap:
        rmax = cap
    for y in range(h):
        for x in range(w):
            p = y * w + x
            dp = dens[y, x]
            best_d2 = np.inf
            best_q = np.int64(-1)
            for r in range(1, rmax + 1):
                for dy in range(-r, r + 1):
                    yy = y + dy
                    if yy < 0 or yy >= h:
                        continue
                    if dy == -r or dy == r:
                        step = 1
                    else:
                        step = 2 * r
                    xx = x - r
                    while xx <= x + r:
                        if 0 <= xx < w:
                            q = yy * w + xx
                            dq = dens[yy, xx]
                            if dq > dp or (dq == dp and q < p):
                                d2 = float(dy * dy) + float((xx - x) * (xx - x))
                                for c in range(nc):
                                    df = feats[y, x, c] - feats[yy, xx, c]
                                    d2 += df * df
                                if d2 <= md2 and (
                                    d2 < best_d2 or (d2 == best_d2 and q < best_q)
                                ):
                                    best_d2 = d2
                                    best_q = q
                        xx += step
                if best_q >= 0 and best_d2 < float((r + 1) * (r + 1)):
                    break
            parent[p] = best_q if best_q >= 0 else p
    return parent


@njit(cache=True, nogil=True)
def mask_targets(inp, rec, labels, masks):
    """Regression target for each mask vector.

    For mask row s the perturbed image keeps the input pixel where the
    pixel's segment bit is 1 and takes the reconstruction pixel where it is
    0; the target is the mean squared error between the input and that
    perturbed image. Kept pixels contribute exactly zero, so they are
    skipped rather than materialized.
    """
    n = masks.shape[0]
    h, w, nc = inp.shape
    out = np.empty(n, dtype=np.float64)
    denom = float(h * w * nc)
    for s in range(n):
        acc = 0.0
        for y in range(h):
            for x in range(w):
                if masks[s, labels[y, x]] == 0:
                    for c in range(nc):
                        d = inp[y, x, c] - rec[y, x, c]
                        acc += d * d
        out[s] = acc / denom
    return out


@njit(cache=True, nogil=True)
def masked_mse(inp, rec, region):
    """MSE between the input and the input with `region` replaced by rec."""
    h, w, nc = inp.shape
    acc = 0.0
    for y in range(h):
        for x in range(w):
            if region[y, x]:
                for c in range(nc):
                    d = inp[y, x, c] - rec[y, x, c]
                    acc += d * d
    return acc / float(h * w * nc)
