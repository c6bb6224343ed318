"""Vectorized numpy fallbacks for the hot kernels.

These mirror `numba_impl` operation for operation: same candidate sets, same
tie-breaks, same per-pixel accumulation order where it can matter. They are
slower (the quickshift linker especially) but keep the package functional
when the jit backend is unavailable or disabled.
"""

import numpy as np

_FINISH_THRESHOLD = 256


def quickshift_density(feats, kernel_size, radius):
    """Truncated-Gaussian Parzen density in joint (color, position) space."""
    h, w, nc = feats.shape
    inv = 1.0 / (2.0 * kernel_size * kernel_size)
    dens = np.zeros((h, w), dtype=np.float64)
    for dy in range(-radius, radius + 1):
        py0, py1 = max(0, -dy), h - max(0, dy)
        if py0 >= py1:
            continue
        for dx in range(-radius, radius + 1):
            px0, px1 = max(0, -dx), w - max(0, dx)
            if px0 >= px1:
                continue
            sp = np.s_[py0:py1, px0:px1]
            sq = np.s_[py0 + dy : py1 + dy, px0 + dx : px1 + dx]
            d2 = np.full((py1 - py0, px1 - px0), float(dy * dy + dx * dx))
            for c in range(nc):
                df = feats[sp + (c,)] - feats[sq + (c,)]
                d2 += df * df
            dens[sp] += np.exp(-d2 * inv)
    return dens


def _ring_offsets(r):
    offs = []
    for dy in range(-r, r + 1):
        if dy == -r or dy == r:
            offs.extend((dy, dx) for dx in range(-r, r + 1))
        else:
            offs.append((dy, -r))
            offs.append((dy, r))
    return offs


def _finish_full_scan(feats, dens, max_dist, rmax, todo, best_d2, best_q):
    """Resolve the remaining pixels by one full-window scan each.

    A full scan over the rmax window visits every candidate the ring scan
    could ever visit, so recomputing from scratch gives the same minimum and
    the same tie-break as continuing ring by ring.
    """
    h, w, nc = feats.shape
    md2 = max_dist * max_dist
    flat = np.arange(h * w, dtype=np.int64).reshape(h, w)
    for p in todo:
        y, x = divmod(int(p), w)
        y0, y1 = max(0, y - rmax), min(h - 1, y + rmax)
        x0, x1 = max(0, x - rmax), min(w - 1, x + rmax)
        win = np.s_[y0 : y1 + 1, x0 : x1 + 1]
        dq = dens[win]
        fq = flat[win]
        better = (dq > dens[y, x]) | ((dq == dens[y, x]) & (fq < p))
        ys = np.arange(y0, y1 + 1, dtype=np.float64) - y
        xs = np.arange(x0, x1 + 1, dtype=np.float64) - x
        d2 = ys[:, None] ** 2 + xs[None, :] ** 2
        for c in range(nc):
            df = feats[win + (c,)] - feats[y, x, c]
            d2 = d2 + df * df
        d2 = np.where(better & (d2 <= md2), d2, np.inf)
        m = d2.min()
        if np.isfinite(m):
            best_d2[p] = m
            best_q[p] = int(fq[d2 == m].min())


def quickshift_link(feats, dens, max_dist):
    """Nearest-better-neighbor parents; see numba_impl.quickshift_link."""
    h, w, nc = feats.shape
    n = h * w
    md2 = max_dist * max_dist
    best_d2 = np.full(n, np.inf)
    best_q = np.full(n, -1, dtype=np.int64)
    flat = np.arange(n, dtype=np.int64).reshape(h, w)
    rmax = min(int(max_dist), max(h, w) - 1)
    bd = best_d2.reshape(h, w)
    bq = best_q.reshape(h, w)
    for r in range(1, rmax + 1):
        for dy, dx in _ring_offsets(r):
            py0, py1 = max(0, -dy), h - max(0, dy)
            px0, px1 = max(0, -dx), w - max(0, dx)
            if py0 >= py1 or px0 >= px1:
                continue
            sp = np.s_[py0:py1, px0:px1]
            sq = np.s_[py0 + dy : py1 + dy, px0 + dx : px1 + dx]
            dp = dens[sp]
            dq = dens[sq]
            fp = flat[sp]
            fq = flat[sq]
            better = (dq > dp) | ((dq == dp) & (fq < fp))
            if not better.any():
                continue
            d2 = np.full(dp.shape, float(dy * dy + dx * dx))
            for c in range(nc):
                df = feats[sp + (c,)] - feats[sq + (c,)]
                d2 += df * df
            bdv = bd[sp]
            bqv = bq[sp]
            cand = better & (d2 <= md2) & ((d2 < bdv) | ((d2 == bdv) & (fq < bqv)))
            if cand.any():
                bdv[cand] = d2[cand]
                bqv[cand] = fq[cand]
        settled = (best_q >= 0) & (best_d2 < float((r + 1) * (r + 1)))
        open_count = n - int(settled.sum())
        if open_count == 0:
            break
        if open_count <= _FINISH_THRESHOLD:
            todo = np.nonzero(~settled)[0]
            best_d2[todo] = np.inf
            best_q[todo] = -1
            _finish_full_scan(feats, dens, max_dist, rmax, todo, best_d2, best_q)
            break
    parent = np.where(best_q >= 0, best_q, np.arange(n, dtype=np.int64))
    return parent


def mask_targets(inp, rec, labels, masks):
    """Per-mask MSE targets; see numba_impl.mask_targets."""
    n = masks.shape[0]
    out = np.empty(n, dtype=np.float64)
    denom = float(inp.size)
    for s in range(n):
        keep = masks[s].astype(bool)[labels]
        spliced = np.where(keep[:, :, None], inp, rec)
        d = inp - spliced
        out[s] = float((d * d).sum()) / denom
    return out


def masked_mse(inp, rec, region):
    """MSE between the input and the input with `region` replaced by rec."""
    spliced = np.where(region[:, :, None], rec, inp)
    d = inp - spliced
    return float((d * d).sum()) / float(inp.size)
