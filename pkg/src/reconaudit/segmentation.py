"""Superpixel segmentation by quickshift mode seeking.

Pixels are embedded in a joint (color, position) space where color channels
are scaled to the 8-bit range times `ratio`; with the default ratio this
balances a strong color edge against a couple of pixels of spatial distance,
so segments follow color structure but stay local. Each pixel links to its
nearest strictly-better neighbor (higher kernel density, ties broken by flat
index so plateaus cannot fragment) within `max_dist`; link forests are the
segments.

The ground-truth-aware variant reuses the quickshift labels outside a defect
mask and promotes each connected component of the mask to a fresh segment,
so no segment spans the defect boundary.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from . import _kernels
from .errors import GoodSampleError, ShapeMismatchError
from .imagecore import BinaryMask, RgbImage

__all__ = [
    "QuickshiftParams",
    "SegmentMap",
    "quickshift",
    "gt_aware_segmentation",
    "calibrate_segment_count",
    "to_rle_text",
    "from_rle_text",
    "save_label_png",
    "load_label_png",
]

_COLOR_SCALE = 255.0


@dataclasses.dataclass(frozen=True)
class QuickshiftParams:
    """Parameters of the mode-seeking segmentation.

    kernel_size is the Gaussian density bandwidth (pixels), max_dist the
    longest allowed parent link in joint space, ratio the color-vs-position
    weight in [0, 1]. max_dist=None resolves to 200 * (image width / 128) so
    the default link reach scales with resolution. The density estimate is
    fully deterministic; seed is carried for stochastic variants and ignored
    by the current implementation.
    """

    kernel_size: float = 4.0
    max_dist: float | None = None
    ratio: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.kernel_size <= 0:
            raise ValueError(f"kernel_size must be positive, got {self.kernel_size}")
        if self.max_dist is not None and self.max_dist <= 0:
            raise ValueError(f"max_dist must be positive, got {self.max_dist}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")

    def resolved(self, width: int) -> "QuickshiftParams":
        """Fill the width-dependent max_dist default."""
        if self.max_dist is not None:
            return self
        return dataclasses.replace(self, max_dist=200.0 * (width / 128.0))


@dataclasses.dataclass(frozen=True)
class SegmentMap:
    """Per-pixel segment labels, compacted to 0..k-1 with every label present."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2:
            raise ValueError(f"expected (h, w) label array, got shape {a.shape}")
        if not np.issubdtype(a.dtype, np.integer):
            raise ValueError(f"expected integer labels, got {a.dtype}")
        a = a.astype(np.int64)
        present = np.unique(a)
        if self.k < 1 or present.size != self.k or present[0] != 0 or present[-1] != self.k - 1:
            raise ValueError(
                f"labels must cover exactly 0..k-1 (k={self.k}), found {present.size} "
                f"distinct values in [{present[0] if present.size else '-'}, "
                f"{present[-1] if present.size else '-'}]"
            )
        object.__setattr__(self, "labels", a)

    @property
    def h(self) -> int:
        return self.labels.shape[0]

    @property
    def w(self) -> int:
        return self.labels.shape[1]

    def sizes(self) -> np.ndarray:
        """Pixel count per segment, shape (k,)."""
        return np.bincount(self.labels.ravel(), minlength=self.k)


def _resolve_roots(parent: np.ndarray) -> np.ndarray:
    """Follow parent links to the root of each pixel by pointer doubling."""
    root = parent
    while True:
        nxt = root[root]
        if np.array_equal(nxt, root):
            return root
        root = nxt


def _compact(root_per_pixel: np.ndarray, h: int, w: int) -> SegmentMap:
    roots, inverse = np.unique(root_per_pixel, return_inverse=True)
    return SegmentMap(inverse.reshape(h, w).astype(np.int64), int(roots.size))


def quickshift(img: RgbImage, params: QuickshiftParams | None = None) -> SegmentMap:
    """Segment an image by quickshift mode seeking.

    Deterministic for a given image and parameter set. A uniform image
    yields a single segment; a single pixel image does too.
    """
    p = (params or QuickshiftParams()).resolved(img.w)
    feats = np.ascontiguousarray(img.data * (_COLOR_SCALE * p.ratio))
    radius = int(math.ceil(3.0 * p.kernel_size))
    dens = _kernels.quickshift_density(feats, float(p.kernel_size), radius)
    parent = _kernels.quickshift_link(feats, dens, float(p.max_dist))
    root = _resolve_roots(parent)
    return _compact(root, img.h, img.w)


def gt_aware_segmentation(
    img: RgbImage, gt: BinaryMask, params: QuickshiftParams | None = None
) -> SegmentMap:
    """Quickshift labels outside the mask, fresh segments inside.

    Each 4-connected component of `gt` becomes its own segment, so ground
    truth boundaries are always segment boundaries. The mask must be
    non-empty; this variant only exists for samples with a known defect.
    """
    if (img.h, img.w) != (gt.h, gt.w):
        raise ShapeMismatchError(
            f"gt_aware_segmentation: image {(img.h, img.w)} vs mask {(gt.h, gt.w)}"
        )
    if gt.count() == 0:
        raise GoodSampleError("gt_aware_segmentation needs a non-empty mask")
    base = quickshift(img, params)
    comp, _ = ndimage.label(gt.data)
    merged = base.labels.copy()
    inside = gt.data
    merged[inside] = base.k + comp[inside] - 1
    roots_like = merged.ravel()
    return _compact(roots_like, img.h, img.w)


def calibrate_segment_count(
    img: RgbImage,
    target_k: int,
    params: QuickshiftParams | None = None,
    tolerance: float = 0.2,
    max_iters: int = 12,
) -> tuple[SegmentMap, QuickshiftParams]:
    """Bisect max_dist until the segment count lands near target_k.

    The count is (approximately) non-increasing in max_dist: longer links
    merge more pixels into the same mode. Bisection runs at most max_iters
    quickshift evaluations and accepts as soon as k is within
    `tolerance * target_k` of the target; if no iterate qualifies, the
    closest one seen is returned rather than raising.
    """
    if target_k < 1:
        raise ValueError(f"target_k must be >= 1, got {target_k}")
    p0 = (params or QuickshiftParams()).resolved(img.w)
    lo = 1.0
    hi = 2.0 * math.hypot(img.h, img.w)
    best: tuple[int, SegmentMap, QuickshiftParams] | None = None
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        p = dataclasses.replace(p0, max_dist=mid)
        seg = quickshift(img, p)
        err = abs(seg.k - target_k)
        if best is None or err < best[0]:
            best = (err, seg, p)
        if err <= tolerance * target_k:
            return seg, p
        if seg.k > target_k:
            lo = mid
        else:
            hi = mid
    assert best is not None
    return best[1], best[2]


# ---------------------------------------------------------------------------
# Label map serialization


def to_rle_text(seg: SegmentMap) -> str:
    """Run-length encode a label map as text, one image row per line.

    First line is "h w k"; each following line holds "label:length" runs for
    one row. Intended for golden tests: small, diffable, exact.
    """
    lines = [f"{seg.h} {seg.w} {seg.k}"]
    for row in seg.labels:
        runs = []
        start = 0
        for i in range(1, len(row) + 1):
            if i == len(row) or row[i] != row[start]:
                runs.append(f"{int(row[start])}:{i - start}")
                start = i
        lines.append(" ".join(runs))
    return "\n".join(lines) + "\n"


def from_rle_text(text: str) -> SegmentMap:
    """Inverse of `to_rle_text`."""
    lines = [ln for ln in text.strip().split("\n")]
    h, w, k = (int(t) for t in lines[0].split())
    if len(lines) != h + 1:
        raise ValueError(f"expected {h} row lines, got {len(lines) - 1}")
    labels = np.empty((h, w), dtype=np.int64)
    for y, line in enumerate(lines[1:]):
        x = 0
        for token in line.split():
            lab, length = token.split(":")
            labels[y, x : x + int(length)] = int(lab)
            x += int(length)
        if x != w:
            raise ValueError(f"row {y} encodes {x} pixels, expected {w}")
    return SegmentMap(labels, k)


def save_label_png(seg: SegmentMap, path: str | Path) -> None:
    """Write labels as a 16-bit grayscale PNG (k must fit in 16 bits)."""
    if seg.k > 65536:
        raise ValueError(f"cannot store {seg.k} labels in a 16-bit PNG")
    arr = seg.labels.astype("<u2")
    Image.fromarray(arr).save(Path(path), format="PNG")


def load_label_png(path: str | Path) -> SegmentMap:
    """Read a label map written by `save_label_png`."""
    with Image.open(Path(path)) as im:
        a = np.asarray(im)
    labels = a.astype(np.int64)
    k = int(labels.max()) + 1
    return SegmentMap(labels, k)
