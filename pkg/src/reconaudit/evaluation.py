"""Localization scoring against ground truth, report rows, and panel images.

An attribution map is binarized by a strict threshold and compared to the
ground-truth mask by Jaccard overlap. The per-sample optimal threshold
sweeps a candidate just below every distinct map value (realized as the
previous representable float, so re-binarizing at the reported threshold
reproduces the winning mask bit for bit); ties prefer the largest
threshold, i.e. the sparsest winning mask. Because candidates depend only
on the ordering of map values, the optimum is invariant under strictly
increasing transforms of the map.
"""

from __future__ import annotations

import dataclasses
import io
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy import ndimage

from .errors import GoodSampleError, ShapeMismatchError
from .imagecore import BinaryMask, RgbImage, ScalarMap, as_u8, heat_colors

__all__ = [
    "LocalizationResult",
    "ReportRow",
    "binarize",
    "jaccard",
    "optimal_jaccard",
    "scatter_report",
    "render_panels",
    "save_panels",
    "OVERLAY_TP",
    "OVERLAY_FP",
    "OVERLAY_FN",
    "BOUNDARY_COLOR",
]


def binarize(m: ScalarMap, threshold: float) -> BinaryMask:
    """Pixels strictly above the threshold."""
    return BinaryMask(m.data > threshold)


def jaccard(pred: BinaryMask, gt: BinaryMask) -> float:
    """Intersection over union of two masks.

    The ground truth must be non-empty; localization is undefined on good
    samples. An empty prediction scores 0.
    """
    if (pred.h, pred.w) != (gt.h, gt.w):
        raise ShapeMismatchError(
            f"jaccard: prediction {(pred.h, pred.w)} vs ground truth {(gt.h, gt.w)}"
        )
    gt_count = gt.count()
    if gt_count == 0:
        raise GoodSampleError("jaccard needs a non-empty ground truth mask")
    inter = int((pred.data & gt.data).sum())
    union = int((pred.data | gt.data).sum())
    return inter / union


@dataclasses.dataclass(frozen=True)
class LocalizationResult:
    """The per-sample maximal Jaccard, its threshold, and the overlap split.

    The three masks partition the union of prediction and ground truth:
    tp_mask | fp_mask is the winning binarization, tp_mask | fn_mask is the
    ground truth, and the Jaccard value equals tp / (tp + fp + fn).
    """

    threshold: float
    jaccard: float
    tp_mask: BinaryMask
    fp_mask: BinaryMask
    fn_mask: BinaryMask


def optimal_jaccard(m: ScalarMap, gt: BinaryMask) -> LocalizationResult:
    """Maximize Jaccard over all binarizations of the map.

    Every achievable mask under the strict-> rule is {map >= v} for some
    distinct value v (plus the empty mask, which can never win against the
    always-positive full-mask candidate). The sweep counts overlaps
    cumulatively over descending values; the reported threshold is the
    previous float before the winning v.
    """
    if (m.h, m.w) != (gt.h, gt.w):
        raise ShapeMismatchError(
            f"optimal_jaccard: map {(m.h, m.w)} vs ground truth {(gt.h, gt.w)}"
        )
    gt_count = gt.count()
    if gt_count == 0:
        raise GoodSampleError("optimal_jaccard needs a non-empty ground truth mask")
    flat = m.data.ravel()
    gtf = gt.data.ravel()
    order = np.argsort(-flat, kind="stable")
    vals = flat[order]
    hits = np.cumsum(gtf[order])
    npix = np.arange(1, flat.size + 1)
    # Last index of each block of equal values = the {map >= v} mask.
    block_end = np.nonzero(np.diff(vals, append=-np.inf))[0]
    tp = hits[block_end]
    size = npix[block_end]
    j = tp / (size + gt_count - tp)
    # Descending order: first index attaining the max has the largest v,
    # which is the tie-break winner.
    best = int(np.argmax(j))
    v = float(vals[block_end[best]])
    threshold = float(np.nextafter(v, -np.inf))
    pred = m.data > threshold
    return LocalizationResult(
        threshold=threshold,
        jaccard=float(j[best]),
        tp_mask=BinaryMask(pred & gt.data),
        fp_mask=BinaryMask(pred & ~gt.data),
        fn_mask=BinaryMask(~pred & gt.data),
    )


# ---------------------------------------------------------------------------
# Report table


@dataclasses.dataclass(frozen=True)
class ReportRow:
    """One sample's line in the scatter report; None fields print empty."""

    sample_id: str
    category: str
    setup: str
    alpha: float
    verdict: str
    label: str
    j_lime: float | None = None
    j_shap: float | None = None
    theta_lime: float | None = None
    theta_shap: float | None = None


def scatter_report(rows: list[ReportRow]) -> str:
    """Render report rows as CSV text, sorted by sample id."""
    out = io.StringIO()
    out.write(
        "sample_id,category,setup,alpha,verdict,label,j_lime,j_shap,theta_lime,theta_shap\n"
    )

    def cell(v) -> str:
        return "" if v is None else repr(float(v))

    for r in sorted(rows, key=lambda r: r.sample_id):
        out.write(
            f"{r.sample_id},{r.category},{r.setup},{cell(r.alpha)},{r.verdict},"
            f"{r.label},{cell(r.j_lime)},{cell(r.j_shap)},"
            f"{cell(r.theta_lime)},{cell(r.theta_shap)}\n"
        )
    return out.getvalue()


# ---------------------------------------------------------------------------
# Panels

OVERLAY_TP = (0, 255, 0)
OVERLAY_FP = (255, 0, 0)
OVERLAY_FN = (0, 0, 255)
BOUNDARY_COLOR = (255, 0, 255)

_GAP = 2
_CAPTION_H = 14
_BG = 255
_DIM = 0.35


def _overlay_tile(
    img: RgbImage, beta: ScalarMap | None, loc: LocalizationResult | None, gt: BinaryMask | None
) -> np.ndarray:
    gray = img.data.max(axis=2)
    base = np.clip(np.rint(gray * 255.0 * _DIM), 0, 255).astype(np.uint8)
    tile = np.repeat(base[:, :, None], 3, axis=2)
    if beta is None or loc is None or gt is None:
        return tile
    pred = binarize(beta, loc.threshold).data
    tile[pred & gt.data] = OVERLAY_TP
    tile[pred & ~gt.data] = OVERLAY_FP
    tile[~pred & gt.data] = OVERLAY_FN
    return tile


def _boundary_tile(img: RgbImage, gt: BinaryMask | None) -> np.ndarray:
    tile = as_u8(img).copy()
    if gt is not None and gt.count() > 0:
        interior = ndimage.binary_erosion(gt.data)
        tile[gt.data & ~interior] = BOUNDARY_COLOR
    return tile


def render_panels(
    original: RgbImage,
    reconstruction: RgbImage,
    amap: ScalarMap,
    gt: BinaryMask | None = None,
    beta_lime: ScalarMap | None = None,
    beta_shap: ScalarMap | None = None,
    loc_lime: LocalizationResult | None = None,
    loc_shap: LocalizationResult | None = None,
) -> np.ndarray:
    """Compose the eight-tile audit panel as an RGB uint8 array.

    Tiles, left to right: input, reconstruction, anomaly map, the two
    attribution heatmaps, the two binarized-overlay tiles (true positives
    green, false positives red, false negatives blue, on a dimmed input),
    and the ground-truth boundary on the input. Captions, including the J
    values, render in a strip below the tiles so the tile pixels stay a
    clean census of the overlay classes. Missing optional inputs render as
    the dimmed base with an n/a caption.
    """
    h, w = original.h, original.w
    shapes = {(t.h, t.w) for t in (original, reconstruction, amap, gt, beta_lime, beta_shap) if t is not None}
    if shapes != {(h, w)}:
        raise ShapeMismatchError(f"render_panels: mixed tile shapes {sorted(shapes)}")
    blank = np.full((h, w, 3), 220, dtype=np.uint8)

    def heat_or_blank(m: ScalarMap | None) -> np.ndarray:
        return heat_colors(m) if m is not None else blank

    def j_caption(tag: str, loc: LocalizationResult | None) -> str:
        return f"J_{tag}={loc.jaccard:.3f}" if loc is not None else f"J_{tag}=n/a"

    tiles = [
        (as_u8(original), "input"),
        (as_u8(reconstruction), "recon"),
        (heat_colors(amap), "anomaly"),
        (heat_or_blank(beta_lime), "beta L"),
        (heat_or_blank(beta_shap), "beta S"),
        (_overlay_tile(original, beta_lime, loc_lime, gt), j_caption("L", loc_lime)),
        (_overlay_tile(original, beta_shap, loc_shap, gt), j_caption("S", loc_shap)),
        (_boundary_tile(original, gt), "gt"),
    ]
    ncols = len(tiles)
    canvas = np.full(
        (h + _CAPTION_H, ncols * w + (ncols - 1) * _GAP, 3), _BG, dtype=np.uint8
    )
    for i, (tile, _) in enumerate(tiles):
        x0 = i * (w + _GAP)
        canvas[:h, x0 : x0 + w] = tile
    im = Image.fromarray(canvas, mode="RGB")
    draw = ImageDraw.Draw(im)
    font = ImageFont.load_default()
    for i, (_, caption) in enumerate(tiles):
        x0 = i * (w + _GAP)
        draw.text((x0 + 1, h + 1), caption, fill=(0, 0, 0), font=font)
    return np.asarray(im)


def save_panels(
    path: str | Path,
    original: RgbImage,
    reconstruction: RgbImage,
    amap: ScalarMap,
    gt: BinaryMask | None = None,
    beta_lime: ScalarMap | None = None,
    beta_shap: ScalarMap | None = None,
    loc_lime: LocalizationResult | None = None,
    loc_shap: LocalizationResult | None = None,
) -> None:
    """Render the panel and write it as a PNG."""
    arr = render_panels(
        original, reconstruction, amap, gt, beta_lime, beta_shap, loc_lime, loc_shap
    )
    Image.fromarray(arr, mode="RGB").save(Path(path), format="PNG")
