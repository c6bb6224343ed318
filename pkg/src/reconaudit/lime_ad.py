"""Local surrogate explanation of reconstruction error over superpixels.

A perturbed image keeps original pixels where a segment's mask bit is 1 and
takes reconstruction pixels where it is 0. The black-box value of a mask is
the MSE between the input and its perturbed version; a weighted linear model
fit over sampled masks then attributes that error to segments. Because the
value function is exactly additive over segments, the fitted coefficient of
segment i recovers the negated share of error living in that segment, and
the explanation map flips the sign so that anomalous segments score high.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import _kernels
from .errors import RankDeficientDesignError, ShapeMismatchError
from .imagecore import RgbImage, ScalarMap
from .segmentation import SegmentMap

__all__ = [
    "LimeExplanation",
    "sample_masks",
    "perturb",
    "neighborhood",
    "fit",
    "explain",
    "DEFAULT_KERNEL_WIDTH",
]

DEFAULT_KERNEL_WIDTH = 0.25


@dataclasses.dataclass(frozen=True)
class LimeExplanation:
    """Fitted surrogate: per-segment coefficients and the per-pixel map.

    coefficients[i] is the linear term of segment i (negative where the
    segment carries reconstruction error); intercept is the value at the
    all-zeros mask; residuals are unweighted fit residuals per sample;
    pixel_attribution paints -coefficients[i] over segment i so that high
    values mean anomalous.
    """

    coefficients: np.ndarray
    intercept: float
    residuals: np.ndarray
    pixel_attribution: ScalarMap


def sample_masks(k: int, n: int, seed: int) -> np.ndarray:
    """Draw n mask vectors over k segments, Bernoulli(1/2) per bit.

    Row 0 is always the all-ones mask (the unperturbed anchor). Requires
    n >= k + 2 so the design matrix can reach full rank. Deterministic for
    a given seed.
    """
    if k < 1:
        raise ValueError(f"need at least one segment, got k={k}")
    if n < k + 2:
        raise ValueError(f"need n >= k + 2 samples to fit k={k} segments, got n={n}")
    rng = np.random.default_rng(seed)
    masks = rng.integers(0, 2, size=(n, k), dtype=np.uint8)
    masks[0, :] = 1
    return masks


def perturb(
    img: RgbImage, reconstruction: RgbImage, seg: SegmentMap, mask_row: np.ndarray
) -> RgbImage:
    """Materialize one perturbed image for a mask vector."""
    if (img.h, img.w) != (seg.h, seg.w):
        raise ShapeMismatchError(
            f"perturb: image {(img.h, img.w)} vs segmentation {(seg.h, seg.w)}"
        )
    row = np.asarray(mask_row)
    if row.shape != (seg.k,):
        raise ValueError(f"mask row has shape {row.shape}, expected ({seg.k},)")
    keep = row.astype(bool)[seg.labels]
    return RgbImage(np.where(keep[:, :, None], img.data, reconstruction.data))


def neighborhood(
    img: RgbImage,
    reconstruction: RgbImage,
    seg: SegmentMap,
    masks: np.ndarray,
    kernel_width: float = DEFAULT_KERNEL_WIDTH,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate every mask and weight it by proximity to the full image.

    Returns (targets, weights). targets[i] is the MSE between the input and
    the perturbed image of mask i; weights[i] = exp(-d^2 / kernel_width^2)
    with d the fraction of zero bits in the mask, so the all-ones anchor
    gets weight 1. Targets depend only on the mask, never on evaluation
    order.
    """
    if (img.h, img.w) != (reconstruction.h, reconstruction.w):
        raise ShapeMismatchError(
            f"neighborhood: image {(img.h, img.w)} vs "
            f"reconstruction {(reconstruction.h, reconstruction.w)}"
        )
    if (img.h, img.w) != (seg.h, seg.w):
        raise ShapeMismatchError(
            f"neighborhood: image {(img.h, img.w)} vs segmentation {(seg.h, seg.w)}"
        )
    masks = np.ascontiguousarray(np.asarray(masks, dtype=np.uint8))
    if masks.ndim != 2 or masks.shape[1] != seg.k:
        raise ValueError(f"masks have shape {masks.shape}, expected (n, {seg.k})")
    if kernel_width <= 0:
        raise ValueError(f"kernel_width must be positive, got {kernel_width}")
    targets = _kernels.mask_targets(
        np.ascontiguousarray(img.data),
        np.ascontiguousarray(reconstruction.data),
        np.ascontiguousarray(seg.labels),
        masks,
    )
    zero_frac = 1.0 - masks.mean(axis=1, dtype=np.float64)
    weights = np.exp(-(zero_frac**2) / (kernel_width**2))
    return targets, weights


def _diagnose_rank_deficiency(masks: np.ndarray) -> list[int]:
    """Name segments whose mask columns are constant, duplicated, or
    complementary; any of those makes the design collinear."""
    n, k = masks.shape
    bad: set[int] = set()
    for j in range(k):
        col = masks[:, j]
        if col.min() == col.max():
            bad.add(j)
    seen: dict[bytes, int] = {}
    for j in range(k):
        key = masks[:, j].tobytes()
        comp = (1 - masks[:, j]).astype(np.uint8).tobytes()
        if key in seen:
            bad.add(seen[key])
            bad.add(j)
        if comp in seen:
            bad.add(seen[comp])
            bad.add(j)
        seen.setdefault(key, j)
    return sorted(bad)


def fit(
    seg: SegmentMap,
    masks: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    ridge: float = 0.0,
) -> LimeExplanation:
    """Weighted least squares of targets on mask bits plus an intercept.

    With ridge=0 the fit is exact least squares and a rank-deficient design
    raises RankDeficientDesignError naming the suspect segments; a positive
    ridge penalizes the segment coefficients (never the intercept) and
    always solves.
    """
    masks = np.asarray(masks)
    targets = np.asarray(targets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n, k = masks.shape
    if k != seg.k:
        raise ValueError(f"masks cover {k} segments, segmentation has {seg.k}")
    if targets.shape != (n,) or weights.shape != (n,):
        raise ValueError(
            f"targets {targets.shape} and weights {weights.shape} must both be ({n},)"
        )
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    design = np.empty((n, k + 1), dtype=np.float64)
    design[:, 0] = 1.0
    design[:, 1:] = masks
    sw = np.sqrt(weights)
    if ridge == 0.0:
        coef, _, rank, _ = np.linalg.lstsq(design * sw[:, None], targets * sw, rcond=None)
        if rank < k + 1:
            raise RankDeficientDesignError(_diagnose_rank_deficiency(masks.astype(np.uint8)))
    elif ridge > 0.0:
        a = design * sw[:, None]
        gram = a.T @ a
        gram[1:, 1:] += ridge * np.eye(k)
        coef = np.linalg.solve(gram, a.T @ (targets * sw))
    else:
        raise ValueError(f"ridge must be non-negative, got {ridge}")
    residuals = targets - design @ coef
    b = coef[1:]
    return LimeExplanation(
        coefficients=b,
        intercept=float(coef[0]),
        residuals=residuals,
        pixel_attribution=ScalarMap((-b)[seg.labels]),
    )


def explain(
    img: RgbImage,
    reconstruction: RgbImage,
    seg: SegmentMap,
    n: int = 5000,
    seed: int = 0,
    kernel_width: float = DEFAULT_KERNEL_WIDTH,
    ridge: float = 0.0,
) -> LimeExplanation:
    """Sample masks, evaluate the neighborhood, and fit in one call."""
    masks = sample_masks(seg.k, n, seed)
    targets, weights = neighborhood(img, reconstruction, seg, masks, kernel_width)
    return fit(seg, masks, targets, weights, ridge)
