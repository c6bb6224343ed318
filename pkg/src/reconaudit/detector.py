"""Threshold calibration and classification on sample anomaly scores.

A sample whose score reaches the threshold is called anomalous. The
threshold is picked from the midpoints between adjacent distinct scores
(plus one candidate below the minimum and one above the maximum, so the
all-anomalous and all-good verdicts stay reachable) by maximizing
sqrt(TPR * (1 - FPR)); ties resolve to the smallest candidate.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import SingleClassError

__all__ = [
    "LABEL_GOOD",
    "LABEL_ANOMALOUS",
    "ScoredSample",
    "CalibrationResult",
    "calibrate",
    "classify",
    "summarize",
]

LABEL_GOOD = "good"
LABEL_ANOMALOUS = "anomalous"


@dataclasses.dataclass(frozen=True)
class ScoredSample:
    """One sample's anomaly score with its ground-truth label."""

    sample_id: str
    score: float
    label: str

    def __post_init__(self):
        if self.label not in (LABEL_GOOD, LABEL_ANOMALOUS):
            raise ValueError(
                f"label must be {LABEL_GOOD!r} or {LABEL_ANOMALOUS!r}, got {self.label!r}"
            )
        if not math.isfinite(self.score) or self.score < 0:
            raise ValueError(f"score must be finite and non-negative, got {self.score}")


@dataclasses.dataclass(frozen=True)
class CalibrationResult:
    """Chosen threshold with its operating point and the full candidate sweep."""

    threshold: float
    objective: float
    tpr: float
    fpr: float
    confusion: dict[str, int]
    roc_points: tuple[tuple[float, float, float], ...]


def _operating_point(
    scores_anom: np.ndarray, scores_good: np.ndarray, threshold: float
) -> tuple[float, float, dict[str, int]]:
    tp = int((scores_anom >= threshold).sum())
    fn = scores_anom.size - tp
    fp = int((scores_good >= threshold).sum())
    tn = scores_good.size - fp
    tpr = tp / scores_anom.size
    fpr = fp / scores_good.size
    return tpr, fpr, {"tp": tp, "fp": fp, "tn": tn, "fn": fn}


def calibrate(samples: list[ScoredSample]) -> CalibrationResult:
    """Pick the threshold maximizing sqrt(TPR * (1 - FPR)).

    Needs at least one sample of each label. The candidate set covers every
    achievable confusion, so the sweep is exhaustive; roc_points reports
    (threshold, TPR, FPR) for all candidates in ascending threshold order.
    """
    anom = np.array([s.score for s in samples if s.label == LABEL_ANOMALOUS])
    good = np.array([s.score for s in samples if s.label == LABEL_GOOD])
    if anom.size == 0 or good.size == 0:
        raise SingleClassError(
            f"calibration needs both labels, got {anom.size} anomalous and {good.size} good"
        )
    distinct = np.unique(np.concatenate([anom, good]))
    candidates = np.concatenate(
        [[distinct[0] - 1.0], (distinct[:-1] + distinct[1:]) / 2.0, [distinct[-1] + 1.0]]
    )
    best = None
    roc = []
    for t in candidates:
        tpr, fpr, conf = _operating_point(anom, good, float(t))
        objective = math.sqrt(tpr * (1.0 - fpr))
        roc.append((float(t), tpr, fpr))
        if best is None or objective > best[0]:
            best = (objective, float(t), tpr, fpr, conf)
    objective, threshold, tpr, fpr, conf = best
    return CalibrationResult(
        threshold=threshold,
        objective=objective,
        tpr=tpr,
        fpr=fpr,
        confusion=conf,
        roc_points=tuple(roc),
    )


def classify(score: float, threshold: float) -> str:
    """Anomalous iff the score reaches the threshold (inclusive)."""
    return LABEL_ANOMALOUS if score >= threshold else LABEL_GOOD


def summarize(samples: list[ScoredSample], result: CalibrationResult) -> dict:
    """Dataset-level summary at the calibrated threshold."""
    n = len(samples)
    correct = sum(
        1 for s in samples if classify(s.score, result.threshold) == s.label
    )
    by_label: dict[str, list[float]] = {LABEL_GOOD: [], LABEL_ANOMALOUS: []}
    for s in samples:
        by_label[s.label].append(s.score)
    score_stats = {}
    for label, vals in by_label.items():
        if vals:
            a = np.array(vals)
            score_stats[label] = {
                "count": int(a.size),
                "min": float(a.min()),
                "median": float(np.median(a)),
                "max": float(a.max()),
            }
        else:
            score_stats[label] = {"count": 0, "min": None, "median": None, "max": None}
    return {
        "samples": n,
        "threshold": result.threshold,
        "objective": result.objective,
        "tpr": result.tpr,
        "fpr": result.fpr,
        "accuracy": correct / n,
        "confusion": dict(result.confusion),
        "scores": score_stats,
    }
