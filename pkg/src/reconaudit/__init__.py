"""Audit toolkit for reconstruction-based anomaly detection.

Given a black-box image reconstructor, the toolkit derives anomaly maps and
scores, calibrates a detection threshold, explains where reconstruction
error lives (superpixel surrogate fits and hierarchical partition credits),
and scores localizations against ground truth at each sample's optimal
Jaccard threshold.
"""

__version__ = "0.1.0"

from . import _kernels as kernels
from .detector import CalibrationResult, ScoredSample, calibrate, classify, summarize
from .errors import (
    BudgetError,
    DatasetLayoutError,
    GoodSampleError,
    ModelGraphError,
    ModelShapeError,
    RankDeficientDesignError,
    ShapeMismatchError,
    SingleClassError,
    UnknownSampleError,
)
from .evaluation import (
    LocalizationResult,
    ReportRow,
    binarize,
    jaccard,
    optimal_jaccard,
    render_panels,
    save_panels,
    scatter_report,
)
from .imagecore import (
    BinaryMask,
    RgbImage,
    ScalarMap,
    anomaly_map,
    anomaly_score,
    load_png,
    mse,
    save_png,
    to_gray_max,
)
from .lime_ad import LimeExplanation, fit, neighborhood, perturb, sample_masks
from .segmentation import (
    QuickshiftParams,
    SegmentMap,
    calibrate_segment_count,
    gt_aware_segmentation,
    quickshift,
)
from .shap_ad import (
    PartitionTree,
    ShapExplanation,
    build_partition_tree,
    partition_attribution,
)

__all__ = [
    "__version__",
    "kernels",
    "RgbImage",
    "ScalarMap",
    "BinaryMask",
    "to_gray_max",
    "anomaly_map",
    "anomaly_score",
    "mse",
    "load_png",
    "save_png",
    "QuickshiftParams",
    "SegmentMap",
    "quickshift",
    "gt_aware_segmentation",
    "calibrate_segment_count",
    "LimeExplanation",
    "sample_masks",
    "perturb",
    "neighborhood",
    "fit",
    "PartitionTree",
    "ShapExplanation",
    "build_partition_tree",
    "partition_attribution",
    "ScoredSample",
    "CalibrationResult",
    "calibrate",
    "classify",
    "summarize",
    "LocalizationResult",
    "ReportRow",
    "binarize",
    "jaccard",
    "optimal_jaccard",
    "scatter_report",
    "render_panels",
    "save_panels",
    "ShapeMismatchError",
    "GoodSampleError",
    "RankDeficientDesignError",
    "BudgetError",
    "SingleClassError",
    "DatasetLayoutError",
    "UnknownSampleError",
    "ModelGraphError",
    "ModelShapeError",
]
