"""Exception types shared across the toolkit."""


class ShapeMismatchError(ValueError):
    """Two arrays that must share a shape do not."""


class GoodSampleError(ValueError):
    """A localization metric was asked to score an empty ground-truth mask."""


class RankDeficientDesignError(ValueError):
    """The weighted least-squares design matrix lost rank.

    Carries the offending segment ids so the caller can see which
    segments were constant or duplicated across the sampled masks.
    """

    def __init__(self, segment_ids, message=None):
        self.segment_ids = list(segment_ids)
        if message is None:
            if self.segment_ids:
                message = (
                    "design matrix is rank deficient; suspect segments: "
                    + ", ".join(str(s) for s in self.segment_ids)
                )
            else:
                message = (
                    "design matrix is rank deficient; no constant or duplicate "
                    "segment columns identified"
                )
        super().__init__(message)


class BudgetError(ValueError):
    """An evaluation budget is too small for the requested attribution."""


class SingleClassError(ValueError):
    """Calibration needs at least one sample of each class."""


class DatasetLayoutError(ValueError):
    """A dataset directory does not follow the expected layout."""


class UnknownSampleError(LookupError):
    """A reconstruction was requested for an id the provider does not know."""

    def __init__(self, sample_id):
        self.sample_id = sample_id
        super().__init__(f"no reconstruction for sample id {sample_id!r}")


class ModelGraphError(ValueError):
    """A serialized model graph is malformed or uses unsupported features."""


class ModelShapeError(ValueError):
    """A model's declared input does not match what the toolkit feeds it."""
