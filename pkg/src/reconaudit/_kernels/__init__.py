"""Backend dispatch for the hot kernels.

Two interchangeable implementations exist: `numba_impl` (jit-compiled, the
default) and `numpy_impl` (pure vectorized numpy). Setting the environment
variable ``RECONAUDIT_NO_NUMBA=1`` before import forces the numpy path; the
numpy path is also used automatically when numba cannot be imported.

Both backends implement the same algorithms with the same tie-break rules.
Floating-point sums may differ between backends in the last bits (different
exp implementations, different reduction trees); each backend is individually
deterministic.
"""

import os

__all__ = [
    "quickshift_density",
    "quickshift_link",
    "mask_targets",
    "masked_mse",
    "active_backend",
    "warmup",
]

if os.environ.get("RECONAUDIT_NO_NUMBA", "") == "1":
    from . import numpy_impl as _impl

    _BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl

        _BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _impl

        _BACKEND = "numpy"

quickshift_density = _impl.quickshift_density
quickshift_link = _impl.quickshift_link
mask_targets = _impl.mask_targets
masked_mse = _impl.masked_mse


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return _BACKEND


def warmup() -> None:
    """Run every kernel once on tiny inputs.

    On the numba backend this triggers (cached) compilation so later calls
    are not charged compile time; on numpy it is a no-op apart from the work.
    """
    import numpy as np

    feats = np.zeros((4, 4, 3), dtype=np.float64)
    dens = quickshift_density(feats, 1.0, 2)
    quickshift_link(feats, dens, 3.0)
    inp = np.zeros((4, 4, 3), dtype=np.float64)
    rec = np.ones((4, 4, 3), dtype=np.float64) * 0.5
    labels = np.zeros((4, 4), dtype=np.int64)
    masks = np.array([[1], [0]], dtype=np.uint8)
    mask_targets(inp, rec, labels, masks)
    masked_mse(inp, rec, np.ones((4, 4), dtype=np.bool_))
