"""Image containers and the pixel-level reconstruction-error primitives.

Everything downstream works on three small array wrappers: `RgbImage` for
inputs and reconstructions, `ScalarMap` for anomaly maps and attributions,
`BinaryMask` for ground truth and binarized localizations. The wrappers
validate once at the boundary so the numeric code can stay assertion-free.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ShapeMismatchError

__all__ = [
    "RgbImage",
    "ScalarMap",
    "BinaryMask",
    "to_gray_max",
    "anomaly_map",
    "anomaly_score",
    "mse",
    "load_png",
    "save_png",
    "as_u8",
    "load_float_raster",
    "save_float_raster",
    "save_heatmap_png",
    "heat_colors",
]


@dataclasses.dataclass(frozen=True)
class RgbImage:
    """An RGB image as float64 values in [0, 1], shape (h, w, 3)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) array, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"image must have at least one pixel, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("image contains non-finite values")
        lo, hi = float(a.min()), float(a.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"image values outside [0, 1]: min={lo}, max={hi}")
        object.__setattr__(self, "data", a)

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_u8(cls, a: np.ndarray) -> "RgbImage":
        """Build from an 8-bit array by dividing by 255."""
        a = np.asarray(a)
        if a.dtype != np.uint8:
            raise ValueError(f"expected uint8 input, got {a.dtype}")
        return cls(a.astype(np.float64) / 255.0)


@dataclasses.dataclass(frozen=True)
class ScalarMap:
    """A per-pixel scalar field, shape (h, w), finite float64."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError(f"expected (h, w) array, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"map must have at least one pixel, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("map contains non-finite values")
        object.__setattr__(self, "data", a)

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]


@dataclasses.dataclass(frozen=True)
class BinaryMask:
    """A per-pixel boolean mask, shape (h, w)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise ValueError(f"expected (h, w) array, got shape {a.shape}")
        if a.dtype != np.bool_:
            raise ValueError(f"expected bool dtype, got {a.dtype}")
        object.__setattr__(self, "data", a)

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def w(self) -> int:
        return self.data.shape[1]

    def count(self) -> int:
        """Number of set pixels."""
        return int(self.data.sum())


def _require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{what}: shapes {a.shape} and {b.shape} differ")


def to_gray_max(img: RgbImage) -> ScalarMap:
    """Collapse RGB to a single channel by taking the per-pixel channel maximum."""
    return ScalarMap(img.data.max(axis=2))


def anomaly_map(original: RgbImage, reconstruction: RgbImage) -> ScalarMap:
    """Absolute difference of the channel-max grayscales of input and reconstruction.

    Symmetric in its arguments and bounded to [0, 1].
    """
    _require_same_shape(original.data, reconstruction.data, "anomaly_map")
    g0 = original.data.max(axis=2)
    g1 = reconstruction.data.max(axis=2)
    return ScalarMap(np.abs(g0 - g1))


def anomaly_score(amap: ScalarMap) -> float:
    """The sample-level anomaly score: the maximum of the anomaly map."""
    return float(amap.data.max())


def mse(a: RgbImage, b: RgbImage) -> float:
    """Mean squared error over every pixel and channel."""
    _require_same_shape(a.data, b.data, "mse")
    d = a.data - b.data
    return float(np.mean(d * d))


# ---------------------------------------------------------------------------
# Raster I/O


def as_u8(img: RgbImage) -> np.ndarray:
    """Quantize to 8-bit with round-half-to-even, the inverse of `from_u8`."""
    return np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)


def save_png(img: RgbImage, path: str | Path) -> None:
    """Write an 8-bit RGB PNG."""
    Image.fromarray(as_u8(img), mode="RGB").save(Path(path), format="PNG")


def load_png(path: str | Path) -> RgbImage:
    """Read an 8-bit PNG as an RgbImage; grayscale inputs are replicated to RGB."""
    with Image.open(Path(path)) as im:
        rgb = im.convert("RGB")
        a = np.asarray(rgb, dtype=np.uint8)
    return RgbImage.from_u8(a)


def save_float_raster(arr: np.ndarray, path: str | Path) -> None:
    """Write a float array as a 32-bit .npy raster (exact float32 round trip)."""
    a = np.asarray(arr, dtype=np.float32)
    np.save(Path(path), a, allow_pickle=False)


def load_float_raster(path: str | Path) -> np.ndarray:
    """Read a 32-bit .npy raster back as float32."""
    a = np.load(Path(path), allow_pickle=False)
    if a.dtype != np.float32:
        raise ValueError(f"expected float32 raster, got {a.dtype}")
    return a


# ---------------------------------------------------------------------------
# Heatmap rendering
#
# Fixed five-anchor ramp (black, violet, red, orange, pale yellow) expanded to
# 256 entries by linear interpolation. Kept in-package so rendered PNGs do not
# depend on a plotting library's palette tables.

_HEAT_ANCHORS = (
    (0.00, (0, 0, 0)),
    (0.25, (50, 16, 110)),
    (0.50, (189, 55, 84)),
    (0.75, (250, 144, 8)),
    (1.00, (252, 254, 164)),
)


def _build_heat_lut() -> np.ndarray:
    xs = np.array([a[0] for a in _HEAT_ANCHORS])
    cols = np.array([a[1] for a in _HEAT_ANCHORS], dtype=np.float64)
    grid = np.linspace(0.0, 1.0, 256)
    lut = np.empty((256, 3), dtype=np.uint8)
    for c in range(3):
        lut[:, c] = np.clip(np.rint(np.interp(grid, xs, cols[:, c])), 0, 255)
    return lut


_HEAT_LUT = _build_heat_lut()


def heat_colors(m: ScalarMap) -> np.ndarray:
    """Map a scalar field to (h, w, 3) uint8 heat colors.

    The field is min-max normalized per call; a constant field maps to the
    bottom of the ramp.
    """
    a = m.data
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        idx = np.clip(np.rint((a - lo) / (hi - lo) * 255.0), 0, 255).astype(np.intp)
    else:
        idx = np.zeros(a.shape, dtype=np.intp)
    return _HEAT_LUT[idx]


def save_heatmap_png(m: ScalarMap, path: str | Path) -> None:
    """Write a scalar field as a heat-colored 8-bit PNG."""
    Image.fromarray(heat_colors(m), mode="RGB").save(Path(path), format="PNG")
