"""Dataset scanning and reconstruction providers.

A dataset root follows the industrial-inspection layout:

    <root>/<category>/train/good/*.png
    <root>/<category>/test/<defect_type>/*.png
    <root>/<category>/ground_truth/<defect_type>/<stem>_mask.png

Sample ids are "<split>/<defect_type>/<stem>", which both sorts
deterministically and doubles as the relative path of a sample's entry in a
reconstruction cache.

Reconstructions come from a provider: either a cache directory of float
rasters (or PNGs) keyed by sample id, or a serialized encoder-decoder model
executed in-process. Both are deterministic; the model provider decodes the
latent mean unless sampling is explicitly requested, and sampling requires
the graph to expose a noise input.
"""

from __future__ import annotations

import dataclasses
import warnings
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image

from . import onnx_io
from .errors import DatasetLayoutError, ModelShapeError, UnknownSampleError
from .imagecore import BinaryMask, RgbImage, load_float_raster, load_png, save_float_raster

__all__ = [
    "SampleRecord",
    "ReconstructionProvider",
    "scan_dataset",
    "load_and_resize",
    "load_mask_resized",
    "CachedProvider",
    "cached_provider",
    "OnnxProvider",
    "inference_provider",
    "write_cache_entry",
    "DEFAULT_SIDE",
]

DEFAULT_SIDE = 128


@dataclasses.dataclass(frozen=True)
class SampleRecord:
    """One image of a category with its split, defect type, and mask path."""

    sample_id: str
    category: str
    split: str
    defect_type: str
    label: str
    image_path: Path
    mask_path: Path | None


def _scan_split(cat_dir: Path, category: str, split: str) -> list[SampleRecord]:
    split_dir = cat_dir / split
    if not split_dir.is_dir():
        raise DatasetLayoutError(f"missing {split}/ directory under {cat_dir}")
    records = []
    subdirs = sorted(p for p in split_dir.iterdir() if p.is_dir())
    if not subdirs:
        raise DatasetLayoutError(f"{split_dir} contains no defect-type directories")
    for sub in subdirs:
        defect = sub.name
        if split == "train" and defect != "good":
            raise DatasetLayoutError(
                f"train split may only contain good/, found {split_dir / defect}"
            )
        images = sorted(sub.glob("*.png"))
        if not images:
            raise DatasetLayoutError(f"{sub} contains no PNG images")
        for img_path in images:
            stem = img_path.stem
            mask_path = None
            if defect != "good":
                gt_dir = cat_dir / "ground_truth" / defect
                for candidate in (gt_dir / f"{stem}_mask.png", gt_dir / f"{stem}.png"):
                    if candidate.is_file():
                        mask_path = candidate
                        break
                if mask_path is None:
                    warnings.warn(
                        f"no ground truth mask for {img_path}; localization will be "
                        "skipped for this sample",
                        stacklevel=3,
                    )
            records.append(
                SampleRecord(
                    sample_id=f"{split}/{defect}/{stem}",
                    category=category,
                    split=split,
                    defect_type=defect,
                    label="good" if defect == "good" else "anomalous",
                    image_path=img_path,
                    mask_path=mask_path,
                )
            )
    return records


def scan_dataset(root: str | Path, category: str) -> list[SampleRecord]:
    """Enumerate a category's samples, sorted by sample id.

    Both train/ and test/ must exist; the train split must contain only
    good/. Missing masks for anomalous test images produce a warning, not
    an error, so partially annotated datasets still score.
    """
    cat_dir = Path(root) / category
    if not cat_dir.is_dir():
        raise DatasetLayoutError(f"no category directory {cat_dir}")
    records = _scan_split(cat_dir, category, "train") + _scan_split(
        cat_dir, category, "test"
    )
    return sorted(records, key=lambda r: r.sample_id)


def load_and_resize(path: str | Path, side: int = DEFAULT_SIDE) -> RgbImage:
    """Load a PNG as RGB and bilinearly resize to side x side.

    Grayscale files are replicated across channels before resizing.
    """
    with Image.open(Path(path)) as im:
        rgb = im.convert("RGB")
        if rgb.size != (side, side):
            rgb = rgb.resize((side, side), Image.BILINEAR)
        a = np.asarray(rgb, dtype=np.uint8)
    return RgbImage.from_u8(a)


def load_mask_resized(path: str | Path, side: int = DEFAULT_SIDE) -> BinaryMask:
    """Load a ground-truth mask, nearest-neighbor resized, thresholded at > 0."""
    with Image.open(Path(path)) as im:
        g = im.convert("L")
        if g.size != (side, side):
            g = g.resize((side, side), Image.NEAREST)
        a = np.asarray(g)
    return BinaryMask(a > 0)


class ReconstructionProvider(Protocol):
    """Anything that maps input images to reconstructions, deterministically."""

    def reconstruct(
        self, images: list[RgbImage], sample_ids: list[str] | None = None
    ) -> list[RgbImage]: ...


def write_cache_entry(cache_dir: str | Path, sample_id: str, image: RgbImage) -> Path:
    """Store one reconstruction as a float32 raster under its sample id."""
    path = Path(cache_dir) / f"{sample_id}.npy"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_float_raster(image.data, path)
    return path


class CachedProvider:
    """Serve reconstructions from rasters keyed by sample id.

    For id X, <cache_dir>/X.npy (float32, h x w x 3, values in [0, 1]) is
    preferred and <cache_dir>/X.png accepted. Unknown ids raise
    UnknownSampleError naming the id.
    """

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)
        if not self.cache_dir.is_dir():
            raise DatasetLayoutError(f"cache directory {self.cache_dir} does not exist")

    def reconstruct(
        self, images: list[RgbImage], sample_ids: list[str] | None = None
    ) -> list[RgbImage]:
        if sample_ids is None or len(sample_ids) != len(images):
            raise ValueError("cached provider needs one sample id per image")
        out = []
        for img, sid in zip(images, sample_ids):
            npy = self.cache_dir / f"{sid}.npy"
            png = self.cache_dir / f"{sid}.png"
            if npy.is_file():
                a = load_float_raster(npy)
                if a.shape != (img.h, img.w, 3):
                    raise ModelShapeError(
                        f"cache entry {sid!r} has shape {a.shape}, "
                        f"expected {(img.h, img.w, 3)}"
                    )
                rec = RgbImage(a.astype(np.float64))
            elif png.is_file():
                rec = load_png(png)
                if (rec.h, rec.w) != (img.h, img.w):
                    raise ModelShapeError(
                        f"cache entry {sid!r} is {(rec.h, rec.w)}, "
                        f"expected {(img.h, img.w)}"
                    )
            else:
                raise UnknownSampleError(sid)
            out.append(rec)
        return out


def cached_provider(cache_dir: str | Path) -> CachedProvider:
    """Build a provider over a reconstruction cache directory."""
    return CachedProvider(cache_dir)


_OUT_OF_RANGE_TOL = 1e-3


class OnnxProvider:
    """Run a serialized encoder-decoder graph for reconstructions.

    The image input may be laid out (N, 3, H, W) or (N, H, W, 3); the
    layout is detected from the declared dims. A graph may declare a second
    input (the latent noise); it is fed zeros for mean decoding, or seeded
    standard normal draws when sample_latent is set.
    """

    def __init__(self, model_path: str | Path, sample_latent: bool = False, seed: int = 0):
        self.graph = onnx_io.load_model(model_path)
        image_spec = self.graph.inputs[0]
        dims = image_spec.dims
        if len(dims) != 4:
            raise ModelShapeError(
                f"model input {image_spec.name!r} has dims {dims}, expected 4 axes"
            )
        if dims[1] == 3 and isinstance(dims[2], int) and isinstance(dims[3], int):
            self.channels_first = True
            self.height, self.width = dims[2], dims[3]
        elif dims[3] == 3 and isinstance(dims[1], int) and isinstance(dims[2], int):
            self.channels_first = False
            self.height, self.width = dims[1], dims[2]
        else:
            raise ModelShapeError(
                f"model input {image_spec.name!r} has dims {dims}; expected a "
                "3-channel axis in position 1 or 3 with fixed spatial dims"
            )
        self.input_name = image_spec.name
        self.output_name = self.graph.outputs[0].name
        noise_specs = [
            s for s in self.graph.inputs[1:] if s.name not in self.graph.initializers
        ]
        self.noise_spec = noise_specs[0] if noise_specs else None
        self.sample_latent = sample_latent
        if sample_latent and self.noise_spec is None:
            raise ModelShapeError(
                "sampling was requested but the graph has no noise input; "
                "it can only decode the latent mean"
            )
        self._rng = np.random.default_rng(seed)

    def reconstruct(
        self, images: list[RgbImage], sample_ids: list[str] | None = None
    ) -> list[RgbImage]:
        for img in images:
            if (img.h, img.w) != (self.height, self.width):
                raise ModelShapeError(
                    f"model expects {self.height} x {self.width} inputs, "
                    f"got {img.h} x {img.w}"
                )
        batch = np.stack([img.data for img in images]).astype(np.float32)
        if self.channels_first:
            batch = batch.transpose(0, 3, 1, 2)
        feeds = {self.input_name: batch}
        if self.noise_spec is not None:
            zdims = tuple(
                len(images) if not isinstance(d, int) else d for d in self.noise_spec.dims
            )
            if self.sample_latent:
                noise = self._rng.standard_normal(zdims).astype(np.float32)
            else:
                noise = np.zeros(zdims, dtype=np.float32)
            feeds[self.noise_spec.name] = noise
        out = onnx_io.run_graph(self.graph, feeds)[self.output_name]
        if out.ndim != 4:
            raise ModelShapeError(f"model output has {out.ndim} axes, expected 4")
        if self.channels_first:
            out = out.transpose(0, 2, 3, 1)
        lo, hi = float(out.min()), float(out.max())
        if lo < -_OUT_OF_RANGE_TOL or hi > 1.0 + _OUT_OF_RANGE_TOL:
            raise ModelShapeError(
                f"model output leaves [0, 1] by more than {_OUT_OF_RANGE_TOL}: "
                f"min={lo}, max={hi}"
            )
        out = np.clip(out, 0.0, 1.0)
        return [RgbImage(out[i].astype(np.float64)) for i in range(out.shape[0])]


def inference_provider(
    model_path: str | Path, sample_latent: bool = False, seed: int = 0
) -> OnnxProvider:
    """Build a provider that runs the serialized model in-process."""
    return OnnxProvider(model_path, sample_latent=sample_latent, seed=seed)
