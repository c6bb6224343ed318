"""Synthetic planted-defect dataset with an oracle reconstructor.

Generates smooth low-frequency color textures, plants high-contrast defects
(solid squares and staircase cracks, both aligned to a 4-pixel grid so
partition leaves can tile them exactly), and writes the standard dataset
layout next to a reconstruction cache produced by an oracle: the clean
texture under a slight deterministic blur. Good samples therefore score
small but nonzero, defect samples score high exactly on the planted region,
and every stage of the audit pipeline can be exercised without a trained
model.

Also usable as a demo builder:

    python3 -m reconaudit.synthdata --out demo_data --cache demo_cache
"""

from __future__ import annotations

import argparse
import dataclasses
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .dataset_io import write_cache_entry
from .imagecore import RgbImage, save_png

__all__ = [
    "SynthSpec",
    "clean_texture",
    "square_mask",
    "crack_mask",
    "apply_defect",
    "oracle_reconstruction",
    "generate",
]

_CELL = 4
_BLUR_SIGMA = 0.7


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    """Shape of a generated dataset."""

    side: int = 128
    n_train: int = 4
    n_good: int = 12
    n_squares: int = 6
    n_cracks: int = 6
    seed: int = 0
    category: str = "synthtex"


def clean_texture(side: int, rng: np.random.Generator) -> np.ndarray:
    """A smooth plane-wave texture in [0.2, 0.8], shape (side, side, 3)."""
    yy, xx = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    base = np.zeros((side, side))
    for _ in range(3):
        fy, fx = rng.uniform(-3, 3, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.5, 1.0)
        base += amp * np.sin(2 * np.pi * (fy * yy + fx * xx) / side + phase)
    img = np.empty((side, side, 3))
    for c in range(3):
        shift = rng.uniform(-0.2, 0.2)
        chan = base * rng.uniform(0.7, 1.0) + shift
        lo, hi = chan.min(), chan.max()
        img[:, :, c] = 0.2 + 0.6 * (chan - lo) / (hi - lo)
    return img


def square_mask(side: int, rng: np.random.Generator) -> np.ndarray:
    """A solid square aligned to the 4-pixel grid, side 16 to 32."""
    size = int(rng.choice([16, 24, 32]))
    max_cell = (side - 8 - size) // _CELL
    y0 = _CELL * int(rng.integers(2, max_cell + 1))
    x0 = _CELL * int(rng.integers(2, max_cell + 1))
    mask = np.zeros((side, side), dtype=bool)
    mask[y0 : y0 + size, x0 : x0 + size] = True
    return mask


def crack_mask(side: int, rng: np.random.Generator) -> np.ndarray:
    """A 4-pixel-wide staircase crack on the grid, one connected component."""
    cells = side // _CELL
    cy = int(rng.integers(3, cells - 12))
    cx = int(rng.integers(3, cells - 12))
    mask = np.zeros((side, side), dtype=bool)
    horizontal = bool(rng.integers(0, 2))
    for _ in range(4):
        run = int(rng.integers(2, 5))
        for _ in range(run):
            y0, x0 = cy * _CELL, cx * _CELL
            mask[y0 : y0 + _CELL, x0 : x0 + _CELL] = True
            if horizontal:
                cx = min(cx + 1, cells - 3)
            else:
                cy = min(cy + 1, cells - 3)
        horizontal = not horizontal
    return mask


def apply_defect(
    texture: np.ndarray, mask: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Fill the masked region with a solid near-black or near-white color."""
    value = 0.97 if rng.integers(0, 2) else 0.03
    out = texture.copy()
    out[mask] = value
    return out


def oracle_reconstruction(clean: np.ndarray) -> np.ndarray:
    """What an ideal reconstructor would return: the clean texture, softened.

    The slight blur keeps good-sample scores small but nonzero, the way a
    real model never reproduces its input exactly.
    """
    out = np.empty_like(clean)
    for c in range(3):
        out[:, :, c] = ndimage.gaussian_filter(clean[:, :, c], _BLUR_SIGMA, mode="reflect")
    return np.clip(out, 0.0, 1.0)


def _save_mask(mask: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((mask * np.uint8(255)), mode="L").save(path, format="PNG")


def generate(
    root: str | Path, cache_dir: str | Path | None = None, spec: SynthSpec = SynthSpec()
) -> list[tuple[str, str]]:
    """Write the dataset (and optionally the oracle's reconstruction cache).

    Returns (sample_id, label) pairs for the test split. Deterministic for
    a given spec.
    """
    root = Path(root)
    cat = root / spec.category
    rng = np.random.default_rng(spec.seed)
    written: list[tuple[str, str]] = []

    def emit(split: str, defect: str, index: int, mask: np.ndarray | None):
        stem = f"{index:03d}"
        clean = clean_texture(spec.side, rng)
        if mask is None:
            img = clean
        else:
            img = apply_defect(clean, mask, rng)
            _save_mask(mask, cat / "ground_truth" / defect / f"{stem}_mask.png")
        path = cat / split / defect / f"{stem}.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_png(RgbImage(img), path)
        sample_id = f"{split}/{defect}/{stem}"
        if cache_dir is not None and split == "test":
            write_cache_entry(
                cache_dir, sample_id, RgbImage(oracle_reconstruction(clean))
            )
        if split == "test":
            written.append((sample_id, "good" if defect == "good" else "anomalous"))

    for i in range(spec.n_train):
        emit("train", "good", i, None)
    for i in range(spec.n_good):
        emit("test", "good", i, None)
    for i in range(spec.n_squares):
        emit("test", "square", i, square_mask(spec.side, rng))
    for i in range(spec.n_cracks):
        emit("test", "crack", i, crack_mask(spec.side, rng))
    return written


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out", required=True, help="dataset root to create")
    parser.add_argument("--cache", default=None, help="reconstruction cache to fill")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--side", type=int, default=128)
    parser.add_argument("--category", default="synthtex")
    ns = parser.parse_args(argv)
    spec = SynthSpec(side=ns.side, seed=ns.seed, category=ns.category)
    pairs = generate(ns.out, ns.cache, spec)
    good = sum(1 for _, label in pairs if label == "good")
    print(
        f"wrote {len(pairs)} test samples ({good} good, {len(pairs) - good} anomalous) "
        f"under {Path(ns.out) / spec.category}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
