/**
 * Mild training-time augmentation: rotation, shift, zoom, brightness.
 * All draws come from the caller's Rng, so a seeded run reproduces its
 * augmentation stream exactly; the warp itself is plain bilinear
 * resampling with edge clamping, independent of any tensor backend.
 */
import { Rng } from './rng.js';

export interface AugmentRanges {
  /** Max absolute rotation, degrees. */
  rotation: number;
  /** Max absolute shift as a fraction of the image side. */
  shift: number;
  /** Multiplicative brightness interval. */
  brightness: [number, number];
  /** Zoom interval; 1 keeps scale. */
  zoom: [number, number];
}

export const DEFAULT_RANGES: AugmentRanges = {
  rotation: 15,
  shift: 0.1,
  brightness: [0.8, 1.2],
  zoom: [0.9, 1.1],
};

/** Returns a fresh augmented copy of an HWC image in [0, 1]. */
export function augment(
  img: Float32Array,
  side: number,
  rng: Rng,
  ranges: AugmentRanges = DEFAULT_RANGES,
): Float32Array {
  const theta = (rng.uniform(-ranges.rotation, ranges.rotation) * Math.PI) / 180;
  const zoom = rng.uniform(ranges.zoom[0], ranges.zoom[1]);
  const tx = rng.uniform(-ranges.shift, ranges.shift) * side;
  const ty = rng.uniform(-ranges.shift, ranges.shift) * side;
  const gain = rng.uniform(ranges.brightness[0], ranges.brightness[1]);

  const c = (side - 1) / 2;
  const cos = Math.cos(-theta) / zoom;
  const sin = Math.sin(-theta) / zoom;
  const out = new Float32Array(img.length);
  for (let y = 0; y < side; y++) {
    for (let x = 0; x < side; x++) {
      // inverse map: undo translation, then rotation and zoom about center
      const dx = x - c - tx;
      const dy = y - c - ty;
      const sx = cos * dx - sin * dy + c;
      const sy = sin * dx + cos * dy + c;
      const x0 = Math.max(0, Math.min(side - 1, Math.floor(sx)));
      const y0 = Math.max(0, Math.min(side - 1, Math.floor(sy)));
      const x1 = Math.min(side - 1, x0 + 1);
      const y1 = Math.min(side - 1, y0 + 1);
      const fx = Math.max(0, Math.min(1, sx - x0));
      const fy = Math.max(0, Math.min(1, sy - y0));
      for (let ch = 0; ch < 3; ch++) {
        const v00 = img[(y0 * side + x0) * 3 + ch];
        const v01 = img[(y0 * side + x1) * 3 + ch];
        const v10 = img[(y1 * side + x0) * 3 + ch];
        const v11 = img[(y1 * side + x1) * 3 + ch];
        const top = v00 + (v01 - v00) * fx;
        const bot = v10 + (v11 - v10) * fx;
        const v = (top + (bot - top) * fy) * gain;
        out[(y * side + x) * 3 + ch] = Math.min(1, Math.max(0, v));
      }
    }
  }
  return out;
}
