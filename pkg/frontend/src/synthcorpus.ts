/**
 * Tiny synthetic corpus in the MVTec layout, for smoke training and the
 * test suite. Good samples are smooth color gradients with mild noise;
 * anomalous samples carry a solid near-black or near-white rectangle, so
 * a reconstructor trained on good data cannot reproduce the defect.
 */
import * as fs from 'node:fs';
import * as path from 'node:path';

import { IMAGE_SIDE } from './dataset.js';
import { encodePng } from './png.js';
import { Rng } from './rng.js';

export interface CorpusSpec {
  side: number;
  nTrain: number;
  nGood: number;
  nDefect: number;
  seed: number;
  category: string;
}

export const DEFAULT_CORPUS: CorpusSpec = {
  side: IMAGE_SIDE,
  nTrain: 32,
  nGood: 10,
  nDefect: 10,
  seed: 0,
  category: 'gradients',
};

function texture(side: number, rng: Rng): Float32Array {
  const fx = rng.uniform(0.5, 2.0);
  const fy = rng.uniform(0.5, 2.0);
  const phase = [rng.uniform(0, 6.28), rng.uniform(0, 6.28), rng.uniform(0, 6.28)];
  const img = new Float32Array(side * side * 3);
  for (let y = 0; y < side; y++) {
    for (let x = 0; x < side; x++) {
      const u = (x / side) * fx;
      const v = (y / side) * fy;
      for (let c = 0; c < 3; c++) {
        const wave = Math.sin(2 * Math.PI * (u + v) + phase[c]) * 0.5 + 0.5;
        const val = 0.25 + 0.5 * wave + (rng.next() - 0.5) * 0.04;
        img[(y * side + x) * 3 + c] = Math.min(1, Math.max(0, val));
      }
    }
  }
  return img;
}

interface Defect {
  y0: number;
  y1: number;
  x0: number;
  x1: number;
  value: number;
}

function plantDefect(side: number, rng: Rng): Defect {
  const cap = side - 16; // leave the 8 px margin on both sides
  const h = Math.min(16 + 8 * rng.int(3), cap);
  const w = Math.min(16 + 8 * rng.int(3), cap);
  const y0 = 8 + rng.int(side - h - 15);
  const x0 = 8 + rng.int(side - w - 15);
  return { y0, y1: y0 + h, x0, x1: x0 + w, value: rng.next() < 0.5 ? 0.02 : 0.98 };
}

function applyDefect(img: Float32Array, side: number, d: Defect): void {
  for (let y = d.y0; y < d.y1; y++) {
    for (let x = d.x0; x < d.x1; x++) {
      img[(y * side + x) * 3] = d.value;
      img[(y * side + x) * 3 + 1] = d.value;
      img[(y * side + x) * 3 + 2] = d.value;
    }
  }
}

function toPngBytes(img: Float32Array, side: number): Buffer {
  const px = new Uint8Array(img.length);
  for (let i = 0; i < img.length; i++) px[i] = Math.round(img[i] * 255);
  return encodePng(px, side, side, 3);
}

function maskPngBytes(side: number, d: Defect): Buffer {
  const px = new Uint8Array(side * side);
  for (let y = d.y0; y < d.y1; y++) px.fill(255, y * side + d.x0, y * side + d.x1);
  return encodePng(px, side, side, 1);
}

function put(file: string, bytes: Buffer): void {
  fs.mkdirSync(path.dirname(file), { recursive: true });
  fs.writeFileSync(file, bytes);
}

/** Write the corpus; returns the category directory. */
export function generateCorpus(root: string, spec: CorpusSpec = DEFAULT_CORPUS): string {
  if (spec.side < 32) {
    throw new Error(`corpus side must be >= 32 to fit a defect with margins, got ${spec.side}`);
  }
  const rng = new Rng(spec.seed);
  const cat = path.join(root, spec.category);
  const name = (i: number) => `${String(i).padStart(3, '0')}.png`;
  for (let i = 0; i < spec.nTrain; i++) {
    put(path.join(cat, 'train', 'good', name(i)), toPngBytes(texture(spec.side, rng), spec.side));
  }
  for (let i = 0; i < spec.nGood; i++) {
    put(path.join(cat, 'test', 'good', name(i)), toPngBytes(texture(spec.side, rng), spec.side));
  }
  for (let i = 0; i < spec.nDefect; i++) {
    const img = texture(spec.side, rng);
    const d = plantDefect(spec.side, rng);
    applyDefect(img, spec.side, d);
    put(path.join(cat, 'test', 'blot', name(i)), toPngBytes(img, spec.side));
    put(path.join(cat, 'ground_truth', 'blot', `${String(i).padStart(3, '0')}_mask.png`), maskPngBytes(spec.side, d));
  }
  return cat;
}
