/**
 * MVTec-style dataset access. The layout is the shared contract with the
 * audit toolkit:
 *
 *   <root>/<category>/train/good/*.png
 *   <root>/<category>/test/<defect_type>/*.png
 *   <root>/<category>/ground_truth/<defect_type>/<stem>_mask.png
 *
 * Sample ids are "<split>/<defect_type>/<stem>" so cache files land where
 * the toolkit's cache provider looks for them.
 */
import * as fs from 'node:fs';
import * as path from 'node:path';

import { decodePng } from './png.js';

export const IMAGE_SIDE = 128;

export interface SampleRecord {
  sampleId: string;
  split: 'train' | 'test';
  defectType: string;
  label: 'good' | 'anomalous';
  imagePath: string;
}

function listPngs(dir: string): string[] {
  return fs
    .readdirSync(dir)
    .filter(f => f.toLowerCase().endsWith('.png'))
    .sort();
}

function scanSplit(catDir: string, split: 'train' | 'test'): SampleRecord[] {
  const splitDir = path.join(catDir, split);
  if (!fs.existsSync(splitDir)) throw new Error(`missing ${split}/ directory under ${catDir}`);
  const defects = fs
    .readdirSync(splitDir, { withFileTypes: true })
    .filter(e => e.isDirectory())
    .map(e => e.name)
    .sort();
  if (defects.length === 0) throw new Error(`${splitDir} contains no defect-type directories`);
  const records: SampleRecord[] = [];
  for (const defect of defects) {
    if (split === 'train' && defect !== 'good') {
      throw new Error(`train split may only contain good/, found ${path.join(splitDir, defect)}`);
    }
    for (const file of listPngs(path.join(splitDir, defect))) {
      const stem = file.slice(0, -4);
      records.push({
        sampleId: `${split}/${defect}/${stem}`,
        split,
        defectType: defect,
        label: defect === 'good' ? 'good' : 'anomalous',
        imagePath: path.join(splitDir, defect, file),
      });
    }
  }
  return records;
}

export function scanDataset(root: string, category: string): SampleRecord[] {
  const catDir = path.join(root, category);
  if (!fs.existsSync(catDir)) throw new Error(`no category directory ${catDir}`);
  return [...scanSplit(catDir, 'train'), ...scanSplit(catDir, 'test')];
}

/**
 * Load a PNG as float32 HWC in [0, 1]. Images must already be at the
 * training resolution; the trainer deliberately has no resampling path,
 * so resolution mismatches fail instead of silently degrading.
 */
export function loadImage(imagePath: string, side: number = IMAGE_SIDE): Float32Array {
  const { width, height, rgb } = decodePng(fs.readFileSync(imagePath));
  if (width !== side || height !== side) {
    throw new Error(`${imagePath} is ${width}x${height}, expected ${side}x${side}`);
  }
  const out = new Float32Array(rgb.length);
  for (let i = 0; i < rgb.length; i++) out[i] = rgb[i] / 255;
  return out;
}
