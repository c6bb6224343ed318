/**
 * Batch scoring of file-backed samples: mean-decode each image and take
 * the pixel MSE against the input as its anomaly score.
 */
import * as tf from '@tensorflow/tfjs';

import { loadImage, SampleRecord } from './dataset.js';
import { mseScore } from './metrics.js';
import { VaeGan } from './model.js';

export interface ScoredSample {
  sampleId: string;
  /** 0 for good samples, 1 for anomalous ones. */
  label: number;
  score: number;
}

export function scoreRecords(
  model: VaeGan,
  records: SampleRecord[],
  batchSize: number = 8,
): ScoredSample[] {
  const side = model.spec.side;
  const plane = side * side * 3;
  const out: ScoredSample[] = [];
  for (let i = 0; i < records.length; i += batchSize) {
    const chunk = records.slice(i, i + batchSize);
    const input = new Float32Array(chunk.length * plane);
    chunk.forEach((rec, j) => input.set(loadImage(rec.imagePath, side), j * plane));
    const x = tf.tensor4d(input, [chunk.length, side, side, 3]);
    const y = model.reconstruct(x);
    const recon = y.dataSync() as Float32Array;
    tf.dispose([x, y]);
    chunk.forEach((rec, j) => {
      out.push({
        sampleId: rec.sampleId,
        label: rec.label === 'good' ? 0 : 1,
        score: mseScore(input.subarray(j * plane, (j + 1) * plane), recon.subarray(j * plane, (j + 1) * plane)),
      });
    });
  }
  return out;
}
