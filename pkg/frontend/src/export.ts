/**
 * Turn a trained model into the artifacts the scoring toolkit consumes:
 * a serialized graph and a reconstruction cache for the test split.
 *
 * Export is gated: the written bytes are re-read and executed by an
 * independent decoder, and if the round trip drifts from the in-memory
 * model by more than the tolerance the export throws instead of leaving
 * a silently wrong file on disk.
 */
import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

import { loadImage, SampleRecord } from './dataset.js';
import { VaeGan } from './model.js';
import { buildModelBytes } from './onnx.js';
import { checkParity, ParityReport } from './onnxcheck.js';
import { writeNpy } from './npy.js';

export const PARITY_TOLERANCE = 1e-4;

export interface ExportResult {
  modelFile: string;
  parity: ParityReport;
  cached: number;
}

/** Reconstruct a batch of file-backed samples with mean decoding. */
function reconstructBatch(model: VaeGan, records: SampleRecord[]): Float32Array[] {
  const side = model.spec.side;
  const input = new Float32Array(records.length * side * side * 3);
  records.forEach((rec, i) => input.set(loadImage(rec.imagePath, side), i * side * side * 3));
  const x = tf.tensor4d(input, [records.length, side, side, 3]);
  const y = model.reconstruct(x);
  const data = y.dataSync() as Float32Array;
  tf.dispose([x, y]);
  return records.map((_, i) => data.slice(i * side * side * 3, (i + 1) * side * side * 3));
}

/**
 * Write the graph to `modelFile`, verify the round trip against the live
 * model on `paritySamples`, and fill `cacheDir` with one .npy raster per
 * test sample. Throws on parity failure; the model file is removed so a
 * bad export cannot be mistaken for a good one.
 */
export function exportArtifacts(
  model: VaeGan,
  modelFile: string,
  cacheDir: string,
  testRecords: SampleRecord[],
  paritySamples: SampleRecord[],
  tolerance: number = PARITY_TOLERANCE,
): ExportResult {
  const bytes = buildModelBytes(model);
  fs.mkdirSync(path.dirname(path.resolve(modelFile)), { recursive: true });
  fs.writeFileSync(modelFile, bytes);

  if (paritySamples.length === 0) throw new Error('parity check needs at least one sample');
  const side = model.spec.side;
  const input = new Float32Array(paritySamples.length * side * side * 3);
  paritySamples.forEach((rec, i) => input.set(loadImage(rec.imagePath, side), i * side * side * 3));
  const x = tf.tensor4d(input, [paritySamples.length, side, side, 3]);
  const reference = model.reconstruct(x);
  const parity = checkParity(bytes, x, reference);
  tf.dispose([x, reference]);
  if (!(parity.meanAbs <= tolerance)) {
    fs.rmSync(modelFile, { force: true });
    throw new Error(
      `exported graph diverges from the trained model: mean abs diff ` +
      `${parity.meanAbs.toExponential(3)} over ${parity.count} values ` +
      `(tolerance ${tolerance})`,
    );
  }

  let cached = 0;
  const batchSize = 8;
  for (let i = 0; i < testRecords.length; i += batchSize) {
    const chunk = testRecords.slice(i, i + batchSize);
    const recons = reconstructBatch(model, chunk);
    chunk.forEach((rec, j) => {
      const file = path.join(cacheDir, `${rec.sampleId}.npy`);
      fs.mkdirSync(path.dirname(file), { recursive: true });
      fs.writeFileSync(file, writeNpy(recons[j], [side, side, 3]));
      cached++;
    });
  }
  return { modelFile, parity, cached };
}
