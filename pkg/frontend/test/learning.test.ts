import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import { beforeAll, describe, expect, it } from 'vitest';

import { initBackend } from '../src/backend.js';
import { scanDataset, SampleRecord } from '../src/dataset.js';
import { auroc } from '../src/metrics.js';
import { VaeGan } from '../src/model.js';
import { scoreRecords } from '../src/score.js';
import { generateCorpus } from '../src/synthcorpus.js';
import { DEFAULT_TRAIN, Trainer } from '../src/train.js';

/**
 * A monitored run at reduced resolution, long enough for reconstruction
 * quality to climb back over the adversarial phase's mid-run dip. This is
 * the test that shows the model actually learns the corpus structure: the
 * anomaly scores alone cannot, because a defect also shifts raw pixel
 * statistics.
 */

const work = fs.mkdtempSync(path.join(os.tmpdir(), 'learn-'));

// 8 train images at batch 4 makes 2 steps per epoch; 150 epochs stays well
// inside a 500-epoch training budget.
const EPOCHS = 150;

let model: VaeGan;
let trainRecords: SampleRecord[];
let trainResult: ReturnType<Trainer['run']>;
let mseAfterFirstEpoch = Number.NaN;

function meanTrainMse(): number {
  const scored = scoreRecords(model, trainRecords);
  return scored.reduce((a, s) => a + s.score, 0) / scored.length;
}

beforeAll(async () => {
  await initBackend('wasm');
  generateCorpus(work, {
    side: 64, nTrain: 8, nGood: 4, nDefect: 4, seed: 3, category: 'gradients',
  });
  trainRecords = scanDataset(work, 'gradients').filter(r => r.split === 'train');
  model = new VaeGan({ side: 64, latentDim: 32, baseChannels: 8 }, 1);
  expect(EPOCHS).toBeLessThanOrEqual(500);
  const trainer = new Trainer(model, {
    ...DEFAULT_TRAIN,
    duration: EPOCHS,
    unit: 'epochs',
    batchSize: 4,
    seed: 1,
    // 8 train images at batch 4: step 1 closes the first epoch
    onStep: row => {
      if (row.step === 1) mseAfterFirstEpoch = meanTrainMse();
    },
  });
  trainResult = trainer.run(trainRecords);
  return () => fs.rmSync(work, { recursive: true, force: true });
}, 300_000);

describe('monitored training run', () => {
  it('completes the full budget without a non-finite loss', () => {
    expect(trainResult.aborted).toBe(false);
    expect(trainResult.steps).toBe(EPOCHS * 2);
  });

  it('reconstructs the train set better at the end than after one epoch', () => {
    expect(Number.isFinite(mseAfterFirstEpoch)).toBe(true);
    expect(meanTrainMse()).toBeLessThan(mseAfterFirstEpoch);
  }, 120_000);

  it('separates defective from good test images (AUROC above 0.7)', () => {
    const test = scanDataset(work, 'gradients').filter(r => r.split === 'test');
    const scored = scoreRecords(model, test);
    const area = auroc(scored.map(s => s.score), scored.map(s => s.label));
    expect(area).toBeGreaterThan(0.7);
  }, 120_000);
});
