import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';
import { beforeAll, describe, expect, it } from 'vitest';

import { VaeGanSpec, VaeGan } from '../src/model.js';
import { scanDataset } from '../src/dataset.js';
import { generateCorpus } from '../src/synthcorpus.js';
import { DEFAULT_TRAIN, Trainer, TrainConfig, validateTrainConfig, writeLossLog } from '../src/train.js';

const SMALL: VaeGanSpec = { side: 32, latentDim: 8, baseChannels: 4 };

function smallConfig(overrides: Partial<TrainConfig> = {}): TrainConfig {
  return {
    ...DEFAULT_TRAIN,
    duration: 3,
    unit: 'steps',
    batchSize: 2,
    seed: 5,
    ...overrides,
  };
}

let datasetRoot: string;

beforeAll(async () => {
  await tf.setBackend('cpu');
  await tf.ready();
  datasetRoot = fs.mkdtempSync(path.join(os.tmpdir(), 'traindata-'));
  generateCorpus(datasetRoot, {
    side: 32, nTrain: 6, nGood: 2, nDefect: 2, seed: 1, category: 'gradients',
  });
  return () => fs.rmSync(datasetRoot, { recursive: true, force: true });
});

describe('config validation', () => {
  it('rejects non-positive durations, batches, rates, and weights', () => {
    expect(() => validateTrainConfig(smallConfig({ duration: 0 }))).toThrow(/duration/);
    expect(() => validateTrainConfig(smallConfig({ batchSize: 0 }))).toThrow(/batchSize/);
    expect(() => validateTrainConfig(smallConfig({ learningRate: 0 }))).toThrow(/learningRate/);
    expect(() =>
      validateTrainConfig(smallConfig({ weights: { reconstruction: 1, kl: 0, adversarial: 1 } })),
    ).toThrow(/kl/);
    expect(() =>
      validateTrainConfig(smallConfig({ weights: { reconstruction: -1, kl: 1, adversarial: 1 } })),
    ).toThrow(/reconstruction/);
    expect(() => validateTrainConfig({ ...smallConfig(), unit: 'minutes' as 'steps' })).toThrow(/unit/);
  });
});

describe('Trainer', () => {
  it('refuses anomalous or test samples in the training set', () => {
    const records = scanDataset(datasetRoot, 'gradients');
    const trainer = new Trainer(new VaeGan(SMALL, 1), smallConfig());
    expect(() => trainer.run(records)).toThrow(/only good train samples/);
    expect(() => trainer.run([])).toThrow(/empty/);
  });

  it('runs the requested number of steps with finite losses and a full log', () => {
    const records = scanDataset(datasetRoot, 'gradients').filter(r => r.split === 'train');
    const trainer = new Trainer(new VaeGan(SMALL, 2), smallConfig());
    const seen: number[] = [];
    trainer.cfg.onStep = row => seen.push(row.step);
    const result = trainer.run(records);
    expect(result.aborted).toBe(false);
    expect(result.steps).toBe(3);
    expect(result.log.length).toBe(3);
    expect(seen).toEqual([0, 1, 2]);
    for (const row of result.log) {
      expect(Number.isFinite(row.disc)).toBe(true);
      expect(Number.isFinite(row.encoder)).toBe(true);
      expect(Number.isFinite(row.decoder)).toBe(true);
    }
  });

  it('converts epochs to steps from the training-set size', () => {
    const records = scanDataset(datasetRoot, 'gradients').filter(r => r.split === 'train');
    // 6 samples, batch 2 -> 3 steps per epoch
    const trainer = new Trainer(new VaeGan(SMALL, 3), smallConfig({ duration: 2, unit: 'epochs' }));
    const result = trainer.run(records);
    expect(result.steps).toBe(6);
  });

  it('reproduces the same loss curve from the same seed', () => {
    const records = scanDataset(datasetRoot, 'gradients').filter(r => r.split === 'train');
    const runOnce = () =>
      new Trainer(new VaeGan(SMALL, 7), smallConfig({ seed: 9 })).run(records).log;
    expect(runOnce()).toEqual(runOnce());
  });

  it('changes the weights (training actually happens)', () => {
    const records = scanDataset(datasetRoot, 'gradients').filter(r => r.split === 'train');
    const model = new VaeGan(SMALL, 4);
    const before = Array.from(model.encConv[0].dataSync());
    new Trainer(model, smallConfig()).run(records);
    expect(Array.from(model.encConv[0].dataSync())).not.toEqual(before);
  });

  it('aborts on a non-finite loss and rolls back to the last finite step', () => {
    const records = scanDataset(datasetRoot, 'gradients').filter(r => r.split === 'train');
    const model = new VaeGan(SMALL, 6);
    const cfg = smallConfig({ duration: 5 });
    const trainer = new Trainer(model, cfg);
    let cleanAfterStep1: Map<string, Float32Array> | null = null;
    cfg.onStep = row => {
      if (row.step === 1) {
        cleanAfterStep1 = model.snapshot();
        // poison a weight so the next step's losses go NaN
        model.wMu.assign(tf.fill(model.wMu.shape as [number, number], NaN));
      }
    };
    const result = trainer.run(records);
    expect(result.aborted).toBe(true);
    expect(result.steps).toBe(2);
    expect(result.log.length).toBe(2);
    // the rollback must discard the poison and keep the post-step-1 weights
    const rolled = model.wMu.dataSync();
    for (const v of rolled) expect(Number.isFinite(v)).toBe(true);
    expect(Array.from(rolled)).toEqual(Array.from(cleanAfterStep1!.get('mu.w')!));
  });

  it('writes the loss log as CSV', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'losslog-'));
    try {
      const file = path.join(dir, 'sub', 'losses.csv');
      writeLossLog(file, [
        { step: 0, disc: 1.25, encoder: 0.5, decoder: 0.75 },
        { step: 1, disc: 1.0, encoder: 0.25, decoder: 0.5 },
      ]);
      const lines = fs.readFileSync(file, 'utf8').trim().split('\n');
      expect(lines[0]).toBe('step,disc_loss,encoder_loss,decoder_loss');
      expect(lines.length).toBe(3);
      expect(lines[1]).toBe('0,1.250000,0.500000,0.750000');
    } finally {
      fs.rmSync(dir, { recursive: true, force: true });
    }
  });
});
