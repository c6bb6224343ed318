import * as fs from 'node:fs';
import * as os from 'node:os';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';
import { beforeAll, describe, expect, it } from 'vitest';

import { VaeGan, VaeGanSpec } from '../src/model.js';
import { Rng } from '../src/rng.js';

const SMALL: VaeGanSpec = { side: 32, latentDim: 8, baseChannels: 4 };

function randImages(n: number, side: number, seed: number): tf.Tensor4D {
  const rng = new Rng(seed);
  const data = Float32Array.from({ length: n * side * side * 3 }, () => rng.next());
  return tf.tensor4d(data, [n, side, side, 3]);
}

beforeAll(async () => {
  await tf.setBackend('cpu');
  await tf.ready();
});

describe('VaeGan', () => {
  it('rejects malformed specs', () => {
    expect(() => new VaeGan({ side: 30, latentDim: 8, baseChannels: 4 })).toThrow(/side/);
    expect(() => new VaeGan({ side: 32, latentDim: 0, baseChannels: 4 })).toThrow(/latentDim/);
    expect(() => new VaeGan({ side: 32, latentDim: 8, baseChannels: 0 })).toThrow(/baseChannels/);
  });

  it('produces the declared shapes end to end', () => {
    const m = new VaeGan(SMALL, 1);
    const x = randImages(2, 32, 5);
    const { mu, logvar } = m.encode(x, false);
    expect(mu.shape).toEqual([2, 8]);
    expect(logvar.shape).toEqual([2, 8]);
    const xr = m.decode(mu, false);
    expect(xr.shape).toEqual([2, 32, 32, 3]);
    const { logit, features } = m.discriminate(x);
    expect(logit.shape).toEqual([2, 1]);
    expect(features.shape[0]).toBe(2);
    expect(features.shape[3]).toBe(3 * SMALL.baseChannels);
    const rec = m.reconstruct(x);
    expect(rec.shape).toEqual([2, 32, 32, 3]);
    const vals = rec.dataSync();
    for (const v of vals) {
      expect(v).toBeGreaterThan(0);
      expect(v).toBeLessThan(1);
    }
  });

  it('initializes identically for the same seed and differently otherwise', () => {
    const a = new VaeGan(SMALL, 3);
    const b = new VaeGan(SMALL, 3);
    const c = new VaeGan(SMALL, 4);
    const wa = a.encConv[0].dataSync();
    const wb = b.encConv[0].dataSync();
    const wc = c.encConv[0].dataSync();
    expect(Array.from(wa)).toEqual(Array.from(wb));
    expect(Array.from(wa)).not.toEqual(Array.from(wc));
  });

  it('reconstructs deterministically in eval mode', () => {
    const m = new VaeGan(SMALL, 2);
    const x = randImages(1, 32, 6);
    const r1 = m.reconstruct(x).dataSync();
    const r2 = m.reconstruct(x).dataSync();
    expect(Array.from(r1)).toEqual(Array.from(r2));
  });

  it('updates batch-norm running stats only in training mode', () => {
    const m = new VaeGan(SMALL, 7);
    const x = randImages(4, 32, 8);
    const before = Array.from(m.encBn[0].runMean.dataSync());
    m.encode(x, false);
    expect(Array.from(m.encBn[0].runMean.dataSync())).toEqual(before);
    m.encode(x, true);
    expect(Array.from(m.encBn[0].runMean.dataSync())).not.toEqual(before);
  });

  it('snapshot and restore round-trip the weights', () => {
    const m = new VaeGan(SMALL, 9);
    const x = randImages(1, 32, 10);
    const baseline = Array.from(m.reconstruct(x).dataSync());
    const snap = m.snapshot();
    m.encConv[0].assign(tf.zerosLike(m.encConv[0]));
    expect(Array.from(m.reconstruct(x).dataSync())).not.toEqual(baseline);
    m.restore(snap);
    expect(Array.from(m.reconstruct(x).dataSync())).toEqual(baseline);
  });

  it('checkpoints to disk and loads back bit for bit', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'ckpt-'));
    try {
      const m = new VaeGan(SMALL, 11);
      // nudge a running stat so the checkpoint is not all defaults
      m.encBn[1].runMean.assign(tf.fill([SMALL.baseChannels * 2], 0.25));
      m.save(dir, { steps: 17 });
      const manifest = JSON.parse(fs.readFileSync(path.join(dir, 'manifest.json'), 'utf8'));
      expect(manifest.steps).toBe(17);
      expect(manifest.spec).toEqual(SMALL);
      const loaded = VaeGan.load(dir);
      const x = randImages(2, 32, 12);
      expect(Array.from(loaded.reconstruct(x).dataSync())).toEqual(
        Array.from(m.reconstruct(x).dataSync()),
      );
    } finally {
      fs.rmSync(dir, { recursive: true, force: true });
    }
  });
});
