/**
 * Three-player training loop.
 *
 * Each step draws an augmented batch of good training images and runs three
 * updates: the discriminator learns to tell real images from reconstructions
 * and from prior samples; the encoder minimizes KL plus reconstruction error;
 * the decoder minimizes reconstruction error plus the adversarial term.
 * Reconstruction error blends pixel MSE with MSE in the discriminator's last
 * feature map, which keeps reconstructions from going blurry without a
 * perceptual network.
 *
 * If any loss goes non-finite the loop aborts and the model keeps the
 * weights from the last step whose losses were all finite.
 */
import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

import { augment, AugmentRanges, DEFAULT_RANGES } from './augment.js';
import { loadImage, SampleRecord } from './dataset.js';
import { VaeGan } from './model.js';
import { Rng } from './rng.js';

export interface LossWeights {
  reconstruction: number;
  kl: number;
  adversarial: number;
}

export interface TrainConfig {
  /** How many units to train for; `unit` says whether these are epochs or steps. */
  duration: number;
  unit: 'epochs' | 'steps';
  batchSize: number;
  learningRate: number;
  weights: LossWeights;
  seed: number;
  augment: AugmentRanges;
  /** Called after each step; return value is ignored. */
  onStep?: (row: StepLosses) => void;
}

export const DEFAULT_TRAIN: Omit<TrainConfig, 'duration' | 'unit'> = {
  batchSize: 64,
  learningRate: 1e-3,
  weights: { reconstruction: 1.0, kl: 3e-4, adversarial: 1e-2 },
  seed: 0,
  augment: DEFAULT_RANGES,
};

export interface StepLosses {
  step: number;
  disc: number;
  encoder: number;
  decoder: number;
}

export interface TrainResult {
  steps: number;
  aborted: boolean;
  log: StepLosses[];
}

export function validateTrainConfig(cfg: TrainConfig): void {
  if (!Number.isFinite(cfg.duration) || cfg.duration < 1) {
    throw new Error(`duration must be >= 1, got ${cfg.duration}`);
  }
  if (cfg.unit !== 'epochs' && cfg.unit !== 'steps') {
    throw new Error(`unit must be 'epochs' or 'steps', got ${String(cfg.unit)}`);
  }
  if (cfg.batchSize < 1) throw new Error(`batchSize must be >= 1, got ${cfg.batchSize}`);
  if (!(cfg.learningRate > 0)) throw new Error(`learningRate must be > 0, got ${cfg.learningRate}`);
  for (const key of ['reconstruction', 'kl', 'adversarial'] as const) {
    if (!(cfg.weights[key] > 0)) {
      throw new Error(`loss weight '${key}' must be > 0, got ${cfg.weights[key]}`);
    }
  }
}

/** Binary cross-entropy from logits against a constant target. */
function bce(logit: tf.Tensor, target: 0 | 1): tf.Tensor {
  // softplus(x) - t*x = -log sigmoid(x) for t=1, -log(1 - sigmoid(x)) for t=0
  return tf.mean(tf.sub(tf.softplus(logit), tf.mul(logit, target)));
}

function mse(a: tf.Tensor, b: tf.Tensor): tf.Tensor {
  return tf.mean(tf.square(tf.sub(a, b)));
}

export class Trainer {
  readonly model: VaeGan;
  readonly cfg: TrainConfig;
  private readonly rng: Rng;
  private readonly discOpt: tf.Optimizer;
  private readonly encOpt: tf.Optimizer;
  private readonly decOpt: tf.Optimizer;
  private readonly imageCache = new Map<string, Float32Array>();

  constructor(model: VaeGan, cfg: TrainConfig) {
    validateTrainConfig(cfg);
    this.model = model;
    this.cfg = cfg;
    this.rng = new Rng(cfg.seed);
    this.discOpt = tf.train.adam(cfg.learningRate, 0.5);
    this.encOpt = tf.train.adam(cfg.learningRate, 0.5);
    this.decOpt = tf.train.adam(cfg.learningRate, 0.5);
  }

  /** Assemble one augmented batch as a [B, side, side, 3] tensor. */
  batch(records: SampleRecord[], order: number[], cursor: number): { x: tf.Tensor4D; cursor: number } {
    const side = this.model.spec.side;
    const b = this.cfg.batchSize;
    const out = new Float32Array(b * side * side * 3);
    for (let i = 0; i < b; i++) {
      if (cursor >= order.length) {
        this.rng.shuffle(order);
        cursor = 0;
      }
      const rec = records[order[cursor++]];
      let base = this.imageCache.get(rec.imagePath);
      if (!base) {
        base = loadImage(rec.imagePath, side);
        this.imageCache.set(rec.imagePath, base);
      }
      out.set(augment(base, side, this.rng, this.cfg.augment), i * side * side * 3);
    }
    return { x: tf.tensor4d(out, [b, side, side, 3]), cursor };
  }

  /** One full three-phase update. Returns the scalar losses. */
  step(x: tf.Tensor4D, stepIndex: number): StepLosses {
    const m = this.model;
    const w = this.cfg.weights;
    const b = x.shape[0];
    const latent = m.spec.latentDim;
    const eps = tf.tensor2d(this.rng.gaussArray(b * latent), [b, latent]);
    const zPrior = tf.tensor2d(this.rng.gaussArray(b * latent), [b, latent]);

    const sampleZ = (training: boolean) =>
      tf.tidy(() => {
        const { mu, logvar } = m.encode(x, training);
        const z = tf.add(mu, tf.mul(tf.exp(tf.mul(logvar, 0.5)), eps)) as tf.Tensor2D;
        return { mu, logvar, z };
      });

    // Phase 1: discriminator on real vs reconstruction vs prior sample.
    const discLoss = this.discOpt.minimize(
      () => {
        const { z } = sampleZ(false);
        const xr = m.decode(z, false);
        const xp = m.decode(zPrior, false);
        return tf.add(
          bce(m.discriminate(x).logit, 1),
          tf.add(bce(m.discriminate(xr).logit, 0), bce(m.discriminate(xp).logit, 0)),
        ) as tf.Scalar;
      },
      true,
      m.discriminatorVars(),
    )!;

    // The feature-map term is normalized by the real image's feature energy:
    // the discriminator's feature scale grows as it trains, and the raw MSE
    // would crowd out the pixel term and degrade pixel fidelity over a run.
    const reconLoss = (xr: tf.Tensor4D) =>
      tf.tidy(() => {
        const fx = m.discriminate(x).features;
        const fr = m.discriminate(xr).features;
        const featErr = tf.div(mse(fx, fr), tf.add(tf.mean(tf.square(fx)), 1e-6));
        return tf.add(mse(x, xr), tf.mul(featErr, 0.1));
      });

    // Phase 2: encoder pulls the posterior toward the prior and toward
    // reconstructions that match the input.
    const encLoss = this.encOpt.minimize(
      () => {
        const { mu, logvar, z } = sampleZ(true);
        const kl = tf.mul(
          0.5,
          tf.mean(tf.sum(tf.sub(tf.add(tf.square(mu), tf.exp(logvar)), tf.add(logvar, 1)), 1)),
        );
        const xr = m.decode(z, false);
        return tf.add(tf.mul(kl, w.kl), tf.mul(reconLoss(xr), w.reconstruction)) as tf.Scalar;
      },
      true,
      m.encoderVars(),
    )!;

    // Phase 3: decoder reconstructs and fools the discriminator.
    const decLoss = this.decOpt.minimize(
      () => {
        const { z } = sampleZ(false);
        const xr = m.decode(z, true);
        const xp = m.decode(zPrior, true);
        const adv = tf.add(bce(m.discriminate(xr).logit, 1), bce(m.discriminate(xp).logit, 1));
        return tf.add(
          tf.mul(reconLoss(xr), w.reconstruction),
          tf.mul(adv, w.adversarial),
        ) as tf.Scalar;
      },
      true,
      m.decoderVars(),
    )!;

    const row: StepLosses = {
      step: stepIndex,
      disc: discLoss.dataSync()[0],
      encoder: encLoss.dataSync()[0],
      decoder: decLoss.dataSync()[0],
    };
    tf.dispose([eps, zPrior, discLoss, encLoss, decLoss]);
    return row;
  }

  /**
   * Run the configured number of epochs or steps over `records` (which must
   * all be good training samples). Non-finite losses abort the run and roll
   * the model back to the last finite step.
   */
  run(records: SampleRecord[]): TrainResult {
    if (records.length === 0) throw new Error('training set is empty');
    const bad = records.filter(r => r.label !== 'good' || r.split !== 'train');
    if (bad.length > 0) {
      throw new Error(`training set must contain only good train samples; got ${bad[0].sampleId}`);
    }
    const stepsPerEpoch = Math.max(1, Math.ceil(records.length / this.cfg.batchSize));
    const totalSteps =
      this.cfg.unit === 'epochs' ? this.cfg.duration * stepsPerEpoch : this.cfg.duration;

    const order = records.map((_, i) => i);
    this.rng.shuffle(order);
    let cursor = 0;

    const log: StepLosses[] = [];
    let lastFinite = this.model.snapshot();
    for (let s = 0; s < totalSteps; s++) {
      const { x, cursor: next } = this.batch(records, order, cursor);
      cursor = next;
      const row = this.step(x, s);
      x.dispose();
      if (!Number.isFinite(row.disc) || !Number.isFinite(row.encoder) || !Number.isFinite(row.decoder)) {
        this.model.restore(lastFinite);
        return { steps: s, aborted: true, log };
      }
      lastFinite = this.model.snapshot();
      log.push(row);
      this.cfg.onStep?.(row);
    }
    return { steps: totalSteps, aborted: false, log };
  }
}

export function writeLossLog(file: string, log: StepLosses[]): void {
  fs.mkdirSync(path.dirname(file), { recursive: true });
  const lines = ['step,disc_loss,encoder_loss,decoder_loss'];
  for (const row of log) {
    lines.push(`${row.step},${row.disc.toFixed(6)},${row.encoder.toFixed(6)},${row.decoder.toFixed(6)}`);
  }
  fs.writeFileSync(file, lines.join('\n') + '\n');
}
