/**
 * The VAE-GAN triple: encoder e, decoder d, discriminator s.
 *
 * Encoder: four 3x3 stride-2 convolution stages (BN + ReLU), then dense
 * heads for the latent mean and log-variance. Decoder mirrors them with
 * transposed convolutions and a sigmoid output. Discriminator: three
 * stages with 8x8, 5x5, and 4x4 kernels, each followed by max pooling.
 *
 * All convolutions run VALID over explicitly padded inputs so the exported
 * graph can state the same arithmetic with explicit pads. Initialization
 * draws from the caller-seeded Rng, never from tfjs randomness, so runs
 * reproduce across backends.
 */
import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

import { conv, deconv } from './convops.js';
import { Rng } from './rng.js';

export const BN_EPSILON = 1e-3;
const BN_MOMENTUM = 0.99;

export interface VaeGanSpec {
  /** Image side; encoder input and decoder output are side x side x 3. */
  side: number;
  latentDim: number;
  /** Encoder stage widths are [c, 2c, 3c, 4c] for baseChannels c. */
  baseChannels: number;
}

export const DEFAULT_SPEC: VaeGanSpec = { side: 128, latentDim: 128, baseChannels: 16 };

export function validateSpec(spec: VaeGanSpec): void {
  if (spec.side % 16 !== 0 || spec.side < 16) {
    throw new Error(`side must be a positive multiple of 16, got ${spec.side}`);
  }
  if (spec.latentDim < 1) throw new Error(`latentDim must be >= 1, got ${spec.latentDim}`);
  if (spec.baseChannels < 1) throw new Error(`baseChannels must be >= 1, got ${spec.baseChannels}`);
}

interface BnVars {
  gamma: tf.Variable;
  beta: tf.Variable;
  runMean: tf.Variable;
  runVar: tf.Variable;
}

function heTensor(rng: Rng, shape: number[], fanIn: number): tf.Tensor {
  const n = shape.reduce((a, b) => a * b, 1);
  const std = Math.sqrt(2 / fanIn);
  const data = rng.gaussArray(n);
  for (let i = 0; i < n; i++) data[i] *= std;
  return tf.tensor(data, shape);
}

function pad(x: tf.Tensor4D, before: number, after: number = before): tf.Tensor4D {
  return tf.pad(x, [[0, 0], [before, after], [before, after], [0, 0]]);
}

export interface DiscOut {
  logit: tf.Tensor2D;
  /** Last convolutional feature map, the space the reconstruction loss compares in. */
  features: tf.Tensor4D;
}

export class VaeGan {
  readonly spec: VaeGanSpec;
  readonly encChannels: number[];
  readonly flatDim: number;
  /** Spatial side of the bottleneck feature map (side / 16). */
  readonly bottleneckSide: number;

  encConv: tf.Variable[] = [];
  encBn: BnVars[] = [];
  wMu!: tf.Variable;
  bMu!: tf.Variable;
  wLv!: tf.Variable;
  bLv!: tf.Variable;

  wDec!: tf.Variable;
  bDec!: tf.Variable;
  decConv: tf.Variable[] = [];
  decBn: BnVars[] = [];

  discConv: tf.Variable[] = [];
  wOut!: tf.Variable;
  bOut!: tf.Variable;

  constructor(spec: VaeGanSpec = DEFAULT_SPEC, initSeed: number = 0) {
    validateSpec(spec);
    this.spec = spec;
    const c = spec.baseChannels;
    this.encChannels = [c, 2 * c, 3 * c, 4 * c];
    this.bottleneckSide = spec.side / 16;
    this.flatDim = 4 * c * this.bottleneckSide * this.bottleneckSide;
    const rng = new Rng(initSeed);

    const mkBn = (ch: number): BnVars => ({
      gamma: tf.variable(tf.ones([ch]), true),
      beta: tf.variable(tf.zeros([ch]), true),
      runMean: tf.variable(tf.zeros([ch]), false),
      runVar: tf.variable(tf.ones([ch]), false),
    });

    let ci = 3;
    for (const co of this.encChannels) {
      this.encConv.push(tf.variable(heTensor(rng, [3, 3, ci, co], 9 * ci)));
      this.encBn.push(mkBn(co));
      ci = co;
    }
    this.wMu = tf.variable(heTensor(rng, [this.flatDim, spec.latentDim], this.flatDim));
    this.bMu = tf.variable(tf.zeros([spec.latentDim]));
    this.wLv = tf.variable(heTensor(rng, [this.flatDim, spec.latentDim], this.flatDim));
    this.bLv = tf.variable(tf.zeros([spec.latentDim]));

    this.wDec = tf.variable(heTensor(rng, [this.flatDim, spec.latentDim], spec.latentDim));
    this.bDec = tf.variable(tf.zeros([this.flatDim]));
    const decChain = [...this.encChannels].reverse(); // [4c, 3c, 2c, c]
    for (let i = 0; i < decChain.length; i++) {
      const from = decChain[i];
      const to = i + 1 < decChain.length ? decChain[i + 1] : 3;
      // tf.conv2dTranspose filter layout: [kh, kw, outDepth, inDepth]
      this.decConv.push(tf.variable(heTensor(rng, [3, 3, to, from], 9 * from)));
      if (to !== 3) this.decBn.push(mkBn(to));
    }

    const discChain: Array<[number, number, number]> = [
      [c, 8, 2],
      [2 * c, 5, 1],
      [3 * c, 4, 1],
    ];
    ci = 3;
    for (const [co, k] of discChain) {
      this.discConv.push(tf.variable(heTensor(rng, [k, k, ci, co], k * k * ci)));
      ci = co;
    }
    this.wOut = tf.variable(heTensor(rng, [3 * c, 1], 3 * c));
    this.bOut = tf.variable(tf.zeros([1]));
  }

  encoderVars(): tf.Variable[] {
    return [
      ...this.encConv,
      ...this.encBn.flatMap(b => [b.gamma, b.beta]),
      this.wMu,
      this.bMu,
      this.wLv,
      this.bLv,
    ];
  }

  decoderVars(): tf.Variable[] {
    return [
      this.wDec,
      this.bDec,
      ...this.decConv,
      ...this.decBn.flatMap(b => [b.gamma, b.beta]),
    ];
  }

  discriminatorVars(): tf.Variable[] {
    return [...this.discConv, this.wOut, this.bOut];
  }

  private bn(h: tf.Tensor4D, v: BnVars, training: boolean): tf.Tensor4D {
    if (!training) {
      return tf.batchNorm(h, v.runMean, v.runVar, v.beta, v.gamma, BN_EPSILON) as tf.Tensor4D;
    }
    const { mean, variance } = tf.moments(h, [0, 1, 2]);
    // running-stat update happens outside the gradient tape
    tf.tidy(() => {
      v.runMean.assign(tf.add(tf.mul(v.runMean, BN_MOMENTUM), tf.mul(mean, 1 - BN_MOMENTUM)));
      v.runVar.assign(tf.add(tf.mul(v.runVar, BN_MOMENTUM), tf.mul(variance, 1 - BN_MOMENTUM)));
    });
    return tf.batchNorm(h, mean, variance, v.beta, v.gamma, BN_EPSILON) as tf.Tensor4D;
  }

  encode(x: tf.Tensor4D, training: boolean): { mu: tf.Tensor2D; logvar: tf.Tensor2D } {
    let h = x;
    for (let i = 0; i < this.encConv.length; i++) {
      h = tf.relu(this.bn(conv(pad(h, 1), this.encConv[i] as tf.Tensor4D, 2), this.encBn[i], training));
    }
    const flat = tf.reshape(h, [h.shape[0], this.flatDim]) as tf.Tensor2D;
    return {
      mu: tf.add(tf.matMul(flat, this.wMu as tf.Tensor2D), this.bMu) as tf.Tensor2D,
      logvar: tf.add(tf.matMul(flat, this.wLv as tf.Tensor2D), this.bLv) as tf.Tensor2D,
    };
  }

  decode(z: tf.Tensor2D, training: boolean): tf.Tensor4D {
    const s = this.bottleneckSide;
    let h = tf.reshape(
      tf.relu(tf.add(tf.matMul(z, this.wDec as tf.Tensor2D, false, true), this.bDec)),
      [z.shape[0], s, s, this.encChannels[3]],
    ) as tf.Tensor4D;
    for (let i = 0; i < this.decConv.length; i++) {
      const grown = deconv(h, this.decConv[i] as tf.Tensor4D, 2);
      // drop the trailing row/col: (2n+1) -> 2n, like ONNX end-pads (1, 1)
      const hh = 2 * h.shape[1];
      const cropped = tf.slice(grown, [0, 0, 0, 0], [h.shape[0], hh, hh, grown.shape[3]]) as tf.Tensor4D;
      h = i + 1 < this.decConv.length
        ? tf.relu(this.bn(cropped, this.decBn[i], training))
        : (tf.sigmoid(cropped) as tf.Tensor4D);
    }
    return h;
  }

  discriminate(x: tf.Tensor4D): DiscOut {
    let h = x;
    const pads: Array<[number, number]> = [[3, 3], [2, 2], [1, 2]];
    const strides = [2, 1, 1];
    for (let i = 0; i < this.discConv.length; i++) {
      h = tf.relu(conv(pad(h, pads[i][0], pads[i][1]), this.discConv[i] as tf.Tensor4D, strides[i]));
      h = tf.maxPool(h, 2, 2, 'same');
    }
    const pooled = tf.mean(h, [1, 2]) as tf.Tensor2D;
    const logit = tf.add(tf.matMul(pooled, this.wOut as tf.Tensor2D), this.bOut) as tf.Tensor2D;
    return { logit, features: h };
  }

  /** Deterministic reconstruction: decode at the latent mean, eval-mode BN. */
  reconstruct(x: tf.Tensor4D): tf.Tensor4D {
    return tf.tidy(() => this.decode(this.encode(x, false).mu, false));
  }

  allVars(): Array<[string, tf.Variable]> {
    const out: Array<[string, tf.Variable]> = [];
    this.encConv.forEach((v, i) => out.push([`enc${i}.w`, v]));
    this.encBn.forEach((b, i) => {
      out.push([`enc${i}.bn.gamma`, b.gamma], [`enc${i}.bn.beta`, b.beta]);
      out.push([`enc${i}.bn.mean`, b.runMean], [`enc${i}.bn.var`, b.runVar]);
    });
    out.push(['mu.w', this.wMu], ['mu.b', this.bMu], ['lv.w', this.wLv], ['lv.b', this.bLv]);
    out.push(['dec.w', this.wDec], ['dec.b', this.bDec]);
    this.decConv.forEach((v, i) => out.push([`dec${i}.w`, v]));
    this.decBn.forEach((b, i) => {
      out.push([`dec${i}.bn.gamma`, b.gamma], [`dec${i}.bn.beta`, b.beta]);
      out.push([`dec${i}.bn.mean`, b.runMean], [`dec${i}.bn.var`, b.runVar]);
    });
    this.discConv.forEach((v, i) => out.push([`disc${i}.w`, v]));
    out.push(['out.w', this.wOut], ['out.b', this.bOut]);
    return out;
  }

  /** Copy every weight into plain arrays (for rollback and checkpoints). */
  snapshot(): Map<string, Float32Array> {
    const snap = new Map<string, Float32Array>();
    for (const [name, v] of this.allVars()) {
      snap.set(name, new Float32Array(v.dataSync() as Float32Array));
    }
    return snap;
  }

  restore(snap: Map<string, Float32Array>): void {
    for (const [name, v] of this.allVars()) {
      const data = snap.get(name);
      if (!data) throw new Error(`snapshot is missing variable ${name}`);
      v.assign(tf.tensor(data, v.shape));
    }
  }

  save(dir: string, extra: Record<string, unknown> = {}): void {
    fs.mkdirSync(dir, { recursive: true });
    const entries: Array<{ name: string; shape: number[]; offset: number; length: number }> = [];
    const chunks: Buffer[] = [];
    let offset = 0;
    for (const [name, v] of this.allVars()) {
      const data = v.dataSync() as Float32Array;
      entries.push({ name, shape: v.shape.slice(), offset, length: data.length });
      chunks.push(Buffer.from(data.buffer.slice(data.byteOffset, data.byteOffset + data.byteLength)));
      offset += data.length * 4;
    }
    fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.concat(chunks));
    fs.writeFileSync(
      path.join(dir, 'manifest.json'),
      JSON.stringify({ format: 1, spec: this.spec, variables: entries, ...extra }, null, 2),
    );
  }

  static load(dir: string): VaeGan {
    const manifest = JSON.parse(fs.readFileSync(path.join(dir, 'manifest.json'), 'utf8'));
    const model = new VaeGan(manifest.spec as VaeGanSpec);
    const bin = fs.readFileSync(path.join(dir, 'weights.bin'));
    const byName = new Map<string, { shape: number[]; offset: number; length: number }>();
    for (const e of manifest.variables) byName.set(e.name, e);
    for (const [name, v] of model.allVars()) {
      const e = byName.get(name);
      if (!e) throw new Error(`checkpoint is missing variable ${name}`);
      const data = new Float32Array(e.length);
      data.set(new Float32Array(bin.buffer.slice(bin.byteOffset + e.offset, bin.byteOffset + e.offset + e.length * 4)));
      v.assign(tf.tensor(data, e.shape));
    }
    return model;
  }
}
