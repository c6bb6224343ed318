/**
 * Serialize the trained encoder-decoder pair as an ONNX graph.
 *
 * The graph is written directly in the protobuf wire format (varints,
 * length-delimited messages, raw little-endian tensor bytes), so no ONNX
 * runtime or protobuf library is involved. The exported graph takes the
 * image batch (N, 3, side, side) plus a latent noise input (N, latentDim);
 * feeding zeros for the noise decodes the posterior mean, which is what a
 * deterministic scoring pass wants.
 *
 * Layout conversions from the training weights are pinned here:
 *   - conv kernels [kh, kw, ci, co] -> [co, ci, kh, kw]
 *   - deconv kernels [kh, kw, co, ci] -> [ci, co, kh, kw]
 *   - dense weights crossing the flatten boundary are permuted between the
 *     trainer's (h, w, c) flattening and the graph's (c, h, w) flattening.
 * Batch norms are folded to inference form: running statistics, not batch
 * moments.
 */
import * as fs from 'node:fs';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';

import { BN_EPSILON, VaeGan } from './model.js';

// --- protobuf wire helpers -------------------------------------------------

function varint(n: number | bigint): Buffer {
  let v = BigInt(n);
  if (v < 0n) v += 1n << 64n; // two's-complement for negative int64
  const bytes: number[] = [];
  do {
    let b = Number(v & 0x7fn);
    v >>= 7n;
    if (v > 0n) b |= 0x80;
    bytes.push(b);
  } while (v > 0n);
  return Buffer.from(bytes);
}

function key(field: number, wire: number): Buffer {
  return varint((field << 3) | wire);
}

function lenField(field: number, payload: Buffer): Buffer {
  return Buffer.concat([key(field, 2), varint(payload.length), payload]);
}

function strField(field: number, s: string): Buffer {
  return lenField(field, Buffer.from(s, 'utf8'));
}

function intField(field: number, v: number | bigint): Buffer {
  return Buffer.concat([key(field, 0), varint(v)]);
}

function floatField(field: number, v: number): Buffer {
  const b = Buffer.alloc(4);
  b.writeFloatLE(v);
  return Buffer.concat([key(field, 5), b]);
}

// --- ONNX message builders ---------------------------------------------------

const DT_FLOAT = 1;
const DT_INT64 = 7;
const ATTR_FLOAT = 1;
const ATTR_INT = 2;
const ATTR_INTS = 7;

function floatTensor(name: string, dims: number[], data: Float32Array): Buffer {
  const parts = dims.map(d => intField(1, d));
  parts.push(intField(2, DT_FLOAT));
  parts.push(strField(8, name));
  const raw = Buffer.alloc(data.length * 4);
  for (let i = 0; i < data.length; i++) raw.writeFloatLE(data[i], i * 4);
  parts.push(lenField(9, raw));
  return Buffer.concat(parts);
}

function int64Tensor(name: string, dims: number[], values: Array<number | bigint>): Buffer {
  const parts = dims.map(d => intField(1, d));
  parts.push(intField(2, DT_INT64));
  parts.push(strField(8, name));
  const raw = Buffer.alloc(values.length * 8);
  values.forEach((v, i) => raw.writeBigInt64LE(BigInt(v), i * 8));
  parts.push(lenField(9, raw));
  return Buffer.concat(parts);
}

function attrInt(name: string, v: number): Buffer {
  return Buffer.concat([strField(1, name), intField(3, v), intField(20, ATTR_INT)]);
}

function attrInts(name: string, vals: number[]): Buffer {
  const packed = Buffer.concat(vals.map(v => varint(v)));
  return Buffer.concat([strField(1, name), lenField(8, packed), intField(20, ATTR_INTS)]);
}

function attrFloat(name: string, v: number): Buffer {
  return Buffer.concat([strField(1, name), floatField(2, v), intField(20, ATTR_FLOAT)]);
}

function node(opType: string, inputs: string[], outputs: string[], attrs: Buffer[] = []): Buffer {
  const parts = inputs.map(s => strField(1, s));
  parts.push(...outputs.map(s => strField(2, s)));
  parts.push(strField(3, `${opType}_${outputs[0]}`));
  parts.push(strField(4, opType));
  parts.push(...attrs.map(a => lenField(5, a)));
  return Buffer.concat(parts);
}

function valueInfo(name: string, dims: Array<number | string>): Buffer {
  const dimMsgs = dims.map(d =>
    typeof d === 'number' ? lenField(1, intField(1, d)) : lenField(1, strField(2, d)),
  );
  const shape = Buffer.concat(dimMsgs);
  const tensorType = Buffer.concat([intField(1, DT_FLOAT), lenField(2, shape)]);
  return Buffer.concat([strField(1, name), lenField(2, lenField(1, tensorType))]);
}

// --- weight layout conversions ----------------------------------------------

function transposed(v: tf.Tensor, perm: number[]): { dims: number[]; data: Float32Array } {
  const t = tf.transpose(v, perm);
  const out = { dims: t.shape.slice(), data: new Float32Array(t.dataSync() as Float32Array) };
  t.dispose();
  return out;
}

/**
 * Map between the two flatten orders of the bottleneck feature map:
 * returns chwToHwc[j] = flat index in (h, w, c) order for flat index j in
 * (c, h, w) order.
 */
export function flattenPermutation(channels: number, side: number): Int32Array {
  const map = new Int32Array(channels * side * side);
  let j = 0;
  for (let c = 0; c < channels; c++) {
    for (let h = 0; h < side; h++) {
      for (let w = 0; w < side; w++) {
        map[j++] = (h * side + w) * channels + c;
      }
    }
  }
  return map;
}

// --- graph assembly -----------------------------------------------------------

export function buildModelBytes(model: VaeGan): Buffer {
  const spec = model.spec;
  const s = model.bottleneckSide;
  const cTop = model.encChannels[3];
  const flat = model.flatDim;
  const latent = spec.latentDim;
  const perm = flattenPermutation(cTop, s);

  const initializers: Buffer[] = [];
  const nodes: Buffer[] = [];

  // Encoder stages: Conv(pads 1, strides 2) -> BatchNormalization -> Relu
  let cur = 'image';
  for (let i = 0; i < model.encConv.length; i++) {
    const w = transposed(model.encConv[i], [3, 2, 0, 1]);
    initializers.push(floatTensor(`enc${i}.w`, w.dims, w.data));
    for (const part of ['gamma', 'beta', 'mean', 'var'] as const) {
      const v = { gamma: model.encBn[i].gamma, beta: model.encBn[i].beta, mean: model.encBn[i].runMean, var: model.encBn[i].runVar }[part];
      initializers.push(floatTensor(`enc${i}.bn.${part}`, v.shape.slice(), new Float32Array(v.dataSync() as Float32Array)));
    }
    nodes.push(node('Conv', [cur, `enc${i}.w`], [`e${i}c`], [
      attrInts('pads', [1, 1, 1, 1]),
      attrInts('strides', [2, 2]),
      attrInts('kernel_shape', [3, 3]),
    ]));
    nodes.push(node('BatchNormalization',
      [`e${i}c`, `enc${i}.bn.gamma`, `enc${i}.bn.beta`, `enc${i}.bn.mean`, `enc${i}.bn.var`],
      [`e${i}b`], [attrFloat('epsilon', BN_EPSILON)]));
    nodes.push(node('Relu', [`e${i}b`], [`e${i}`]));
    cur = `e${i}`;
  }

  initializers.push(int64Tensor('flat_shape', [2], [0, -1]));
  nodes.push(node('Reshape', [cur, 'flat_shape'], ['flat']));

  // Dense heads. The graph flattens (c, h, w); the trainer flattened
  // (h, w, c), so rows of the head weights are permuted accordingly.
  const latentHead = (tag: string, wVar: tf.Variable, bVar: tf.Variable, out: string) => {
    const wSrc = wVar.dataSync() as Float32Array; // [flat_hwc, latent]
    const wOut = new Float32Array(latent * flat); // [latent, flat_chw], transB=1
    for (let j = 0; j < flat; j++) {
      const src = perm[j];
      for (let l = 0; l < latent; l++) wOut[l * flat + j] = wSrc[src * latent + l];
    }
    initializers.push(floatTensor(`${tag}.w`, [latent, flat], wOut));
    initializers.push(floatTensor(`${tag}.b`, [latent], new Float32Array(bVar.dataSync() as Float32Array)));
    nodes.push(node('Gemm', ['flat', `${tag}.w`, `${tag}.b`], [out], [attrInt('transB', 1)]));
  };
  latentHead('mu', model.wMu, model.bMu, 'mu');
  latentHead('lv', model.wLv, model.bLv, 'logvar');

  // z = mu + exp(0.5 * logvar) * eps
  initializers.push(floatTensor('half', [], Float32Array.from([0.5])));
  nodes.push(node('Mul', ['logvar', 'half'], ['halflv']));
  nodes.push(node('Exp', ['halflv'], ['std']));
  nodes.push(node('Mul', ['std', 'eps'], ['noise']));
  nodes.push(node('Add', ['mu', 'noise'], ['z']));

  // Decoder dense back to the bottleneck map, rows permuted to (c, h, w).
  {
    const wSrc = model.wDec.dataSync() as Float32Array; // [flat_hwc, latent]
    const bSrc = model.bDec.dataSync() as Float32Array; // [flat_hwc]
    const wOut = new Float32Array(flat * latent); // [flat_chw, latent], transB=1
    const bOut = new Float32Array(flat);
    for (let j = 0; j < flat; j++) {
      const src = perm[j];
      bOut[j] = bSrc[src];
      for (let l = 0; l < latent; l++) wOut[j * latent + l] = wSrc[src * latent + l];
    }
    initializers.push(floatTensor('dec.w', [flat, latent], wOut));
    initializers.push(floatTensor('dec.b', [flat], bOut));
    nodes.push(node('Gemm', ['z', 'dec.w', 'dec.b'], ['hd'], [attrInt('transB', 1)]));
    nodes.push(node('Relu', ['hd'], ['hdr']));
    initializers.push(int64Tensor('map_shape', [4], [0, cTop, s, s]));
    nodes.push(node('Reshape', ['hdr', 'map_shape'], ['d0']));
  }

  // Decoder stages: ConvTranspose doubling the side (end pads trim the
  // extra row/col the VALID transpose produces), BN + Relu except the
  // sigmoid output stage.
  cur = 'd0';
  for (let i = 0; i < model.decConv.length; i++) {
    const w = transposed(model.decConv[i], [3, 2, 0, 1]); // [ci, co, kh, kw]
    initializers.push(floatTensor(`dec${i}.w`, w.dims, w.data));
    nodes.push(node('ConvTranspose', [cur, `dec${i}.w`], [`d${i}c`], [
      attrInts('pads', [0, 0, 1, 1]),
      attrInts('strides', [2, 2]),
      attrInts('kernel_shape', [3, 3]),
    ]));
    if (i + 1 < model.decConv.length) {
      for (const part of ['gamma', 'beta', 'mean', 'var'] as const) {
        const v = { gamma: model.decBn[i].gamma, beta: model.decBn[i].beta, mean: model.decBn[i].runMean, var: model.decBn[i].runVar }[part];
        initializers.push(floatTensor(`dec${i}.bn.${part}`, v.shape.slice(), new Float32Array(v.dataSync() as Float32Array)));
      }
      nodes.push(node('BatchNormalization',
        [`d${i}c`, `dec${i}.bn.gamma`, `dec${i}.bn.beta`, `dec${i}.bn.mean`, `dec${i}.bn.var`],
        [`d${i}b`], [attrFloat('epsilon', BN_EPSILON)]));
      nodes.push(node('Relu', [`d${i}b`], [`d${i + 1}`]));
      cur = `d${i + 1}`;
    } else {
      nodes.push(node('Sigmoid', [`d${i}c`], ['reconstruction']));
    }
  }

  const graph = Buffer.concat([
    ...nodes.map(n => lenField(1, n)),
    strField(2, 'vae_decoder'),
    ...initializers.map(t => lenField(5, t)),
    lenField(11, valueInfo('image', ['N', 3, spec.side, spec.side])),
    lenField(11, valueInfo('eps', ['N', latent])),
    lenField(12, valueInfo('reconstruction', ['N', 3, spec.side, spec.side])),
  ]);

  const opset = Buffer.concat([strField(1, ''), intField(2, 13)]);
  return Buffer.concat([
    intField(1, 8), // ir_version
    strField(2, 'reconaudit-trainer'),
    strField(3, '0.1.0'),
    lenField(7, graph),
    lenField(8, opset),
  ]);
}

export function exportOnnx(model: VaeGan, file: string): void {
  fs.mkdirSync(path.dirname(path.resolve(file)), { recursive: true });
  fs.writeFileSync(file, buildModelBytes(model));
}
