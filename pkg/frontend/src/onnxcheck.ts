/**
 * Round-trip verification for exported graphs.
 *
 * This module re-reads the serialized bytes with its own protobuf decoder
 * and executes the graph with generic tensor ops, sharing nothing with the
 * writer except the wire-format constants. Export uses it to prove the
 * file reproduces the in-memory model before anything downstream ever
 * loads it.
 */
import * as tf from '@tensorflow/tfjs';

// --- protobuf reading ---------------------------------------------------------

class Reader {
  pos = 0;
  constructor(readonly buf: Buffer) {}

  done(): boolean {
    return this.pos >= this.buf.length;
  }

  varint(): bigint {
    let result = 0n;
    let shift = 0n;
    for (;;) {
      if (this.pos >= this.buf.length) throw new Error('truncated varint');
      const b = this.buf[this.pos++];
      result |= BigInt(b & 0x7f) << shift;
      if ((b & 0x80) === 0) return result;
      shift += 7n;
      if (shift > 70n) throw new Error('varint too long');
    }
  }

  int(): number {
    let v = this.varint();
    if (v >= 1n << 63n) v -= 1n << 64n; // two's-complement int64
    return Number(v);
  }

  tag(): { field: number; wire: number } {
    const t = Number(this.varint());
    return { field: t >> 3, wire: t & 7 };
  }

  bytes(): Buffer {
    const n = Number(this.varint());
    if (this.pos + n > this.buf.length) throw new Error('truncated field');
    const out = this.buf.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  float(): number {
    const v = this.buf.readFloatLE(this.pos);
    this.pos += 4;
    return v;
  }

  skip(wire: number): void {
    if (wire === 0) this.varint();
    else if (wire === 1) this.pos += 8;
    else if (wire === 2) this.bytes();
    else if (wire === 5) this.pos += 4;
    else throw new Error(`unsupported wire type ${wire}`);
  }
}

export interface ParsedTensor {
  name: string;
  dims: number[];
  dataType: number;
  floats?: Float32Array;
  ints?: number[];
}

export interface ParsedNode {
  opType: string;
  inputs: string[];
  outputs: string[];
  attrs: Record<string, number | number[] | string>;
}

export interface ParsedValueInfo {
  name: string;
  dims: Array<number | string>;
}

export interface ParsedGraph {
  nodes: ParsedNode[];
  initializers: Map<string, ParsedTensor>;
  inputs: ParsedValueInfo[];
  outputs: ParsedValueInfo[];
  opset: number;
}

function parseTensor(buf: Buffer): ParsedTensor {
  const r = new Reader(buf);
  const t: ParsedTensor = { name: '', dims: [], dataType: 0 };
  let raw: Buffer | undefined;
  const floatData: number[] = [];
  const intData: number[] = [];
  while (!r.done()) {
    const { field, wire } = r.tag();
    if (field === 1) {
      if (wire === 2) {
        const payload = new Reader(r.bytes());
        while (!payload.done()) t.dims.push(payload.int());
      } else t.dims.push(r.int());
    } else if (field === 2 && wire === 0) t.dataType = Number(r.varint());
    else if (field === 4 && wire === 2) {
      const payload = r.bytes();
      for (let i = 0; i < payload.length; i += 4) floatData.push(payload.readFloatLE(i));
    } else if ((field === 5 || field === 7) && wire === 2) {
      const payload = new Reader(r.bytes());
      while (!payload.done()) intData.push(payload.int());
    } else if (field === 8 && wire === 2) t.name = r.bytes().toString('utf8');
    else if (field === 9 && wire === 2) raw = r.bytes();
    else r.skip(wire);
  }
  if (t.dataType === 1) {
    if (raw) {
      t.floats = new Float32Array(raw.length / 4);
      for (let i = 0; i < t.floats.length; i++) t.floats[i] = raw.readFloatLE(i * 4);
    } else t.floats = Float32Array.from(floatData);
  } else if (t.dataType === 7) {
    if (raw) {
      t.ints = [];
      for (let i = 0; i < raw.length; i += 8) t.ints.push(Number(raw.readBigInt64LE(i)));
    } else t.ints = intData;
  } else {
    throw new Error(`unsupported tensor data type ${t.dataType} for '${t.name}'`);
  }
  return t;
}

function parseAttribute(buf: Buffer): { name: string; value: number | number[] | string } {
  const r = new Reader(buf);
  let name = '';
  let value: number | number[] | string | undefined;
  while (!r.done()) {
    const { field, wire } = r.tag();
    if (field === 1 && wire === 2) name = r.bytes().toString('utf8');
    else if (field === 2 && wire === 5) value = r.float();
    else if (field === 3 && wire === 0) value = r.int();
    else if (field === 4 && wire === 2) value = r.bytes().toString('utf8');
    else if (field === 8) {
      if (wire === 2) {
        const payload = new Reader(r.bytes());
        const vals: number[] = [];
        while (!payload.done()) vals.push(payload.int());
        value = vals;
      } else {
        if (!Array.isArray(value)) value = [];
        (value as number[]).push(r.int());
      }
    } else r.skip(wire);
  }
  if (value === undefined) throw new Error(`attribute '${name}' has no supported payload`);
  return { name, value };
}

function parseValueInfo(buf: Buffer): ParsedValueInfo {
  const r = new Reader(buf);
  const info: ParsedValueInfo = { name: '', dims: [] };
  while (!r.done()) {
    const { field, wire } = r.tag();
    if (field === 1 && wire === 2) info.name = r.bytes().toString('utf8');
    else if (field === 2 && wire === 2) {
      const type = new Reader(r.bytes());
      while (!type.done()) {
        const t1 = type.tag();
        if (t1.field === 1 && t1.wire === 2) {
          const tensorType = new Reader(type.bytes());
          while (!tensorType.done()) {
            const t2 = tensorType.tag();
            if (t2.field === 2 && t2.wire === 2) {
              const shape = new Reader(tensorType.bytes());
              while (!shape.done()) {
                const t3 = shape.tag();
                if (t3.field === 1 && t3.wire === 2) {
                  const dim = new Reader(shape.bytes());
                  while (!dim.done()) {
                    const t4 = dim.tag();
                    if (t4.field === 1 && t4.wire === 0) info.dims.push(dim.int());
                    else if (t4.field === 2 && t4.wire === 2) info.dims.push(dim.bytes().toString('utf8'));
                    else dim.skip(t4.wire);
                  }
                } else shape.skip(t3.wire);
              }
            } else tensorType.skip(t2.wire);
          }
        } else type.skip(t1.wire);
      }
    } else r.skip(wire);
  }
  return info;
}

export function parseModel(buf: Buffer): ParsedGraph {
  const r = new Reader(buf);
  let graphBuf: Buffer | undefined;
  let opset = 0;
  while (!r.done()) {
    const { field, wire } = r.tag();
    if (field === 7 && wire === 2) graphBuf = r.bytes();
    else if (field === 8 && wire === 2) {
      const op = new Reader(r.bytes());
      while (!op.done()) {
        const t = op.tag();
        if (t.field === 2 && t.wire === 0) opset = op.int();
        else op.skip(t.wire);
      }
    } else r.skip(wire);
  }
  if (!graphBuf) throw new Error('file contains no graph');

  const g: ParsedGraph = { nodes: [], initializers: new Map(), inputs: [], outputs: [], opset };
  const gr = new Reader(graphBuf);
  while (!gr.done()) {
    const { field, wire } = gr.tag();
    if (field === 1 && wire === 2) {
      const nr = new Reader(gr.bytes());
      const n: ParsedNode = { opType: '', inputs: [], outputs: [], attrs: {} };
      while (!nr.done()) {
        const t = nr.tag();
        if (t.field === 1 && t.wire === 2) n.inputs.push(nr.bytes().toString('utf8'));
        else if (t.field === 2 && t.wire === 2) n.outputs.push(nr.bytes().toString('utf8'));
        else if (t.field === 4 && t.wire === 2) n.opType = nr.bytes().toString('utf8');
        else if (t.field === 5 && t.wire === 2) {
          const a = parseAttribute(nr.bytes());
          n.attrs[a.name] = a.value;
        } else nr.skip(t.wire);
      }
      g.nodes.push(n);
    } else if (field === 5 && wire === 2) {
      const t = parseTensor(gr.bytes());
      g.initializers.set(t.name, t);
    } else if (field === 11 && wire === 2) g.inputs.push(parseValueInfo(gr.bytes()));
    else if (field === 12 && wire === 2) g.outputs.push(parseValueInfo(gr.bytes()));
    else gr.skip(wire);
  }
  return g;
}

// --- execution ------------------------------------------------------------------

function pairAttr(attrs: ParsedNode['attrs'], key: string, dflt: [number, number]): [number, number] {
  const v = attrs[key];
  if (v === undefined) return dflt;
  const arr = v as number[];
  return [arr[0], arr[1]];
}

type Env = Map<string, tf.Tensor>;

function toNhwc(x: tf.Tensor): tf.Tensor4D {
  return tf.transpose(x, [0, 2, 3, 1]) as tf.Tensor4D;
}

function toNchw(x: tf.Tensor): tf.Tensor4D {
  return tf.transpose(x, [0, 3, 1, 2]) as tf.Tensor4D;
}

function execConv(inputs: tf.Tensor[], attrs: ParsedNode['attrs']): tf.Tensor {
  const [x, w] = inputs as [tf.Tensor4D, tf.Tensor4D];
  const [sh] = pairAttr(attrs, 'strides', [1, 1]);
  const pads = (attrs['pads'] as number[]) ?? [0, 0, 0, 0];
  const [pt, pl, pb, pr] = pads;
  const xh = tf.pad(toNhwc(x), [[0, 0], [pt, pb], [pl, pr], [0, 0]]);
  const filter = tf.transpose(w, [2, 3, 1, 0]) as tf.Tensor4D; // [co,ci,kh,kw] -> [kh,kw,ci,co]
  let y = tf.conv2d(xh as tf.Tensor4D, filter, sh, 'valid');
  if (inputs.length > 2 && inputs[2]) y = tf.add(y, inputs[2]) as tf.Tensor4D;
  return toNchw(y);
}

function execConvTranspose(inputs: tf.Tensor[], attrs: ParsedNode['attrs']): tf.Tensor {
  const [x, w] = inputs as [tf.Tensor4D, tf.Tensor4D];
  const [sh, sw] = pairAttr(attrs, 'strides', [1, 1]);
  const pads = (attrs['pads'] as number[]) ?? [0, 0, 0, 0];
  const [oph, opw] = pairAttr(attrs, 'output_padding', [0, 0]);
  const [pt, pl, pb, pr] = pads;
  const [, , h, wd] = x.shape;
  const [, co, kh, kw] = w.shape;
  const outH = (h - 1) * sh + kh - pt - pb + oph;
  const outW = (wd - 1) * sw + kw - pl - pr + opw;
  const fullH = (h - 1) * sh + kh;
  const fullW = (wd - 1) * sw + kw;
  const filter = tf.transpose(w, [2, 3, 1, 0]) as tf.Tensor4D; // [ci,co,kh,kw] -> [kh,kw,co,ci]
  const xh = toNhwc(x);
  let y = tf.conv2dTranspose(xh, filter, [x.shape[0], fullH, fullW, co], [sh, sw], 'valid');
  if (pt + outH > fullH || pl + outW > fullW) {
    y = tf.pad(y, [[0, 0], [0, pt + outH - fullH], [0, pl + outW - fullW], [0, 0]]);
  }
  y = tf.slice(y, [0, pt, pl, 0], [x.shape[0], outH, outW, co]);
  if (inputs.length > 2 && inputs[2]) y = tf.add(y, inputs[2]) as tf.Tensor4D;
  return toNchw(y);
}

function execBatchNorm(inputs: tf.Tensor[], attrs: ParsedNode['attrs']): tf.Tensor {
  const [x, scale, bias, mean, variance] = inputs;
  const eps = (attrs['epsilon'] as number) ?? 1e-5;
  const xh = toNhwc(x);
  const y = tf.batchNorm(xh as tf.Tensor4D, mean as tf.Tensor1D, variance as tf.Tensor1D, bias as tf.Tensor1D, scale as tf.Tensor1D, eps);
  return toNchw(y);
}

function execGemm(inputs: tf.Tensor[], attrs: ParsedNode['attrs']): tf.Tensor {
  let [a, b] = inputs as [tf.Tensor2D, tf.Tensor2D];
  const alpha = (attrs['alpha'] as number) ?? 1.0;
  const beta = (attrs['beta'] as number) ?? 1.0;
  const transA = ((attrs['transA'] as number) ?? 0) !== 0;
  const transB = ((attrs['transB'] as number) ?? 0) !== 0;
  let y: tf.Tensor = tf.matMul(a, b, transA, transB);
  if (alpha !== 1.0) y = tf.mul(y, alpha);
  if (inputs.length > 2 && inputs[2]) y = tf.add(y, beta === 1.0 ? inputs[2] : tf.mul(inputs[2], beta));
  return y;
}

function execReshape(inputs: tf.Tensor[]): tf.Tensor {
  const data = inputs[0];
  const target = Array.from(inputs[1].dataSync()).map(Number);
  const resolved: number[] = [];
  let inferAt = -1;
  for (let i = 0; i < target.length; i++) {
    if (target[i] === 0) resolved.push(data.shape[i]);
    else if (target[i] === -1) {
      inferAt = i;
      resolved.push(1);
    } else resolved.push(target[i]);
  }
  if (inferAt >= 0) {
    const total = data.shape.reduce((p, d) => p * d, 1);
    const known = resolved.reduce((p, d) => p * d, 1);
    resolved[inferAt] = total / known;
  }
  return tf.reshape(data, resolved);
}

/** Execute a parsed graph on the given feeds; returns the declared outputs. */
export function executeGraph(g: ParsedGraph, feeds: Record<string, tf.Tensor>): Record<string, tf.Tensor> {
  return tf.tidy(() => {
    const env: Env = new Map();
    for (const [name, t] of g.initializers) {
      if (t.dataType === 1) env.set(name, tf.tensor(t.floats!, t.dims));
      else env.set(name, tf.tensor(t.ints!.map(Number), t.dims.length ? t.dims : [t.ints!.length]));
    }
    for (const spec of g.inputs) {
      const fed = feeds[spec.name];
      if (!fed) throw new Error(`graph input '${spec.name}' was not fed`);
      env.set(spec.name, fed);
    }
    for (const node of g.nodes) {
      const args = node.inputs.map(name => {
        const v = env.get(name);
        if (!v && name !== '') throw new Error(`node reads undefined tensor '${name}'`);
        return v as tf.Tensor;
      });
      let out: tf.Tensor;
      switch (node.opType) {
        case 'Conv': out = execConv(args, node.attrs); break;
        case 'ConvTranspose': out = execConvTranspose(args, node.attrs); break;
        case 'BatchNormalization': out = execBatchNorm(args, node.attrs); break;
        case 'Gemm': out = execGemm(args, node.attrs); break;
        case 'Reshape': out = execReshape(args); break;
        case 'Relu': out = tf.relu(args[0]); break;
        case 'Sigmoid': out = tf.sigmoid(args[0]); break;
        case 'Exp': out = tf.exp(args[0]); break;
        case 'Add': out = tf.add(args[0], args[1]); break;
        case 'Mul': out = tf.mul(args[0], args[1]); break;
        case 'Identity': out = args[0]; break;
        default: throw new Error(`unsupported op '${node.opType}'`);
      }
      env.set(node.outputs[0], out);
    }
    const result: Record<string, tf.Tensor> = {};
    for (const spec of g.outputs) {
      const v = env.get(spec.name);
      if (!v) throw new Error(`graph output '${spec.name}' was never produced`);
      result[spec.name] = v;
    }
    return result;
  });
}

export interface ParityReport {
  meanAbs: number;
  maxAbs: number;
  count: number;
}

/**
 * Compare the serialized graph's mean decode against reference tensors.
 * `images` is NHWC in [0, 1]; `reference` is the trainer's own output for
 * the same batch.
 */
export function checkParity(bytes: Buffer, images: tf.Tensor4D, reference: tf.Tensor4D): ParityReport {
  const g = parseModel(bytes);
  return tf.tidy(() => {
    const batch = images.shape[0];
    const latentSpec = g.inputs[1];
    const latentDim = latentSpec.dims[1] as number;
    const out = executeGraph(g, {
      [g.inputs[0].name]: toNchw(images),
      [latentSpec.name]: tf.zeros([batch, latentDim]),
    });
    const diff = tf.abs(tf.sub(toNhwc(out[g.outputs[0].name]), reference));
    return {
      meanAbs: (tf.mean(diff).dataSync() as Float32Array)[0],
      maxAbs: (tf.max(diff).dataSync() as Float32Array)[0],
      count: diff.size,
    };
  });
}
