/**
 * Writer and reader for the .npy rasters of the reconstruction cache.
 * Format version 1.0, little-endian float32, C order; exactly what the
 * audit toolkit's cache provider loads.
 */

const MAGIC = Buffer.from('\x93NUMPY', 'latin1');

export function writeNpy(data: Float32Array, shape: number[]): Buffer {
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new Error(`shape [${shape}] holds ${count} values, got ${data.length}`);
  }
  const dictShape = shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(', ')})`;
  let header = `{'descr': '<f4', 'fortran_order': False, 'shape': ${dictShape}, }`;
  const unpadded = MAGIC.length + 4 + header.length + 1;
  header += ' '.repeat((64 - (unpadded % 64)) % 64) + '\n';
  const head = Buffer.alloc(MAGIC.length + 4 + header.length);
  MAGIC.copy(head, 0);
  head[6] = 1; // major version
  head[7] = 0;
  head.writeUInt16LE(header.length, 8);
  head.write(header, 10, 'latin1');
  const body = Buffer.from(data.buffer, data.byteOffset, data.byteLength);
  return Buffer.concat([head, body]);
}

export interface NpyArray {
  shape: number[];
  data: Float32Array;
}

export function readNpy(buf: Buffer): NpyArray {
  if (!buf.subarray(0, 6).equals(MAGIC)) throw new Error('not an npy file');
  const headerLen = buf.readUInt16LE(8);
  const header = buf.toString('latin1', 10, 10 + headerLen);
  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1];
  if (descr !== '<f4') throw new Error(`unsupported npy dtype ${descr}`);
  if (/'fortran_order':\s*True/.test(header)) throw new Error('fortran order is not supported');
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1] ?? '';
  const shape = shapeText.split(',').map(s => s.trim()).filter(s => s.length > 0).map(Number);
  const count = shape.reduce((a, b) => a * b, 1);
  const start = 10 + headerLen;
  const body = buf.subarray(start, start + count * 4);
  // copy so the result does not alias the (possibly pooled) input buffer
  const data = new Float32Array(count);
  data.set(new Float32Array(body.buffer.slice(body.byteOffset, body.byteOffset + body.byteLength)));
  return { shape, data };
}
