import { describe, expect, it } from 'vitest';

import { readNpy, writeNpy } from '../src/npy.js';
import { Rng } from '../src/rng.js';

describe('npy format', () => {
  it('round-trips data and shape', () => {
    const rng = new Rng(1);
    const data = Float32Array.from({ length: 24 }, () => rng.uniform(-10, 10));
    const buf = writeNpy(data, [2, 3, 4]);
    const back = readNpy(buf);
    expect(back.shape).toEqual([2, 3, 4]);
    expect(Array.from(back.data)).toEqual(Array.from(data));
  });

  it('writes the magic and a 64-byte aligned header', () => {
    const buf = writeNpy(Float32Array.from([1, 2, 3]), [3]);
    expect(buf.subarray(0, 6).toString('latin1')).toBe('\x93NUMPY');
    const headerLen = buf.readUInt16LE(8);
    expect((10 + headerLen) % 64).toBe(0);
    expect(buf[10 + headerLen - 1]).toBe(0x0a);
  });

  it('rejects element counts that disagree with the shape', () => {
    expect(() => writeNpy(new Float32Array(5), [2, 3])).toThrow(/shape/);
  });

  it('rejects double-precision files on read', () => {
    const buf = writeNpy(Float32Array.from([1]), [1]);
    const patched = Buffer.from(
      buf.toString('latin1').replace("'descr': '<f4'", "'descr': '<f8'"),
      'latin1',
    );
    expect(() => readNpy(patched)).toThrow(/dtype <f8/);
  });
});
