/**
 * tfjs backend selection. The wasm backend (SIMD) trains roughly an order
 * of magnitude faster than the plain JS cpu backend here; cpu remains the
 * fallback and the reference for gradient cross-checks in the tests.
 */
import { createRequire } from 'node:module';
import * as path from 'node:path';

import * as tf from '@tensorflow/tfjs';
import { setWasmPaths } from '@tensorflow/tfjs-backend-wasm';

export type BackendName = 'wasm' | 'cpu';

let ready: BackendName | null = null;

export async function initBackend(name: BackendName = 'wasm'): Promise<BackendName> {
  if (ready === name) return ready;
  if (name === 'wasm') {
    const require = createRequire(import.meta.url);
    const pkg = require.resolve('@tensorflow/tfjs-backend-wasm');
    setWasmPaths(path.join(path.dirname(pkg), path.sep));
  }
  await tf.setBackend(name);
  await tf.ready();
  ready = name;
  return ready;
}
