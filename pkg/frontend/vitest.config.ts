import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    testTimeout: 120_000,
    hookTimeout: 120_000,
    // tfjs keeps global backend state; a single fork avoids re-initializing
    // the wasm runtime per file and keeps memory bounded.
    pool: 'forks',
    poolOptions: { forks: { singleFork: true } },
  },
});
