#!/usr/bin/env node
/**
 * Command line for the trainer: generate a practice corpus, train on the
 * good samples of a dataset category, evaluate reconstruction error, and
 * export the graph plus reconstruction cache for the scoring toolkit.
 */
import * as path from 'node:path';

import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';

import { initBackend, BackendName } from './backend.js';
import { scanDataset, SampleRecord } from './dataset.js';
import { exportArtifacts, PARITY_TOLERANCE } from './export.js';
import { auroc, mseScore } from './metrics.js';
import { DEFAULT_SPEC, VaeGan } from './model.js';
import { DEFAULT_CORPUS, generateCorpus } from './synthcorpus.js';
import { DEFAULT_TRAIN, Trainer, TrainConfig, writeLossLog } from './train.js';

interface CommonTrainArgs {
  dataset: string;
  category: string;
  backend: string;
}

function loadRecords(dataset: string, category: string): { train: SampleRecord[]; test: SampleRecord[] } {
  const records = scanDataset(dataset, category);
  return {
    train: records.filter(r => r.split === 'train'),
    test: records.filter(r => r.split === 'test'),
  };
}

async function cmdTrain(argv: {
  dataset: string; category: string; out: string;
  steps?: number; epochs?: number; batch: number; latent: number;
  baseChannels: number; lr: number; seed: number; backend: string; log?: string;
}): Promise<void> {
  if (argv.steps !== undefined && argv.epochs !== undefined) {
    throw new Error('pass at most one of --steps or --epochs');
  }
  await initBackend(argv.backend as BackendName);
  const { train } = loadRecords(argv.dataset, argv.category);
  const model = new VaeGan(
    { ...DEFAULT_SPEC, latentDim: argv.latent, baseChannels: argv.baseChannels },
    argv.seed,
  );
  const cfg: TrainConfig = {
    ...DEFAULT_TRAIN,
    duration: argv.steps ?? argv.epochs ?? 500,
    unit: argv.steps !== undefined ? 'steps' : 'epochs',
    batchSize: argv.batch,
    learningRate: argv.lr,
    seed: argv.seed,
    onStep: row => {
      if (row.step % 25 === 0) {
        console.log(
          `step ${row.step}  disc ${row.disc.toFixed(4)}  enc ${row.encoder.toFixed(4)}  dec ${row.decoder.toFixed(4)}`,
        );
      }
    },
  };
  const trainer = new Trainer(model, cfg);
  const result = trainer.run(train);
  model.save(argv.out, { steps: result.steps, aborted: result.aborted });
  writeLossLog(argv.log ?? path.join(argv.out, 'losses.csv'), result.log);
  if (result.aborted) {
    console.error(
      `training aborted at step ${result.steps}: loss went non-finite; ` +
      `checkpoint holds the last finite weights`,
    );
    process.exitCode = 1;
    return;
  }
  console.log(`trained ${result.steps} steps; checkpoint written to ${argv.out}`);
}

async function cmdEval(argv: CommonTrainArgs & { checkpoint: string }): Promise<void> {
  await initBackend(argv.backend as BackendName);
  const { test } = loadRecords(argv.dataset, argv.category);
  if (test.length === 0) throw new Error('dataset has no test samples');
  const model = VaeGan.load(argv.checkpoint);
  const { scoreRecords } = await import('./score.js');
  const scored = scoreRecords(model, test);
  const area = auroc(scored.map(s => s.score), scored.map(s => s.label));
  for (const s of scored) console.log(`${s.sampleId},${s.score.toExponential(6)}`);
  console.log(`auroc,${area.toFixed(4)}`);
}

async function cmdExport(argv: CommonTrainArgs & {
  checkpoint: string; model: string; cache: string; tolerance: number;
}): Promise<void> {
  await initBackend(argv.backend as BackendName);
  const { test } = loadRecords(argv.dataset, argv.category);
  if (test.length === 0) throw new Error('dataset has no test samples');
  const model = VaeGan.load(argv.checkpoint);
  const parityBatch = test.slice(0, Math.min(4, test.length));
  const result = exportArtifacts(model, argv.model, argv.cache, test, parityBatch, argv.tolerance);
  console.log(
    `wrote ${result.modelFile} (round-trip mean abs diff ${result.parity.meanAbs.toExponential(3)}) ` +
    `and ${result.cached} cache rasters under ${argv.cache}`,
  );
}

export async function main(args: string[]): Promise<void> {
  await yargs(args)
    .scriptName('reconaudit-trainer')
    .command(
      'corpus',
      'generate a small synthetic dataset in the inspection layout',
      y => y
        .option('out', { type: 'string', demandOption: true, describe: 'dataset root to create' })
        .option('train', { type: 'number', default: DEFAULT_CORPUS.nTrain, describe: 'good training images' })
        .option('good', { type: 'number', default: DEFAULT_CORPUS.nGood, describe: 'good test images' })
        .option('defect', { type: 'number', default: DEFAULT_CORPUS.nDefect, describe: 'defective test images' })
        .option('side', { type: 'number', default: DEFAULT_CORPUS.side })
        .option('seed', { type: 'number', default: DEFAULT_CORPUS.seed }),
      argv => {
        const dir = generateCorpus(argv.out, {
          side: argv.side, nTrain: argv.train, nGood: argv.good,
          nDefect: argv.defect, seed: argv.seed, category: DEFAULT_CORPUS.category,
        });
        console.log(`wrote corpus to ${dir}`);
      },
    )
    .command(
      'train',
      'train on the good samples of one dataset category',
      y => y
        .option('dataset', { type: 'string', demandOption: true })
        .option('category', { type: 'string', demandOption: true })
        .option('out', { type: 'string', demandOption: true, describe: 'checkpoint directory' })
        .option('steps', { type: 'number', describe: 'optimizer steps to run' })
        .option('epochs', { type: 'number', describe: 'passes over the training set (default 500)' })
        .option('batch', { type: 'number', default: DEFAULT_TRAIN.batchSize })
        .option('latent', { type: 'number', default: DEFAULT_SPEC.latentDim })
        .option('base-channels', { type: 'number', default: DEFAULT_SPEC.baseChannels })
        .option('lr', { type: 'number', default: DEFAULT_TRAIN.learningRate })
        .option('seed', { type: 'number', default: 0 })
        .option('backend', { type: 'string', default: 'wasm', choices: ['wasm', 'cpu'] })
        .option('log', { type: 'string', describe: 'loss CSV path (default <out>/losses.csv)' }),
      argv => cmdTrain(argv as Parameters<typeof cmdTrain>[0]),
    )
    .command(
      'eval',
      'score the test split with a checkpoint and report AUROC',
      y => y
        .option('dataset', { type: 'string', demandOption: true })
        .option('category', { type: 'string', demandOption: true })
        .option('checkpoint', { type: 'string', demandOption: true })
        .option('backend', { type: 'string', default: 'wasm', choices: ['wasm', 'cpu'] }),
      argv => cmdEval(argv as Parameters<typeof cmdEval>[0]),
    )
    .command(
      'export',
      'write the serialized graph and reconstruction cache',
      y => y
        .option('dataset', { type: 'string', demandOption: true })
        .option('category', { type: 'string', demandOption: true })
        .option('checkpoint', { type: 'string', demandOption: true })
        .option('model', { type: 'string', demandOption: true, describe: 'output .onnx path' })
        .option('cache', { type: 'string', demandOption: true, describe: 'reconstruction cache directory' })
        .option('tolerance', { type: 'number', default: PARITY_TOLERANCE })
        .option('backend', { type: 'string', default: 'wasm', choices: ['wasm', 'cpu'] }),
      argv => cmdExport(argv as Parameters<typeof cmdExport>[0]),
    )
    .demandCommand(1, 'pick a command')
    .strict()
    .fail((msg, err) => {
      console.error(err?.message ?? msg);
      process.exit(2);
    })
    .parseAsync();
}

const isDirectRun = process.argv[1] && path.resolve(process.argv[1]) === new URL(import.meta.url).pathname;
if (isDirectRun) {
  main(hideBin(process.argv)).catch(err => {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  });
}
