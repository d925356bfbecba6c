/**
 * Training entry point.
 *
 * The run is deterministic for a fixed seed: seeded tile sampling, seeded
 * weight init, no shuffling, single-threaded CPU backend. Non-convergence
 * (final loss not below the first epoch's) is surfaced as a warning, not a
 * failure; the training log records the per-epoch curve either way.
 */

import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";

import { TILE_SIZE, buildTrainingSet, loadExportedDataset } from "./data";
import { BACKBONE, buildModel, saveModel } from "./model";
import { SchemaError } from "./schema";

export interface PredictorConfig {
  /** directory holding annotations.json + images.json from export-dense */
  dataset: string;
  epochs: number;
  learningRate: number;
  backbone: string;
  out: string;
  seed: number;
}

export function parseConfig(doc: unknown): PredictorConfig {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new SchemaError("config must be a JSON object");
  }
  const obj = doc as Record<string, unknown>;
  if (typeof obj.dataset !== "string" || typeof obj.out !== "string") {
    throw new SchemaError("config needs string 'dataset' and 'out' paths");
  }
  const epochs = Number(obj.epochs ?? 10);
  if (!Number.isInteger(epochs) || epochs < 1) {
    throw new SchemaError(`epochs must be an integer >= 1, got ${String(obj.epochs)}`);
  }
  const learningRate = Number(obj.learning_rate ?? 0.005);
  if (!(learningRate > 0)) {
    throw new SchemaError(`learning_rate must be > 0, got ${String(obj.learning_rate)}`);
  }
  const backbone = String(obj.backbone ?? BACKBONE);
  if (backbone !== BACKBONE) {
    throw new SchemaError(`unknown backbone '${backbone}' (supported: ${BACKBONE})`);
  }
  const seed = Number(obj.seed ?? 0);
  if (!Number.isInteger(seed)) {
    throw new SchemaError(`seed must be an integer, got ${String(obj.seed)}`);
  }
  return { dataset: obj.dataset, epochs, learningRate, backbone, out: obj.out, seed };
}

export interface TrainResult {
  losses: number[];
  examples: number;
}

export async function train(config: PredictorConfig): Promise<TrainResult> {
  await tf.setBackend("cpu");
  await tf.ready();
  const dataset = loadExportedDataset(config.dataset);
  const { xs, ys, count } = buildTrainingSet(dataset, config.seed);
  const model = buildModel(config.seed, config.learningRate, TILE_SIZE);
  try {
    const history = await model.fit(xs, ys, {
      epochs: config.epochs,
      batchSize: 32,
      shuffle: false,
      verbose: 0,
    });
    const losses = (history.history.loss as number[]).map(Number);
    if (losses.length > 1 && losses[losses.length - 1] >= losses[0]) {
      console.warn(
        `warning: loss did not decrease (${losses[0].toFixed(6)} -> ` +
        `${losses[losses.length - 1].toFixed(6)}); model saved anyway`,
      );
    }
    await saveModel(model, config.out, {
      backbone: config.backbone,
      triggerSize: dataset.annotations.triggerSize,
      tileSize: TILE_SIZE,
      seed: config.seed,
    });
    fs.writeFileSync(
      path.join(config.out, "training_log.json"),
      JSON.stringify({ examples: count, losses }, null, 2),
    );
    return { losses, examples: count };
  } finally {
    xs.dispose();
    ys.dispose();
    model.dispose();
  }
}
