/**
 * The dense-region network and its on-disk artifact format.
 *
 * A small seeded convnet scores one native-resolution tile: it emits
 * (ox, oy, confidence) where (ox, oy) locate the dense-region center inside
 * the tile and the confidence says whether the center is in this tile at
 * all. The loss penalizes the offset only on positive rows, so negatives
 * shape nothing but the confidence head.
 *
 * The artifact directory holds model.json (topology + weight specs),
 * weights.bin, and metadata.json binding the model to its trigger size.
 * Saving goes through tf.io handlers directly so the pure-JS build works
 * in Node without the native bindings.
 */

import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";

import { SchemaError } from "./schema";

export const BACKBONE = "beacon-tile-24";

export interface ModelMetadata {
  backbone: string;
  triggerSize: [number, number];
  tileSize: number;
  seed: number;
}

/** Confidence-gated MSE: offsets count only where the row is positive. */
export function tileLoss(yTrue: tf.Tensor, yPred: tf.Tensor): tf.Tensor {
  return tf.tidy(() => {
    const posT = yTrue.slice([0, 0], [-1, 2]);
    const confT = yTrue.slice([0, 2], [-1, 1]);
    const posP = yPred.slice([0, 0], [-1, 2]);
    const confP = yPred.slice([0, 2], [-1, 1]);
    const posErr = tf.sum(tf.square(tf.sub(posP, posT)), 1, true);
    return tf.mean(tf.add(tf.square(tf.sub(confP, confT)), tf.mul(confT, posErr)));
  });
}

export function buildModel(seed: number, learningRate: number, tileSize: number) {
  const init = (offset: number) => tf.initializers.glorotUniform({ seed: seed + offset });
  const model = tf.sequential();
  // One strided conv is enough to spot the bright patch, and the pure-JS
  // backend makes anything deeper painfully slow.
  model.add(tf.layers.conv2d({
    inputShape: [tileSize, tileSize, 3],
    filters: 8, kernelSize: 3, strides: 2, activation: "relu", kernelInitializer: init(0),
  }));
  model.add(tf.layers.maxPooling2d({ poolSize: 2 }));
  model.add(tf.layers.flatten());
  model.add(tf.layers.dense({ units: 48, activation: "relu", kernelInitializer: init(1) }));
  model.add(tf.layers.dense({ units: 3, activation: "sigmoid", kernelInitializer: init(2) }));
  model.compile({ optimizer: tf.train.adam(learningRate), loss: tileLoss });
  return model;
}

function weightBuffer(data: ArrayBuffer | ArrayBuffer[]): Buffer {
  if (Array.isArray(data)) {
    return Buffer.concat(data.map((part) => Buffer.from(part)));
  }
  return Buffer.from(data);
}

export async function saveModel(
  model: tf.LayersModel,
  dir: string,
  metadata: ModelMetadata,
): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      fs.writeFileSync(
        path.join(dir, "weights.bin"),
        weightBuffer(artifacts.weightData as ArrayBuffer | ArrayBuffer[]),
      );
      fs.writeFileSync(
        path.join(dir, "model.json"),
        JSON.stringify({
          modelTopology: artifacts.modelTopology,
          weightSpecs: artifacts.weightSpecs,
        }),
      );
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: "JSON" as const,
        },
      };
    }),
  );
  fs.writeFileSync(path.join(dir, "metadata.json"), JSON.stringify(metadata, null, 2));
}

export async function loadModel(
  dir: string,
): Promise<{ model: tf.LayersModel; metadata: ModelMetadata }> {
  const modelPath = path.join(dir, "model.json");
  const weightsPath = path.join(dir, "weights.bin");
  const metaPath = path.join(dir, "metadata.json");
  for (const p of [modelPath, weightsPath, metaPath]) {
    if (!fs.existsSync(p)) {
      throw new SchemaError(`model directory is missing ${p}`);
    }
  }
  const doc = JSON.parse(fs.readFileSync(modelPath, "utf8"));
  const weights = fs.readFileSync(weightsPath);
  const model = await tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: doc.modelTopology,
      weightSpecs: doc.weightSpecs,
      weightData: weights.buffer.slice(
        weights.byteOffset,
        weights.byteOffset + weights.byteLength,
      ),
    }),
  );
  const metadata = JSON.parse(fs.readFileSync(metaPath, "utf8")) as ModelMetadata;
  if (!Array.isArray(metadata.triggerSize) || metadata.triggerSize.length !== 2) {
    throw new SchemaError("metadata.json has no valid triggerSize");
  }
  return { model, metadata };
}
