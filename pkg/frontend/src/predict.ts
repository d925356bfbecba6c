/**
 * Batch inference: vehicle proposals in, badfusion-densepred/v1 out.
 *
 * Proposals come from an annotations file in the same schema (the
 * export-dense output works directly; only bbox2d is read from it, never
 * the oracle region). Each proposal box is scanned with a grid of native
 * tiles; the most confident tile names the region center, and one extra
 * pass on a tile recentered there sharpens the estimate. Every emitted
 * record uses the trigger size the model was trained with; frames whose
 * proposal list is empty stay in the output with an empty list.
 */

import * as fs from "fs";
import * as tf from "@tensorflow/tfjs";

import {
  SCAN_STRIDE,
  TILE_SIZE,
  Tile,
  readPng,
  resolveImages,
  tileAt,
  tilesToTensor,
} from "./data";
import { loadModel } from "./model";
import {
  PredictionSet,
  RegionRecord,
  SchemaError,
  parsePredictionJson,
  serializePredictionSet,
} from "./schema";

interface Slot {
  fid: string;
  record: RegionRecord;
  /** tile index range [start, end) in the scan batch */
  start: number;
  end: number;
}

function scanTiles(
  image: ReturnType<typeof readPng>,
  bbox: [number, number, number, number],
): Tile[] {
  const [left, top, right, bottom] = bbox;
  const half = TILE_SIZE / 2;
  const tiles: Tile[] = [tileAt(image, (left + right) / 2, (top + bottom) / 2)];
  const seen = new Set([`${tiles[0].wx},${tiles[0].wy}`]);
  for (let cy = top + half; cy <= bottom - half + SCAN_STRIDE; cy += SCAN_STRIDE) {
    for (let cx = left + half; cx <= right - half + SCAN_STRIDE; cx += SCAN_STRIDE) {
      const tile = tileAt(
        image,
        Math.max(Math.min(cx, right - half), left + half),
        Math.max(Math.min(cy, bottom - half), top + half),
      );
      const key = `${tile.wx},${tile.wy}`;
      if (!seen.has(key)) {
        seen.add(key);
        tiles.push(tile);
      }
    }
  }
  return tiles;
}

export async function predict(
  modelDir: string,
  annotationsPath: string,
  imagesPath: string,
): Promise<PredictionSet> {
  await tf.setBackend("cpu");
  await tf.ready();
  const { model, metadata } = await loadModel(modelDir);
  try {
    const proposals = parsePredictionJson(fs.readFileSync(annotationsPath, "utf8"));
    const images = resolveImages(imagesPath);

    const tiles: Tile[] = [];
    const slots: Slot[] = [];
    const decoded: Record<string, ReturnType<typeof readPng>> = {};
    const frames: Record<string, RegionRecord[]> = {};
    for (const fid of Object.keys(proposals.frames).sort()) {
      frames[fid] = [];
      if (proposals.frames[fid].length === 0) {
        continue;
      }
      const imagePath = images[fid];
      if (!imagePath) {
        throw new SchemaError(`frame ${fid} has proposals but no image manifest entry`);
      }
      decoded[fid] = readPng(imagePath);
      for (const record of proposals.frames[fid]) {
        if (!record.bbox2d) {
          throw new SchemaError(
            `frame ${fid} vehicle ${record.vehicle_index}: proposal has no bbox2d`,
          );
        }
        const start = tiles.length;
        tiles.push(...scanTiles(decoded[fid], record.bbox2d));
        slots.push({ fid, record, start, end: tiles.length });
      }
    }

    if (slots.length > 0) {
      const xs = tilesToTensor(tiles);
      const out = model.predict(xs) as tf.Tensor2D;
      const scanned = await out.array();
      xs.dispose();
      out.dispose();

      // coarse pick per vehicle, then one recentered tile to refine
      const picks = slots.map(({ start, end }) => {
        let best = start;
        for (let i = start + 1; i < end; i++) {
          if (scanned[i][2] > scanned[best][2]) best = i;
        }
        return {
          x: tiles[best].wx + scanned[best][0] * TILE_SIZE,
          y: tiles[best].wy + scanned[best][1] * TILE_SIZE,
          conf: scanned[best][2],
        };
      });
      const refineTiles = picks.map((p, i) =>
        tileAt(decoded[slots[i].fid], p.x, p.y),
      );
      const rxs = tilesToTensor(refineTiles);
      const rout = model.predict(rxs) as tf.Tensor2D;
      const refined = await rout.array();
      rxs.dispose();
      rout.dispose();

      const [tw, th] = metadata.triggerSize;
      slots.forEach(({ fid, record }, i) => {
        const [left, top, right, bottom] = record.bbox2d!;
        const x = refineTiles[i].wx + refined[i][0] * TILE_SIZE;
        const y = refineTiles[i].wy + refined[i][1] * TILE_SIZE;
        const conf = Math.max(picks[i].conf, refined[i][2]);
        frames[fid].push({
          vehicle_index: record.vehicle_index,
          x: Math.min(Math.max(x, left), right),
          y: Math.min(Math.max(y, top), bottom),
          w: tw,
          h: th,
          score: Math.min(Math.max(conf, 0), 1),
        });
      });
    }
    return { triggerSize: metadata.triggerSize, frames };
  } finally {
    model.dispose();
  }
}

export async function predictToFile(
  modelDir: string,
  annotationsPath: string,
  imagesPath: string,
  outPath: string,
): Promise<PredictionSet> {
  const result = await predict(modelDir, annotationsPath, imagesPath);
  fs.writeFileSync(outPath, serializePredictionSet(result));
  return result;
}
