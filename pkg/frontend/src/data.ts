/**
 * Dataset loading and tile extraction.
 *
 * The detector works on fixed-size windows ("tiles") cut from the camera
 * image at native resolution, never on resized vehicle crops: resizing a
 * wide box down to a thumbnail dilutes the few-pixel visual cue marking the
 * dense region until it is unlearnable, while a native tile sees it at
 * constant scale no matter how close the vehicle is.
 *
 * Training rows are sampled per annotated vehicle: two positive tiles
 * jittered around the labeled region center (targets: the center's offset
 * within the tile, confidence 1) and one negative tile elsewhere in the
 * vehicle box (confidence 0, offset ignored by the loss).
 */

import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";
import { PNG } from "pngjs";

import { Lcg } from "./rng";
import {
  PredictionSet,
  RegionRecord,
  SchemaError,
  parseImagesManifest,
  parsePredictionJson,
} from "./schema";

export const TILE_SIZE = 24;
/** px between scanned tile centers at predict time */
export const SCAN_STRIDE = 8;
const POSITIVE_JITTER = 6;
const NEGATIVE_MIN_DIST = 14;

export interface DecodedImage {
  width: number;
  height: number;
  /** RGBA byte rows, as pngjs delivers them */
  data: Uint8Array;
}

export function readPng(filePath: string): DecodedImage {
  const png = PNG.sync.read(fs.readFileSync(filePath));
  return { width: png.width, height: png.height, data: png.data };
}

export interface ExportedDataset {
  annotations: PredictionSet;
  /** frame id -> absolute image path */
  images: Record<string, string>;
  dir: string;
}

export function loadExportedDataset(dir: string): ExportedDataset {
  const annotationsPath = path.join(dir, "annotations.json");
  const imagesPath = path.join(dir, "images.json");
  for (const p of [annotationsPath, imagesPath]) {
    if (!fs.existsSync(p)) {
      throw new SchemaError(`exported dataset is missing ${p}`);
    }
  }
  return {
    annotations: parsePredictionJson(fs.readFileSync(annotationsPath, "utf8")),
    images: resolveImages(imagesPath),
    dir,
  };
}

/** Image manifest paths are relative to the manifest's own location. */
export function resolveImages(manifestPath: string): Record<string, string> {
  const base = path.dirname(path.resolve(manifestPath));
  const images = parseImagesManifest(fs.readFileSync(manifestPath, "utf8"));
  const resolved: Record<string, string> = {};
  for (const [fid, rel] of Object.entries(images)) {
    resolved[fid] = path.resolve(base, rel);
  }
  return resolved;
}

export interface Tile {
  /** RGB floats in [0, 1], TILE_SIZE x TILE_SIZE x 3 */
  buf: Float32Array;
  /** window top-left in image coordinates */
  wx: number;
  wy: number;
}

/**
 * Native-resolution tile whose center lands as close to (cx, cy) as the
 * image allows; the window shifts inward at borders. Images smaller than a
 * tile are zero-padded on the right/bottom.
 */
export function tileAt(image: DecodedImage, cx: number, cy: number): Tile {
  const wx = Math.min(
    Math.max(Math.round(cx - TILE_SIZE / 2), 0),
    Math.max(image.width - TILE_SIZE, 0),
  );
  const wy = Math.min(
    Math.max(Math.round(cy - TILE_SIZE / 2), 0),
    Math.max(image.height - TILE_SIZE, 0),
  );
  const buf = new Float32Array(TILE_SIZE * TILE_SIZE * 3);
  const rows = Math.min(TILE_SIZE, image.height - wy);
  const cols = Math.min(TILE_SIZE, image.width - wx);
  for (let row = 0; row < rows; row++) {
    for (let col = 0; col < cols; col++) {
      const src = ((wy + row) * image.width + wx + col) * 4;
      const dst = (row * TILE_SIZE + col) * 3;
      buf[dst] = image.data[src] / 255;
      buf[dst + 1] = image.data[src + 1] / 255;
      buf[dst + 2] = image.data[src + 2] / 255;
    }
  }
  return { buf, wx, wy };
}

export function tilesToTensor(tiles: Tile[]): tf.Tensor4D {
  const flat = new Float32Array(tiles.length * TILE_SIZE * TILE_SIZE * 3);
  tiles.forEach((tile, i) => flat.set(tile.buf, i * TILE_SIZE * TILE_SIZE * 3));
  return tf.tensor4d(flat, [tiles.length, TILE_SIZE, TILE_SIZE, 3]);
}

export interface TrainingSet {
  xs: tf.Tensor4D;
  ys: tf.Tensor2D;
  /** annotated vehicles, not training rows */
  count: number;
}

function requireBbox(record: RegionRecord, fid: string): [number, number, number, number] {
  if (!record.bbox2d) {
    throw new SchemaError(
      `frame ${fid} vehicle ${record.vehicle_index}: training record has no bbox2d`,
    );
  }
  return record.bbox2d;
}

/** Offset-in-tile target for a positive tile. */
export function targetFor(record: RegionRecord, tile: Tile): [number, number, number] {
  return [(record.x - tile.wx) / TILE_SIZE, (record.y - tile.wy) / TILE_SIZE, 1];
}

export function buildTrainingSet(dataset: ExportedDataset, seed: number): TrainingSet {
  const rng = new Lcg(seed);
  const tiles: Tile[] = [];
  const targets: Array<[number, number, number]> = [];
  let vehicles = 0;
  for (const fid of Object.keys(dataset.annotations.frames).sort()) {
    const imagePath = dataset.images[fid];
    if (!imagePath) {
      throw new SchemaError(`frame ${fid} has annotations but no image manifest entry`);
    }
    const image = readPng(imagePath);
    for (const record of dataset.annotations.frames[fid]) {
      const [left, top, right, bottom] = requireBbox(record, fid);
      vehicles += 1;
      for (let k = 0; k < 2; k++) {
        const jx = (rng.next() * 2 - 1) * POSITIVE_JITTER;
        const jy = (rng.next() * 2 - 1) * POSITIVE_JITTER;
        const tile = tileAt(image, record.x + jx, record.y + jy);
        tiles.push(tile);
        targets.push(targetFor(record, tile));
      }
      // one tile elsewhere in the box teaches the confidence head what the
      // surrounding bodywork looks like; boxes too tight to stay clear of
      // the center simply contribute no negative
      for (let tries = 0, made = 0; tries < 20 && made < 1; tries++) {
        const nx = left + rng.next() * (right - left);
        const ny = top + rng.next() * (bottom - top);
        if (Math.hypot(nx - record.x, ny - record.y) < NEGATIVE_MIN_DIST) continue;
        const tile = tileAt(image, nx, ny);
        const tcx = tile.wx + TILE_SIZE / 2;
        const tcy = tile.wy + TILE_SIZE / 2;
        if (Math.hypot(tcx - record.x, tcy - record.y) < NEGATIVE_MIN_DIST) continue;
        tiles.push(tile);
        targets.push([0.5, 0.5, 0]);
        made += 1;
      }
    }
  }
  if (tiles.length === 0) {
    throw new SchemaError(`exported dataset ${dataset.dir} has no vehicle records`);
  }
  return { xs: tilesToTensor(tiles), ys: tf.tensor2d(targets), count: vehicles };
}
