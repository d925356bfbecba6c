/**
 * Deterministic beacon-scene fixtures.
 *
 * Each frame is a noisy background with one or two dark vehicle bodies; a
 * bright beacon patch inside each body marks the dense-region center the
 * model must learn to find. Written in the export-dense layout: images/,
 * annotations.json, images.json.
 */

import * as fs from "fs";
import * as path from "path";
import { PNG } from "pngjs";

import { Lcg } from "../src/rng";
import {
  IMAGES_SCHEMA_VERSION,
  RegionRecord,
  SCHEMA_VERSION,
} from "../src/schema";

const WIDTH = 120;
const HEIGHT = 80;
const BEACON: [number, number, number] = [230, 210, 90];
const BEACON_HALF = 3;

export interface FixtureOptions {
  frames: number;
  seed: number;
  vehiclesPerFrame?: number;
  /** append one vehicle-free frame with an empty record list */
  withEmptyFrame?: boolean;
}

export interface Fixture {
  dir: string;
  annotationsPath: string;
  imagesPath: string;
  triggerSize: [number, number];
  frames: Record<string, RegionRecord[]>;
  emptyFrameId?: string;
}

function fillRect(
  png: PNG,
  left: number,
  top: number,
  right: number,
  bottom: number,
  rgb: [number, number, number],
): void {
  for (let y = top; y < bottom; y++) {
    for (let x = left; x < right; x++) {
      const o = (y * WIDTH + x) * 4;
      png.data[o] = rgb[0];
      png.data[o + 1] = rgb[1];
      png.data[o + 2] = rgb[2];
      png.data[o + 3] = 255;
    }
  }
}

function renderFrame(rng: Lcg, vehicles: number): {
  png: PNG;
  records: RegionRecord[];
} {
  const png = new PNG({ width: WIDTH, height: HEIGHT });
  for (let i = 0; i < WIDTH * HEIGHT; i++) {
    const g = rng.int(55, 95);
    png.data[i * 4] = g;
    png.data[i * 4 + 1] = g;
    png.data[i * 4 + 2] = rng.int(70, 110);
    png.data[i * 4 + 3] = 255;
  }
  const records: RegionRecord[] = [];
  for (let v = 0; v < vehicles; v++) {
    const bw = rng.int(34, 50);
    const bh = rng.int(22, 30);
    const left = rng.int(2, WIDTH - bw - 2);
    const top = rng.int(2, HEIGHT - bh - 2);
    const body = rng.int(28, 52);
    fillRect(png, left, top, left + bw, top + bh, [body, body, body + 8]);
    // glass band, like the real renderer, so the beacon is not the only edge
    fillRect(png, left + 3, top + 3, left + bw - 3, top + 7, [110, 125, 135]);
    const margin = BEACON_HALF + 2;
    const bx = rng.int(left + margin, left + bw - margin - 1);
    const by = rng.int(top + margin, top + bh - margin - 1);
    fillRect(
      png,
      bx - BEACON_HALF, by - BEACON_HALF,
      bx + BEACON_HALF + 1, by + BEACON_HALF + 1,
      BEACON,
    );
    records.push({
      vehicle_index: v,
      x: bx,
      y: by,
      w: 15,
      h: 15,
      score: 1.0,
      bbox2d: [left, top, left + bw, top + bh],
      point_count: rng.int(20, 60),
    });
  }
  return { png, records };
}

export function writeFixture(dir: string, opts: FixtureOptions): Fixture {
  const rng = new Lcg(opts.seed);
  const imageDir = path.join(dir, "images");
  fs.mkdirSync(imageDir, { recursive: true });

  const frames: Record<string, RegionRecord[]> = {};
  const images: Record<string, string> = {};
  const perFrame = opts.vehiclesPerFrame ?? 2;
  const total = opts.frames + (opts.withEmptyFrame ? 1 : 0);
  let emptyFrameId: string | undefined;
  for (let f = 0; f < total; f++) {
    const fid = String(f).padStart(6, "0");
    const blank = opts.withEmptyFrame && f === total - 1;
    const { png, records } = renderFrame(rng, blank ? 0 : perFrame);
    fs.writeFileSync(path.join(imageDir, `${fid}.png`), PNG.sync.write(png));
    frames[fid] = records;
    images[fid] = path.join("images", `${fid}.png`);
    if (blank) emptyFrameId = fid;
  }

  const annotationsPath = path.join(dir, "annotations.json");
  const imagesPath = path.join(dir, "images.json");
  fs.writeFileSync(
    annotationsPath,
    JSON.stringify({ version: SCHEMA_VERSION, trigger_size: [15, 15], frames }, null, 2),
  );
  fs.writeFileSync(
    imagesPath,
    JSON.stringify({ version: IMAGES_SCHEMA_VERSION, images }, null, 2),
  );
  return {
    dir,
    annotationsPath,
    imagesPath,
    triggerSize: [15, 15],
    frames,
    emptyFrameId,
  };
}
