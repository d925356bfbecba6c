/**
 * The "badfusion-densepred/v1" interchange format.
 *
 * One JSON document maps frame ids to per-vehicle dense-region boxes;
 * (x, y) is the region center in pixels, (w, h) its size, score in [0, 1].
 * The exporter adds "bbox2d" and "point_count" extras to training records;
 * prediction files we emit carry only the required keys. The companion
 * images manifest ("badfusion-densepred-images/v1") maps frame ids to image
 * paths relative to its own location.
 *
 * Validation here mirrors the consumer's parser so a file accepted on this
 * side never bounces on the other.
 */

export const SCHEMA_VERSION = "badfusion-densepred/v1";
export const IMAGES_SCHEMA_VERSION = "badfusion-densepred-images/v1";

export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export interface RegionRecord {
  vehicle_index: number;
  x: number;
  y: number;
  w: number;
  h: number;
  score: number;
  /** vehicle 2D box (left, top, right, bottom); present in exporter output */
  bbox2d?: [number, number, number, number];
  /** projected points inside the oracle region; present in exporter output */
  point_count?: number;
}

export interface PredictionSet {
  triggerSize: [number, number];
  frames: Record<string, RegionRecord[]>;
}

const REQUIRED_KEYS = ["vehicle_index", "x", "y", "w", "h", "score"] as const;

function asFiniteNumber(value: unknown, where: string): number {
  const n = Number(value);
  if (typeof value === "boolean" || value === null || !Number.isFinite(n)) {
    throw new SchemaError(`${where}: non-numeric record field (${String(value)})`);
  }
  return n;
}

function parseRecord(obj: unknown, where: string): RegionRecord {
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new SchemaError(`${where}: record is not an object`);
  }
  const rec = obj as Record<string, unknown>;
  for (const key of REQUIRED_KEYS) {
    if (!(key in rec)) {
      throw new SchemaError(`${where}: record missing key '${key}'`);
    }
  }
  const score = asFiniteNumber(rec.score, where);
  const w = Math.trunc(asFiniteNumber(rec.w, where));
  const h = Math.trunc(asFiniteNumber(rec.h, where));
  if (score < 0 || score > 1) {
    throw new SchemaError(`${where}: score ${score} outside [0, 1]`);
  }
  if (w < 1 || h < 1) {
    throw new SchemaError(`${where}: non-positive region size ${w}x${h}`);
  }
  const out: RegionRecord = {
    vehicle_index: Math.trunc(asFiniteNumber(rec.vehicle_index, where)),
    x: asFiniteNumber(rec.x, where),
    y: asFiniteNumber(rec.y, where),
    w,
    h,
    score,
  };
  if (rec.bbox2d !== undefined) {
    if (!Array.isArray(rec.bbox2d) || rec.bbox2d.length !== 4) {
      throw new SchemaError(`${where}: bbox2d must be [left, top, right, bottom]`);
    }
    out.bbox2d = rec.bbox2d.map((v) => asFiniteNumber(v, where)) as [
      number, number, number, number,
    ];
  }
  if (rec.point_count !== undefined) {
    out.point_count = Math.trunc(asFiniteNumber(rec.point_count, where));
  }
  return out;
}

export function parsePredictionJson(text: string): PredictionSet {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (exc) {
    throw new SchemaError(`prediction file is not valid JSON: ${exc}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new SchemaError(`expected a '${SCHEMA_VERSION}' document, got version null`);
  }
  const root = doc as Record<string, unknown>;
  if (root.version !== SCHEMA_VERSION) {
    throw new SchemaError(
      `expected a '${SCHEMA_VERSION}' document, got version '${String(root.version)}'`,
    );
  }
  const size = root.trigger_size;
  const sizeOk =
    Array.isArray(size) &&
    size.length === 2 &&
    size.every((s) => Number.isFinite(Number(s)) && Number(s) >= 1);
  if (!sizeOk) {
    throw new SchemaError("trigger_size must be a [w, h] pair of positive ints");
  }
  const framesObj = root.frames;
  if (typeof framesObj !== "object" || framesObj === null || Array.isArray(framesObj)) {
    throw new SchemaError("frames must map frame ids to record lists");
  }
  const frames: Record<string, RegionRecord[]> = {};
  for (const [fid, recs] of Object.entries(framesObj)) {
    if (!Array.isArray(recs)) {
      throw new SchemaError(`frame ${fid}: records must be a list`);
    }
    frames[fid] = recs.map((r) => parseRecord(r, `frame ${fid}`));
  }
  const [w, h] = size as [unknown, unknown];
  return { triggerSize: [Math.trunc(Number(w)), Math.trunc(Number(h))], frames };
}

export function serializePredictionSet(set: PredictionSet): string {
  const frames: Record<string, object[]> = {};
  for (const fid of Object.keys(set.frames).sort()) {
    frames[fid] = set.frames[fid].map((r) => {
      const rec: Record<string, unknown> = {
        vehicle_index: r.vehicle_index,
        x: r.x,
        y: r.y,
        w: r.w,
        h: r.h,
        score: r.score,
      };
      if (r.bbox2d !== undefined) rec.bbox2d = r.bbox2d;
      if (r.point_count !== undefined) rec.point_count = r.point_count;
      return rec;
    });
  }
  return JSON.stringify(
    { version: SCHEMA_VERSION, trigger_size: set.triggerSize, frames },
    null,
    2,
  );
}

export function parseImagesManifest(text: string): Record<string, string> {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (exc) {
    throw new SchemaError(`images manifest is not valid JSON: ${exc}`);
  }
  const root = doc as Record<string, unknown> | null;
  if (typeof root !== "object" || root === null || root.version !== IMAGES_SCHEMA_VERSION) {
    throw new SchemaError(`expected a '${IMAGES_SCHEMA_VERSION}' document`);
  }
  const images = root.images;
  if (typeof images !== "object" || images === null || Array.isArray(images)) {
    throw new SchemaError("images must map frame ids to paths");
  }
  for (const [fid, path] of Object.entries(images)) {
    if (typeof path !== "string") {
      throw new SchemaError(`frame ${fid}: image path must be a string`);
    }
  }
  return images as Record<string, string>;
}
