import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { BACKBONE } from "../src/model";
import { predictToFile } from "../src/predict";
import {
  IMAGES_SCHEMA_VERSION,
  SCHEMA_VERSION,
  SchemaError,
  parsePredictionJson,
} from "../src/schema";
import { parseConfig, train } from "../src/train";
import { Fixture, writeFixture } from "./fixtures";

const TRAIN_TIMEOUT = 120_000;

describe("parseConfig", () => {
  it("applies defaults", () => {
    const cfg = parseConfig({ dataset: "d", out: "o" });
    expect(cfg).toEqual({
      dataset: "d",
      epochs: 10,
      learningRate: 0.005,
      backbone: BACKBONE,
      out: "o",
      seed: 0,
    });
  });

  it("reads the learning_rate key", () => {
    expect(parseConfig({ dataset: "d", out: "o", learning_rate: 0.01 }).learningRate)
      .toBe(0.01);
  });

  it("names the tile detector as the only backbone", () => {
    expect(BACKBONE).toBe("beacon-tile-24");
  });

  it("rejects bad configs", () => {
    const bad = [
      null,
      [],
      { out: "o" },
      { dataset: "d" },
      { dataset: "d", out: "o", epochs: 0 },
      { dataset: "d", out: "o", epochs: 2.5 },
      { dataset: "d", out: "o", epochs: "five" },
      { dataset: "d", out: "o", learning_rate: 0 },
      { dataset: "d", out: "o", learning_rate: -1 },
      { dataset: "d", out: "o", backbone: "vgg-16" },
      { dataset: "d", out: "o", seed: 1.5 },
    ];
    for (const doc of bad) {
      expect(() => parseConfig(doc), JSON.stringify(doc)).toThrow(SchemaError);
    }
  });
});

describe("train + predict on the beacon fixture", () => {
  const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "densepred-"));
  const modelA = path.join(tmp, "model-a");
  let trainFix: Fixture;
  let heldFix: Fixture;
  let lossesA: number[];

  beforeAll(async () => {
    trainFix = writeFixture(path.join(tmp, "train"), { frames: 20, seed: 101 });
    heldFix = writeFixture(path.join(tmp, "held"), {
      frames: 6,
      seed: 202,
      vehiclesPerFrame: 1,
      withEmptyFrame: true,
    });
    const result = await train({
      dataset: trainFix.dir,
      epochs: 5,
      learningRate: 0.005,
      backbone: BACKBONE,
      out: modelA,
      seed: 7,
    });
    lossesA = result.losses;
  }, TRAIN_TIMEOUT);

  afterAll(() => {
    fs.rmSync(tmp, { recursive: true, force: true });
  });

  it("final loss beats the initial loss after 5 epochs", () => {
    expect(lossesA).toHaveLength(5);
    expect(lossesA[4]).toBeLessThan(lossesA[0]);
    for (const loss of lossesA) {
      expect(Number.isFinite(loss)).toBe(true);
    }
  });

  it("saves the artifact plus a per-epoch loss log", () => {
    for (const name of ["model.json", "weights.bin", "metadata.json", "training_log.json"]) {
      expect(fs.existsSync(path.join(modelA, name)), name).toBe(true);
    }
    const log = JSON.parse(fs.readFileSync(path.join(modelA, "training_log.json"), "utf8"));
    expect(log.examples).toBe(40);
    expect(log.losses).toEqual(lossesA);
    const meta = JSON.parse(fs.readFileSync(path.join(modelA, "metadata.json"), "utf8"));
    expect(meta.backbone).toBe(BACKBONE);
    expect(meta.triggerSize).toEqual([15, 15]);
    expect(meta.tileSize).toBe(24);
  });

  it("reproduces the final loss under the same seed", async () => {
    const again = await train({
      dataset: trainFix.dir,
      epochs: 5,
      learningRate: 0.005,
      backbone: BACKBONE,
      out: path.join(tmp, "model-b"),
      seed: 7,
    });
    expect(Math.abs(again.losses[4] - lossesA[4])).toBeLessThanOrEqual(1e-6);
  }, TRAIN_TIMEOUT);

  it("rejects malformed annotations with SchemaError", async () => {
    const badDir = path.join(tmp, "bad");
    fs.mkdirSync(badDir, { recursive: true });
    fs.writeFileSync(path.join(badDir, "images.json"), JSON.stringify({
      version: IMAGES_SCHEMA_VERSION,
      images: {},
    }));
    fs.writeFileSync(path.join(badDir, "annotations.json"), JSON.stringify({
      version: SCHEMA_VERSION,
      trigger_size: [15, 15],
      frames: { a: [{ vehicle_index: 0, x: 1, y: 1, w: 15, h: 15, score: 2.0 }] },
    }));
    const cfg = {
      dataset: badDir,
      epochs: 1,
      learningRate: 0.005,
      backbone: BACKBONE,
      out: path.join(tmp, "model-bad"),
      seed: 0,
    };
    await expect(train(cfg)).rejects.toBeInstanceOf(SchemaError);
  });

  it("rejects training records that lack a vehicle box", async () => {
    const badDir = path.join(tmp, "no-bbox");
    fs.mkdirSync(badDir, { recursive: true });
    fs.copyFileSync(
      path.join(trainFix.dir, "images.json"),
      path.join(badDir, "images.json"),
    );
    fs.cpSync(path.join(trainFix.dir, "images"), path.join(badDir, "images"), {
      recursive: true,
    });
    const doc = JSON.parse(fs.readFileSync(trainFix.annotationsPath, "utf8"));
    for (const records of Object.values(doc.frames) as Array<Record<string, unknown>[]>) {
      records.forEach((r) => delete r.bbox2d);
    }
    fs.writeFileSync(path.join(badDir, "annotations.json"), JSON.stringify(doc));
    const cfg = {
      dataset: badDir,
      epochs: 1,
      learningRate: 0.005,
      backbone: BACKBONE,
      out: path.join(tmp, "model-nb"),
      seed: 0,
    };
    await expect(train(cfg)).rejects.toBeInstanceOf(SchemaError);
  });

  it("predicts one record per proposal with the trained trigger size", async () => {
    const outPath = path.join(tmp, "preds.json");
    await predictToFile(modelA, heldFix.annotationsPath, heldFix.imagesPath, outPath);
    const preds = parsePredictionJson(fs.readFileSync(outPath, "utf8"));
    expect(preds.triggerSize).toEqual([15, 15]);
    for (const [fid, proposals] of Object.entries(heldFix.frames)) {
      const out = preds.frames[fid];
      expect(out, fid).toHaveLength(proposals.length);
      for (const rec of out) {
        const proposal = proposals.find((p) => p.vehicle_index === rec.vehicle_index)!;
        const [left, top, right, bottom] = proposal.bbox2d!;
        expect([rec.w, rec.h]).toEqual([15, 15]);
        expect(rec.score).toBeGreaterThanOrEqual(0);
        expect(rec.score).toBeLessThanOrEqual(1);
        expect(rec.x).toBeGreaterThanOrEqual(left);
        expect(rec.x).toBeLessThanOrEqual(right);
        expect(rec.y).toBeGreaterThanOrEqual(top);
        expect(rec.y).toBeLessThanOrEqual(bottom);
      }
    }
  }, TRAIN_TIMEOUT);

  it("keeps a vehicle-free frame as an empty record list", async () => {
    const outPath = path.join(tmp, "preds.json");
    const preds = parsePredictionJson(fs.readFileSync(outPath, "utf8"));
    expect(heldFix.emptyFrameId).toBeDefined();
    expect(preds.frames[heldFix.emptyFrameId!]).toEqual([]);
  });
});
