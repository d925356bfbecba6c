#!/usr/bin/env node
/**
 * densepred train   --config cfg.json
 * densepred predict --model dir --annotations a.json --images i.json --out preds.json
 *
 * Exit codes: 0 success, 1 runtime failure, 2 usage error.
 */

import * as fs from "fs";

import { predictToFile } from "./predict";
import { SchemaError } from "./schema";
import { parseConfig, train } from "./train";

const USAGE = `usage: densepred <command> [options]

commands:
  train    --config <file>     train on an export-dense dataset
  predict  --model <dir> --annotations <file> --images <file> --out <file>
`;

function parseFlags(argv: string[], allowed: string[]): Record<string, string> {
  const flags: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || !allowed.includes(key.slice(2))) {
      throw new UsageError(`unknown option ${key}`);
    }
    const value = argv[i + 1];
    if (value === undefined) {
      throw new UsageError(`option ${key} needs a value`);
    }
    flags[key.slice(2)] = value;
  }
  return flags;
}

class UsageError extends Error {}

function required(flags: Record<string, string>, names: string[]): void {
  for (const name of names) {
    if (!(name in flags)) {
      throw new UsageError(`missing required option --${name}`);
    }
  }
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === "train") {
      const flags = parseFlags(rest, ["config"]);
      required(flags, ["config"]);
      const config = parseConfig(JSON.parse(fs.readFileSync(flags.config, "utf8")));
      const result = await train(config);
      const final = result.losses[result.losses.length - 1];
      console.log(
        `trained on ${result.examples} vehicles for ${result.losses.length} epochs ` +
        `(loss ${result.losses[0].toFixed(6)} -> ${final.toFixed(6)}); ` +
        `model in ${config.out}`,
      );
      return 0;
    }
    if (command === "predict") {
      const flags = parseFlags(rest, ["model", "annotations", "images", "out"]);
      required(flags, ["model", "annotations", "images", "out"]);
      const result = await predictToFile(
        flags.model, flags.annotations, flags.images, flags.out,
      );
      const n = Object.values(result.frames).reduce((acc, r) => acc + r.length, 0);
      console.log(`wrote ${n} predictions to ${flags.out}`);
      return 0;
    }
    process.stderr.write(USAGE);
    return command === undefined || command === "--help" ? 0 : 2;
  } catch (exc) {
    if (exc instanceof UsageError) {
      process.stderr.write(`error: ${exc.message}\n${USAGE}`);
      return 2;
    }
    if (exc instanceof SchemaError || exc instanceof SyntaxError) {
      process.stderr.write(`error: ${exc.message}\n`);
      return 1;
    }
    throw exc;
  }
}

main().then(
  (code) => process.exit(code),
  (exc) => {
    console.error(exc);
    process.exit(1);
  },
);
