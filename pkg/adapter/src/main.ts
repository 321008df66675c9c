#!/usr/bin/env node
/**
 * Stdio predictor worker: emits a hello line, answers predict requests with
 * constant-velocity modes, answers malformed requests with error lines, and
 * exits cleanly on bye or EOF. Every response is flushed immediately; the
 * host pipelines one request at a time.
 */

import readline from "node:readline";
import { pathToFileURL } from "node:url";

import { constantVelocityModes } from "./predictor.js";
import {
  isBye,
  parsePredictRequest,
  type WorkerResponse,
} from "./protocol.js";

interface Options {
  tObs: number;
  tPred: number;
  k: number;
}

function parseArgs(argv: string[]): Options {
  const opts: Options = { tObs: 9, tPred: 12, k: 1 };
  for (let i = 0; i < argv.length; i++) {
    const next = () => {
      const v = Number(argv[++i]);
      if (!Number.isInteger(v) || v < 1) {
        throw new Error(`invalid value for ${argv[i - 1]}`);
      }
      return v;
    };
    switch (argv[i]) {
      case "--t-obs":
        opts.tObs = next();
        break;
      case "--t-pred":
        opts.tPred = next();
        break;
      case "--k":
        opts.k = next();
        break;
      default:
        throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  return opts;
}

function writeLine(message: WorkerResponse): void {
  process.stdout.write(`${JSON.stringify(message)}\n`);
}

export async function serve(opts: Options): Promise<void> {
  writeLine({ type: "hello", t_obs: opts.tObs, t_pred: opts.tPred, k: opts.k });
  const rl = readline.createInterface({
    input: process.stdin,
    crlfDelay: Number.POSITIVE_INFINITY,
  });
  for await (const raw of rl) {
    const line = raw.trim();
    if (!line) continue;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch {
      writeLine({ type: "error", id: null, msg: "malformed JSON" });
      continue;
    }
    if (isBye(parsed)) {
      break;
    }
    const request = parsePredictRequest(parsed, opts.tObs);
    if (typeof request === "string") {
      const id = (parsed as Record<string, unknown>)?.id;
      writeLine({
        type: "error",
        id: typeof id === "number" ? id : null,
        msg: request,
      });
      continue;
    }
    writeLine({
      type: "prediction",
      id: request.id,
      modes: constantVelocityModes(request.primary, opts.tPred, opts.k),
    });
  }
  rl.close();
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (invokedDirectly) {
  serve(parseArgs(process.argv.slice(2)))
    .then(() => process.exit(0))
    .catch((err) => {
      process.stderr.write(`${err}\n`);
      process.exit(1);
    });
}
