import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import path from "node:path";
import readline from "node:readline";
import { afterEach, describe, expect, it } from "vitest";

import { constantVelocityModes, fanAngles } from "../src/predictor.js";

const MAIN = path.resolve(__dirname, "../dist/main.js");

class WorkerHarness {
  proc: ChildProcessWithoutNullStreams;
  private lines: AsyncIterator<string>;

  constructor(args: string[] = []) {
    this.proc = spawn("node", [MAIN, ...args], { stdio: "pipe" });
    const rl = readline.createInterface({ input: this.proc.stdout });
    this.lines = rl[Symbol.asyncIterator]();
  }

  async read(): Promise<Record<string, unknown>> {
    const next = await this.lines.next();
    if (next.done) throw new Error("worker closed stdout");
    return JSON.parse(next.value);
  }

  write(message: unknown): void {
    const text = typeof message === "string" ? message : JSON.stringify(message);
    this.proc.stdin.write(`${text}\n`);
  }

  async exitCode(): Promise<number | null> {
    return new Promise((resolve) => this.proc.on("exit", resolve));
  }

  kill(): void {
    if (this.proc.exitCode === null) this.proc.kill();
  }
}

function lineObservation(tObs: number): [number, number][] {
  // ends with p_{-1} = (0, 0), p_0 = (1, 0)
  const pts: [number, number][] = [];
  for (let i = 0; i < tObs; i++) pts.push([i - tObs + 2, 0]);
  return pts;
}

let harness: WorkerHarness | undefined;

afterEach(() => {
  harness?.kill();
  harness = undefined;
});

describe("handshake", () => {
  it("announces layout and mode count first", async () => {
    harness = new WorkerHarness(["--t-obs", "9", "--t-pred", "12", "--k", "3"]);
    const hello = await harness.read();
    expect(hello).toEqual({ type: "hello", t_obs: 9, t_pred: 12, k: 3 });
  });
});

describe("prediction", () => {
  it("extrapolates the last observed velocity", async () => {
    harness = new WorkerHarness();
    await harness.read();
    harness.write({
      type: "predict",
      id: 5,
      primary: lineObservation(9),
      neighbors: [],
    });
    const resp = await harness.read();
    expect(resp.type).toBe("prediction");
    expect(resp.id).toBe(5);
    const modes = resp.modes as [number, number][][];
    expect(modes).toHaveLength(1);
    expect(modes[0]).toHaveLength(12);
    expect(modes[0][11][0]).toBeCloseTo(13, 12);
    expect(modes[0][11][1]).toBeCloseTo(0, 12);
  });

  it("echoes arbitrary request ids exactly", async () => {
    harness = new WorkerHarness();
    await harness.read();
    for (const id of [42, 7, 42, 0]) {
      harness.write({
        type: "predict",
        id,
        primary: lineObservation(9),
        neighbors: [],
      });
      const resp = await harness.read();
      expect(resp.id).toBe(id);
    }
  });

  it("fans extra modes over +-30 degrees", async () => {
    harness = new WorkerHarness(["--k", "3"]);
    await harness.read();
    harness.write({
      type: "predict",
      id: 1,
      primary: lineObservation(9),
      neighbors: [],
    });
    const resp = await harness.read();
    const modes = resp.modes as [number, number][][];
    expect(modes).toHaveLength(3);
    const finals = modes.map((m) => m[11]);
    expect(finals[0][0]).toBeCloseTo(13, 12);
    const c = 1 + 12 * Math.cos(Math.PI / 6);
    const s = 12 * Math.sin(Math.PI / 6);
    expect(finals[1][0]).toBeCloseTo(c, 12);
    expect(finals[1][1]).toBeCloseTo(-s, 12);
    expect(finals[2][1]).toBeCloseTo(s, 12);
  });
});

describe("error handling", () => {
  it("reports malformed JSON and keeps serving", async () => {
    harness = new WorkerHarness();
    await harness.read();
    harness.write("{not json");
    const err = await harness.read();
    expect(err.type).toBe("error");
    harness.write({
      type: "predict",
      id: 2,
      primary: lineObservation(9),
      neighbors: [],
    });
    const resp = await harness.read();
    expect(resp.type).toBe("prediction");
    expect(resp.id).toBe(2);
  });

  it("rejects wrong observation lengths with the request id", async () => {
    harness = new WorkerHarness();
    await harness.read();
    harness.write({
      type: "predict",
      id: 9,
      primary: lineObservation(4),
      neighbors: [],
    });
    const err = await harness.read();
    expect(err.type).toBe("error");
    expect(err.id).toBe(9);
  });

  it("rejects non-finite coordinates", async () => {
    harness = new WorkerHarness();
    await harness.read();
    const primary = lineObservation(9);
    harness.write(
      `{"type":"predict","id":3,"primary":${JSON.stringify(primary).replace(
        "[0,0]",
        "[null,0]"
      )},"neighbors":[]}`
    );
    const err = await harness.read();
    expect(err.type).toBe("error");
  });
});

describe("shutdown", () => {
  it("exits with code 0 on bye", async () => {
    harness = new WorkerHarness();
    await harness.read();
    harness.write({ type: "bye" });
    expect(await harness.exitCode()).toBe(0);
  });

  it("exits with code 0 on EOF", async () => {
    harness = new WorkerHarness();
    await harness.read();
    harness.proc.stdin.end();
    expect(await harness.exitCode()).toBe(0);
  });
});

describe("predictor math", () => {
  it("mode fan matches the documented angles", () => {
    expect(fanAngles(1)).toEqual([0]);
    expect(fanAngles(3).map((a) => Math.round((a * 180) / Math.PI))).toEqual([
      0, -30, 30,
    ]);
  });

  it("single mode follows p0 + t * v", () => {
    const modes = constantVelocityModes(
      [
        [0, 0],
        [0.5, 0.25],
      ],
      4,
      1
    );
    expect(modes[0]).toEqual([
      [1, 0.5],
      [1.5, 0.75],
      [2, 1],
      [2.5, 1.25],
    ]);
  });
});
