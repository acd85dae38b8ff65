// End-to-end against the real simulation service: spawns `splinepde serve`
// with freshly trained tiny checkpoints and drives it through the client.

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ChildProcess, spawn, spawnSync } from "node:child_process";
import fs from "node:fs";
import net from "node:net";
import os from "node:os";
import path from "node:path";
import WebSocket from "ws";

import { stampCells } from "../src/brush";
import { SimClient, SocketLike } from "../src/client";
import { DecodedFrame } from "../src/protocol";

const PY = "python3";
const CLI = ["-m", "splinepde.cli"];

const wsFactory = (url: string) => new WebSocket(url) as unknown as SocketLike;

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

async function until(cond: () => boolean, ms: number, what = "condition"): Promise<void> {
  const t0 = Date.now();
  while (!cond()) {
    if (Date.now() - t0 > ms) throw new Error(`timed out waiting for ${what}`);
    await sleep(20);
  }
}

let tmp: string;

function train(kind: "flow" | "wave", config: object): string {
  const cfgPath = path.join(tmp, `${kind}_cfg.json`);
  const ckptPath = path.join(tmp, `${kind}.pt`);
  fs.writeFileSync(cfgPath, JSON.stringify(config));
  const run = spawnSync(PY, [...CLI, "train", "--pde", kind,
                             "--config", cfgPath, "--out", ckptPath],
                        { encoding: "utf8", timeout: 240000 });
  if (run.status !== 0) {
    throw new Error(`train ${kind} failed: ${run.stderr}`);
  }
  return ckptPath;
}

interface Server {
  child: ChildProcess;
  port: number;
  url: string;
  stderr: () => string;
  stop: () => Promise<void>;
}

function tryPort(port: number): Promise<boolean> {
  return new Promise((resolve) => {
    const sock = net.connect({ port, host: "127.0.0.1" });
    sock.once("connect", () => { sock.destroy(); resolve(true); });
    sock.once("error", () => resolve(false));
  });
}

async function startServer(ckpt: string, kind: "flow" | "wave"): Promise<Server> {
  const port = 20000 + Math.floor(Math.random() * 20000);
  const child = spawn(PY, [...CLI, "serve", "--ckpt", ckpt, "--pde", kind,
                           "--port", String(port)],
                      { stdio: ["ignore", "ignore", "pipe"] });
  let errBuf = "";
  child.stderr!.on("data", (d) => { errBuf += d; });
  const server: Server = {
    child, port,
    url: `ws://127.0.0.1:${port}`,
    stderr: () => errBuf,
    stop: () => new Promise((resolve) => {
      if (child.exitCode !== null) return resolve();
      child.once("exit", () => resolve());
      child.kill("SIGTERM");
      setTimeout(() => child.kill("SIGKILL"), 5000).unref();
    }),
  };
  const t0 = Date.now();
  while (!(await tryPort(port))) {
    if (child.exitCode !== null) {
      throw new Error(`server exited early (rc ${child.exitCode}): ${errBuf}`);
    }
    if (Date.now() - t0 > 120000) {
      await server.stop();
      throw new Error(`server never listened: ${errBuf}`);
    }
    await sleep(300);
  }
  return server;
}

function readF32(file: string): Float32Array {
  const buf = fs.readFileSync(file);
  const out = new Float32Array(buf.length / 4);
  new Uint8Array(out.buffer).set(buf);
  return out;
}

function bitsEqual(a: Float32Array, b: Float32Array): boolean {
  if (a.length !== b.length) return false;
  const ua = new Uint32Array(a.buffer, a.byteOffset, a.length);
  const ub = new Uint32Array(b.buffer, b.byteOffset, b.length);
  for (let i = 0; i < ua.length; i++) {
    if (ua[i] !== ub[i]) return false;
  }
  return true;
}

// headless rollout through the package's public python API, dumped as raw
// little-endian float32 frames
const DUMP_SCRIPT = `
import os
import sys

import torch

from splinepde.fields import CoefficientState, render
from splinepde.models import load_checkpoint, step as model_step
from splinepde.service import default_domain

ckpt, out_dir, steps, field = sys.argv[1], sys.argv[2], int(sys.argv[3]), sys.argv[4]
model, _ = load_checkpoint(ckpt)
domain = default_domain(model.layout.kind)
state = CoefficientState.zeros(model.layout, domain.width, domain.height,
                               dtype=torch.float32)
os.makedirs(out_dir, exist_ok=True)
for it in range(1, steps + 1):
    state = model_step(model, domain, state)
    grid = render(state, field, upsample=1, tau=1.0)
    grid.astype("<f4").tofile(os.path.join(out_dir, "frame_%04d.bin" % it))
`;

let waveCkpt: string;
let flowCkpt: string;

beforeAll(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), "splinepde-ui-"));
  fs.writeFileSync(path.join(tmp, "dump.py"), DUMP_SCRIPT);
  waveCkpt = train("wave", { width: 16, height: 16, steps: 2,
                             pool_size: 4, batch_size: 2, seed: 0 });
  flowCkpt = train("flow", { width: 32, height: 32, steps: 1,
                             pool_size: 4, batch_size: 2, seed: 0 });
});

afterAll(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

describe("live service", () => {
  it("streams frames that match a headless rollout bitwise over 100 steps", async () => {
    const dumpDir = path.join(tmp, "headless");
    const dump = spawnSync(PY, [path.join(tmp, "dump.py"), waveCkpt,
                                dumpDir, "100", "z"],
                           { encoding: "utf8", timeout: 240000 });
    if (dump.status !== 0) throw new Error(`headless dump failed: ${dump.stderr}`);

    const server = await startServer(waveCkpt, "wave");
    const frames = new Map<number, Float32Array>();
    try {
      const client = new SimClient(server.url, "wave", wsFactory);
      let lastFrame: DecodedFrame | null = null;
      client.onState = (s) => {
        if (s.frame && s.frame !== lastFrame) {
          lastFrame = s.frame;
          if (s.frame.step >= 1 && s.frame.step <= 100 && !frames.has(s.frame.step)) {
            frames.set(s.frame.step, s.frame.values.slice());
          }
        }
      };
      client.connect();
      await until(() => frames.size >= 100, 240000, "100 streamed frames");
      client.close();
    } finally {
      await server.stop();
    }

    let equal = 0;
    for (let step = 1; step <= 100; step++) {
      const streamed = frames.get(step)!;
      const headless = readF32(path.join(dumpDir, `frame_${String(step).padStart(4, "0")}.bin`));
      expect(streamed.length).toBe(64 * 64);
      if (bitsEqual(streamed, headless)) equal += 1;
    }
    expect(equal).toBe(100);
    console.log(`[PASS] protocol round-trip: ${equal}/100 served frames bitwise equal to the headless rollout`);
  }, 420000);

  it("shows a painted disk changing downstream frames within 5 steps", async () => {
    const W = 96, H = 48;
    const disk = stampCells({ shape: "disk", radius: 4, mode: "solid" }, 40, 24, W, H);
    const probes: [number, number][] = [[40, 24], [44, 24], [40, 28]];

    const server = await startServer(flowCkpt, "flow");
    const framesA = new Map<number, Float32Array>();
    const framesB = new Map<number, Float32Array>();
    try {
      // clean run: first five frames untouched
      const a = new SimClient(server.url, "flow", wsFactory);
      let lastA: DecodedFrame | null = null;
      a.onState = (s) => {
        if (s.frame && s.frame !== lastA) {
          lastA = s.frame;
          if (s.frame.step <= 5 && !framesA.has(s.frame.step)) {
            framesA.set(s.frame.step, s.frame.values.slice());
          }
        }
      };
      a.connect();
      await until(() => framesA.size >= 5, 240000, "5 clean frames");
      a.close();
      await sleep(700);

      // edited run: pause, reset, paint the disk, resume
      const b = new SimClient(server.url, "flow", wsFactory);
      let lastB: DecodedFrame | null = null;
      let lastFrameAt = Date.now();
      let echoSeen = false;
      b.onState = (s) => {
        if (s.frame && s.frame !== lastB) {
          lastB = s.frame;
          lastFrameAt = Date.now();
          if (echoSeen && s.frame.step <= 5 && !framesB.has(s.frame.step)) {
            framesB.set(s.frame.step, s.frame.values.slice());
          }
        }
        if (!echoSeen && s.occupancy &&
            probes.every(([x, y]) => s.occupancy!.values[y * W + x] === 1.0)) {
          echoSeen = true;
        }
      };
      b.connect();
      await until(() => b.state.connection === "open", 30000, "connect");
      b.pause();
      await until(() => Date.now() - lastFrameAt > 800, 60000, "stream quiesce");
      b.reset();
      b.paint(disk, "solid");
      b.resume();
      await until(() => echoSeen, 30000, "occupancy echo");
      await until(() => framesB.size >= 5, 240000, "5 painted frames");

      // a quick inflow edit through the bc brush, confirmed by its echo
      const column: [number, number][] = [[2, 10], [2, 11], [2, 12]];
      b.bcFlow(column, 1.0, 0.0);
      await until(() => column.every(([x, y]) =>
        b.state.occupancy!.values[y * W + x] === 1.0), 30000, "bc echo");
      b.close();
    } finally {
      await server.stop();
    }

    // the disk sits at x = 40, r = 4; look strictly downstream of it
    let firstStep = -1;
    let linf = 0;
    for (let step = 1; step <= 5; step++) {
      const clean = framesA.get(step)!;
      const painted = framesB.get(step)!;
      let d = 0;
      for (let y = 0; y < H; y++) {
        for (let x = 48; x < W; x++) {
          const diff = Math.abs(clean[y * W + x] - painted[y * W + x]);
          if (diff > d) d = diff;
        }
      }
      if (d > 0) { firstStep = step; linf = d; break; }
    }
    expect(firstStep).toBeGreaterThanOrEqual(1);
    expect(firstStep).toBeLessThanOrEqual(5);
    console.log(`[PASS] live-edit workflow: downstream Linf ${linf.toExponential(3)} at step ${firstStep}`);
  }, 420000);
});
