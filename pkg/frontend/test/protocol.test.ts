import { describe, expect, it } from "vitest";

import {
  FrameMsg, FrameSizeError, bcFlowMsg, bcWaveMsg, decodeFrame,
  encodeFrameData, paintMsg, paramsMsg, parseServerMsg, pauseMsg, resetMsg,
  resumeMsg, selectMsg,
} from "../src/protocol";

function frameMsg(w: number, h: number, values: Float32Array, field = "z"): FrameMsg {
  return { type: "frame", step: 3, field, w, h, data: encodeFrameData(values) };
}

describe("frame codec", () => {
  it("round-trips awkward float32 values bitwise", () => {
    const values = new Float32Array([
      0.0, -0.0, 1.5, -2.5e-12, 3.0e38, 1.4e-45, -1e-40, 6.75,
    ]);
    const frame = decodeFrame(frameMsg(4, 2, values));
    expect(frame.w).toBe(4);
    expect(frame.h).toBe(2);
    expect(new Uint32Array(frame.values.buffer)).toEqual(
      new Uint32Array(values.buffer));
  });

  it("matches node's own base64 of the raw bytes", () => {
    const values = new Float32Array([0.25, -7, 1e-30]);
    const b64 = encodeFrameData(values);
    expect(Buffer.from(b64, "base64")).toEqual(
      Buffer.from(values.buffer.slice(0)));
  });

  it("keeps NaN a NaN", () => {
    const frame = decodeFrame(frameMsg(1, 1, new Float32Array([NaN])));
    expect(Number.isNaN(frame.values[0])).toBe(true);
  });

  it("rejects payloads that disagree with w*h", () => {
    const msg = frameMsg(4, 2, new Float32Array(7));
    expect(() => decodeFrame(msg)).toThrow(FrameSizeError);
  });

  it("handles large frames", () => {
    const values = new Float32Array(768 * 384);
    for (let i = 0; i < values.length; i++) values[i] = Math.sin(i * 0.01);
    const frame = decodeFrame(frameMsg(768, 384, values));
    expect(new Uint32Array(frame.values.buffer)).toEqual(
      new Uint32Array(values.buffer));
  });
});

describe("message builders", () => {
  it("builds paint messages with the exact wire shape", () => {
    const msg = JSON.parse(JSON.stringify(paintMsg([[1, 2], [3, 4]], "solid")));
    expect(msg).toEqual({ type: "paint", cells: [[1, 2], [3, 4]], value: "solid" });
    expect(Object.keys(msg).sort()).toEqual(["cells", "type", "value"]);
  });

  it("builds bc messages per pde kind", () => {
    expect(bcFlowMsg([[0, 0]], 1.5, -0.25)).toEqual(
      { type: "bc", cells: [[0, 0]], vx: 1.5, vy: -0.25 });
    expect(bcWaveMsg([[5, 6]], 0.8, 0.3)).toEqual(
      { type: "bc", cells: [[5, 6]], z: 0.8, omega: 0.3 });
  });

  it("passes params through losslessly", () => {
    const sent = paramsMsg({ mu: 0.05, rho: 2.5 });
    const back = JSON.parse(JSON.stringify(sent));
    expect(Object.is(back.mu, 0.05)).toBe(true);
    expect(Object.is(back.rho, 2.5)).toBe(true);
    expect(back.type).toBe("params");
  });

  it("maps select options to wire names and drops absent ones", () => {
    expect(selectMsg({ field: "p" })).toEqual({ type: "select", field: "p" });
    expect(selectMsg({ upsample: 4, maxRate: 30 })).toEqual(
      { type: "select", upsample: 4, max_rate: 30 });
  });

  it("builds the control singletons", () => {
    expect(pauseMsg()).toEqual({ type: "pause" });
    expect(resumeMsg()).toEqual({ type: "resume" });
    expect(resetMsg()).toEqual({ type: "reset" });
  });
});

describe("parseServerMsg", () => {
  it("accepts frame and error objects", () => {
    expect(parseServerMsg('{"type": "error", "msg": "nope"}')).toEqual(
      { type: "error", msg: "nope" });
    const frame = parseServerMsg(JSON.stringify(frameMsg(1, 1, new Float32Array(1))));
    expect(frame?.type).toBe("frame");
  });

  it("returns null on garbage", () => {
    expect(parseServerMsg("this is not json")).toBeNull();
    expect(parseServerMsg("42")).toBeNull();
    expect(parseServerMsg('{"type": "mystery"}')).toBeNull();
  });
});
