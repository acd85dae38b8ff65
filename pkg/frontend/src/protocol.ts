// Message shapes and frame codecs for the simulation service protocol.
// Frames carry row-major little-endian float32 grids, base64 encoded.

export type Cell = [number, number];

export interface FrameMsg {
  type: "frame";
  step: number;
  field: string;
  w: number;
  h: number;
  data: string;
}

export interface ErrorMsg {
  type: "error";
  msg: string;
}

export type ServerMsg = FrameMsg | ErrorMsg;

export interface DecodedFrame {
  step: number;
  field: string;
  w: number;
  h: number;
  values: Float32Array;
}

export class FrameSizeError extends Error {}

const HOST_LE = new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;

function base64ToBytes(b64: string): Uint8Array {
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

function bytesToBase64(bytes: Uint8Array): string {
  let bin = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    bin += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(bin);
}

/** Decode a frame message; bitwise lossless for finite floats. */
export function decodeFrame(msg: FrameMsg): DecodedFrame {
  const bytes = base64ToBytes(msg.data);
  if (bytes.length !== msg.w * msg.h * 4) {
    throw new FrameSizeError(
      `frame ${msg.w}x${msg.h} needs ${msg.w * msg.h * 4} bytes, got ${bytes.length}`);
  }
  const buf = new ArrayBuffer(bytes.length);
  const view = new Uint8Array(buf);
  view.set(bytes);
  if (!HOST_LE) {
    for (let i = 0; i < view.length; i += 4) {
      const a = view[i], b = view[i + 1];
      view[i] = view[i + 3]; view[i + 1] = view[i + 2];
      view[i + 2] = b; view[i + 3] = a;
    }
  }
  return { step: msg.step, field: msg.field, w: msg.w, h: msg.h,
           values: new Float32Array(buf) };
}

/** Inverse of decodeFrame's payload handling; used by tests and stubs. */
export function encodeFrameData(values: Float32Array): string {
  const bytes = new Uint8Array(values.buffer.slice(
    values.byteOffset, values.byteOffset + values.byteLength));
  if (!HOST_LE) {
    for (let i = 0; i < bytes.length; i += 4) {
      const a = bytes[i], b = bytes[i + 1];
      bytes[i] = bytes[i + 3]; bytes[i + 1] = bytes[i + 2];
      bytes[i + 2] = b; bytes[i + 3] = a;
    }
  }
  return bytesToBase64(bytes);
}

export function parseServerMsg(raw: string): ServerMsg | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const type = (msg as { type?: unknown }).type;
  if (type !== "frame" && type !== "error") return null;
  return msg as ServerMsg;
}

// client -> server builders

export function paintMsg(cells: Cell[], value: "solid" | "fluid") {
  return { type: "paint", cells, value };
}

export function bcFlowMsg(cells: Cell[], vx: number, vy: number) {
  return { type: "bc", cells, vx, vy };
}

export function bcWaveMsg(cells: Cell[], z: number, omega: number) {
  return { type: "bc", cells, z, omega };
}

export function paramsMsg(values: Record<string, number>) {
  return { type: "params", ...values };
}

export interface SelectOpts {
  field?: string;
  upsample?: number;
  maxRate?: number;
}

export function selectMsg(opts: SelectOpts) {
  const msg: Record<string, unknown> = { type: "select" };
  if (opts.field !== undefined) msg.field = opts.field;
  if (opts.upsample !== undefined) msg.upsample = opts.upsample;
  if (opts.maxRate !== undefined) msg.max_rate = opts.maxRate;
  return msg;
}

export function pauseMsg() {
  return { type: "pause" };
}

export function resumeMsg() {
  return { type: "resume" };
}

export function resetMsg() {
  return { type: "reset" };
}
