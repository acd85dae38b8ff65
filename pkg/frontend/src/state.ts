// Client-side session state.  The server owns the simulation; this only
// mirrors what it streamed plus local UI choices.

import { Brush } from "./brush";
import { DecodedFrame, FrameSizeError, decodeFrame, parseServerMsg } from "./protocol";

export type SimKind = "flow" | "wave";
export type Connection = "connecting" | "open" | "closed";

export interface UiState {
  connection: Connection;
  kind: SimKind;
  field: string;
  colormap: string;
  paused: boolean;
  frame: DecodedFrame | null;
  occupancy: DecodedFrame | null;
  params: Record<string, number>;
  brush: Brush;
  lastError: string | null;
  dropped: number;
}

export const FLOW_FIELDS = ["v_mag", "p", "v_x", "v_y", "a_z"];
export const WAVE_FIELDS = ["z", "v_z"];

export function initialState(kind: SimKind): UiState {
  return {
    connection: "closed",
    kind,
    field: kind === "flow" ? "v_mag" : "z",
    colormap: "viridis",
    paused: false,
    frame: null,
    occupancy: null,
    params: kind === "flow" ? { mu: 0.1, rho: 1.0 } : { k: 10.0, delta: 0.1 },
    brush: { shape: "disk", radius: 3, mode: "solid" },
    lastError: null,
    dropped: 0,
  };
}

/** Fold one raw server message into the state (pure). */
export function applyServer(state: UiState, raw: string): UiState {
  const msg = parseServerMsg(raw);
  if (msg === null) {
    return { ...state, dropped: state.dropped + 1, lastError: "unreadable server message" };
  }
  if (msg.type === "error") {
    return { ...state, lastError: msg.msg };
  }
  let frame: DecodedFrame;
  try {
    frame = decodeFrame(msg);
  } catch (err) {
    if (err instanceof FrameSizeError) {
      return { ...state, dropped: state.dropped + 1, lastError: err.message };
    }
    throw err;
  }
  if (frame.field === "occupancy") {
    return { ...state, occupancy: frame };
  }
  return { ...state, frame, field: frame.field };
}
