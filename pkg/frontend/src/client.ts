// Websocket session client.  The socket is injected so node tests can pass
// the "ws" implementation and the browser uses the native one.

import {
  Cell, SelectOpts, bcFlowMsg, bcWaveMsg, paintMsg, paramsMsg, pauseMsg,
  resetMsg, resumeMsg, selectMsg,
} from "./protocol";
import { SimKind, UiState, applyServer, initialState } from "./state";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open" | "message" | "close" | "error",
                   cb: (ev: any) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

export class SimClient {
  state: UiState;
  onState: ((state: UiState) => void) | null = null;

  private sock: SocketLike | null = null;
  private outbox: string[] = [];

  constructor(
    private url: string,
    kind: SimKind,
    private factory: SocketFactory =
      (u) => new WebSocket(u) as unknown as SocketLike,
  ) {
    this.state = initialState(kind);
  }

  connect(): void {
    const sock = this.factory(this.url);
    this.sock = sock;
    this.update({ ...this.state, connection: "connecting" });
    sock.addEventListener("open", () => {
      this.update({ ...this.state, connection: "open", lastError: null });
      for (const raw of this.outbox.splice(0)) sock.send(raw);
    });
    sock.addEventListener("message", (ev) => {
      this.update(applyServer(this.state, String(ev.data)));
    });
    sock.addEventListener("close", () => {
      this.update({ ...this.state, connection: "closed" });
    });
    sock.addEventListener("error", () => {
      // a close event follows; nothing to do here
    });
  }

  close(): void {
    this.sock?.close();
  }

  /** Raster size from the last occupancy frame, or null before one arrived. */
  gridSize(): [number, number] | null {
    const occ = this.state.occupancy;
    return occ ? [occ.w, occ.h] : null;
  }

  paint(cells: Cell[], value: "solid" | "fluid"): void {
    const kept = this.inBounds(cells);
    if (kept.length) this.send(paintMsg(kept, value));
  }

  bcFlow(cells: Cell[], vx: number, vy: number): void {
    const kept = this.inBounds(cells);
    if (kept.length) this.send(bcFlowMsg(kept, vx, vy));
  }

  bcWave(cells: Cell[], z: number, omega: number): void {
    const kept = this.inBounds(cells);
    if (kept.length) this.send(bcWaveMsg(kept, z, omega));
  }

  setParams(values: Record<string, number>): void {
    this.send(paramsMsg(values));
    this.update({ ...this.state, params: { ...this.state.params, ...values } });
  }

  select(opts: SelectOpts): void {
    this.send(selectMsg(opts));
  }

  pause(): void {
    this.send(pauseMsg());
    this.update({ ...this.state, paused: true });
  }

  resume(): void {
    this.send(resumeMsg());
    this.update({ ...this.state, paused: false });
  }

  reset(): void {
    this.send(resetMsg());
  }

  setBrush(brush: Partial<UiState["brush"]>): void {
    this.update({ ...this.state, brush: { ...this.state.brush, ...brush } });
  }

  setColormap(name: string): void {
    this.update({ ...this.state, colormap: name });
  }

  private inBounds(cells: Cell[]): Cell[] {
    const size = this.gridSize();
    if (size === null) {
      this.update({ ...this.state, lastError: "no occupancy frame yet, edit dropped" });
      return [];
    }
    const [w, h] = size;
    return cells.filter(([x, y]) => x >= 0 && y >= 0 && x < w && y < h);
  }

  private send(msg: object): void {
    const raw = JSON.stringify(msg);
    if (this.state.connection !== "open" || this.sock === null) {
      this.outbox.push(raw);
      this.update({ ...this.state, lastError: "not connected, edit queued" });
      return;
    }
    this.sock.send(raw);
  }

  private update(state: UiState): void {
    this.state = state;
    this.onState?.(state);
  }
}
