// Browser entry: canvas, controls and the websocket session wiring.

import { StrokeBatcher, canvasToCell, stampCells } from "./brush";
import { SimClient } from "./client";
import { COLORMAPS, defaultColormapFor, symmetricRange, valueRange } from "./colormap";
import { DecodedFrame } from "./protocol";
import { rasterize, streamlineSeeds, traceStreamline } from "./render";
import { FLOW_FIELDS, SimKind, WAVE_FIELDS } from "./state";

const query = new URLSearchParams(location.search);
const wsUrl = query.get("ws") ?? "ws://127.0.0.1:8765";
const kind = (query.get("pde") === "wave" ? "wave" : "flow") as SimKind;

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const canvas = $<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const status = $<HTMLDivElement>("status");
const fieldSel = $<HTMLSelectElement>("field");
const mapSel = $<HTMLSelectElement>("colormap");
const upsampleInp = $<HTMLInputElement>("upsample");
const rateInp = $<HTMLInputElement>("rate");
const brushModeSel = $<HTMLSelectElement>("brushmode");
const radiusInp = $<HTMLInputElement>("radius");
const bcA = $<HTMLInputElement>("bca");
const bcB = $<HTMLInputElement>("bcb");
const paramA = $<HTMLInputElement>("parama");
const paramB = $<HTMLInputElement>("paramb");
const pauseBtn = $<HTMLButtonElement>("pause");
const resetBtn = $<HTMLButtonElement>("reset");
const streamChk = $<HTMLInputElement>("streamlines");

const client = new SimClient(wsUrl, kind);
const batcher = new StrokeBatcher();

// scratch canvas at frame resolution, scaled up on draw
const back = document.createElement("canvas");
const backCtx = back.getContext("2d")!;
let image: ImageData | null = null;
let needsDraw = false;
let dragging = false;
const vcache: Record<string, DecodedFrame> = {};

function setupControls() {
  const fields = kind === "flow" ? FLOW_FIELDS : WAVE_FIELDS;
  for (const name of fields) {
    fieldSel.add(new Option(name, name));
  }
  for (const name of Object.keys(COLORMAPS)) {
    mapSel.add(new Option(name, name));
  }
  if (kind === "flow") {
    $<HTMLSpanElement>("bcalabel").textContent = "vx";
    $<HTMLSpanElement>("bcblabel").textContent = "vy";
    $<HTMLSpanElement>("paramalabel").textContent = "mu";
    $<HTMLSpanElement>("paramblabel").textContent = "rho";
    paramA.value = "0.1";
    paramB.value = "1.0";
  } else {
    $<HTMLSpanElement>("bcalabel").textContent = "z";
    $<HTMLSpanElement>("bcblabel").textContent = "omega";
    $<HTMLSpanElement>("paramalabel").textContent = "k";
    $<HTMLSpanElement>("paramblabel").textContent = "delta";
    paramA.value = "10";
    paramB.value = "0.1";
    streamChk.disabled = true;
  }

  fieldSel.onchange = () => {
    client.select({ field: fieldSel.value });
    mapSel.value = defaultColormapFor(fieldSel.value);
    client.setColormap(mapSel.value);
  };
  mapSel.onchange = () => client.setColormap(mapSel.value);
  upsampleInp.onchange = () => {
    const f = Math.max(1, Math.min(8, Number(upsampleInp.value) || 1));
    upsampleInp.value = String(f);
    client.select({ upsample: f });
  };
  rateInp.onchange = () => client.select({ maxRate: Math.max(0, Number(rateInp.value) || 0) });
  brushModeSel.onchange = () => client.setBrush({ mode: brushModeSel.value as never });
  radiusInp.onchange = () => client.setBrush({ radius: Number(radiusInp.value) || 0 });
  pauseBtn.onclick = () => {
    if (client.state.paused) client.resume();
    else client.pause();
    pauseBtn.textContent = client.state.paused ? "resume" : "pause";
  };
  resetBtn.onclick = () => client.reset();
  const sendParams = () => {
    const a = Number(paramA.value);
    const b = Number(paramB.value);
    if (kind === "flow") client.setParams({ mu: a, rho: b });
    else client.setParams({ k: a, delta: b });
  };
  paramA.onchange = sendParams;
  paramB.onchange = sendParams;
  streamChk.onchange = () => {
    if (!streamChk.checked) client.select({ field: fieldSel.value });
  };
}

function pointerCell(ev: PointerEvent): [number, number] | null {
  const size = client.gridSize();
  if (size === null) return null;
  const rect = canvas.getBoundingClientRect();
  return canvasToCell(ev.clientX - rect.left, ev.clientY - rect.top,
                      rect.width, rect.height, size[0], size[1]);
}

function stamp(ev: PointerEvent) {
  const cell = pointerCell(ev);
  const size = client.gridSize();
  if (cell === null || size === null) return;
  batcher.add(stampCells(client.state.brush, cell[0], cell[1], size[0], size[1]));
}

canvas.addEventListener("pointerdown", (ev) => {
  dragging = true;
  canvas.setPointerCapture(ev.pointerId);
  stamp(ev);
});
canvas.addEventListener("pointermove", (ev) => {
  if (dragging) stamp(ev);
});
window.addEventListener("pointerup", () => {
  dragging = false;
});

function flushStroke() {
  if (batcher.pending === 0) return;
  const cells = batcher.flush();
  const mode = client.state.brush.mode;
  if (mode === "bc") {
    if (kind === "flow") client.bcFlow(cells, Number(bcA.value), Number(bcB.value));
    else client.bcWave(cells, Number(bcA.value), Number(bcB.value));
  } else {
    client.paint(cells, mode);
  }
}

function drawStreamlines(scaleX: number, scaleY: number) {
  const vx = vcache.v_x;
  const vy = vcache.v_y;
  if (!vx || !vy || vx.w !== vy.w) return;
  ctx.strokeStyle = "rgba(255, 255, 255, 0.7)";
  ctx.lineWidth = 1;
  for (const [sx, sy] of streamlineSeeds(vx.w, vx.h, 12, 8)) {
    const pts = traceStreamline(vx.values, vy.values, vx.w, vx.h, sx, sy, 20, 0.8);
    ctx.beginPath();
    ctx.moveTo(pts[0] * scaleX, pts[1] * scaleY);
    for (let i = 2; i < pts.length; i += 2) {
      ctx.lineTo(pts[i] * scaleX, pts[i + 1] * scaleY);
    }
    ctx.stroke();
  }
}

function draw() {
  const frame = client.state.frame ?? client.state.occupancy;
  if (frame === null || !needsDraw) return;
  needsDraw = false;
  if (back.width !== frame.w || back.height !== frame.h) {
    back.width = frame.w;
    back.height = frame.h;
    image = backCtx.createImageData(frame.w, frame.h);
  }
  const diverging = client.state.colormap === "coolwarm";
  const [lo, hi] = diverging ? symmetricRange(frame.values) : valueRange(frame.values);
  const map = COLORMAPS[client.state.colormap] ?? COLORMAPS.viridis;
  rasterize(frame, map, lo, hi, client.state.occupancy, image!.data as unknown as Uint8ClampedArray);
  backCtx.putImageData(image!, 0, 0);

  const scale = Math.max(1, Math.floor(960 / frame.w));
  if (canvas.width !== frame.w * scale || canvas.height !== frame.h * scale) {
    canvas.width = frame.w * scale;
    canvas.height = frame.h * scale;
  }
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(back, 0, 0, canvas.width, canvas.height);
  if (streamChk.checked) {
    drawStreamlines(canvas.width / (vcache.v_x?.w ?? frame.w),
                    canvas.height / (vcache.v_x?.h ?? frame.h));
  }
}

client.onState = (state) => {
  needsDraw = true;
  if (state.frame && streamChk.checked && kind === "flow") {
    vcache[state.frame.field] = state.frame;
    // ping-pong the selected component to keep both fresh
    client.select({ field: state.frame.field === "v_x" ? "v_y" : "v_x" });
  }
  const err = state.lastError ? `  [${state.lastError}]` : "";
  status.textContent = `${state.connection}  step ${state.frame?.step ?? 0}` +
    `  field ${state.frame?.field ?? "-"}  dropped ${state.dropped}${err}`;
};

function tick() {
  flushStroke();
  draw();
  requestAnimationFrame(tick);
}

setupControls();
client.connect();
requestAnimationFrame(tick);
