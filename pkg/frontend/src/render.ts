// Frame -> RGBA rasterization and streamline tracing.  Pure buffer code so
// it runs under node tests; the DOM entry wraps the output in ImageData.

import { DecodedFrame } from "./protocol";
import { Colormap, NAN_RGB, SOLID_RGB } from "./colormap";

/**
 * Colormap a field frame into an RGBA buffer of the same pixel size.
 * Occupancy (at base grid resolution) overlays solid cells; the field frame
 * may be an integer upsample of the base grid.
 */
export function rasterize(
  frame: DecodedFrame,
  map: Colormap,
  lo: number,
  hi: number,
  occupancy: DecodedFrame | null,
  out: Uint8ClampedArray,
): void {
  if (out.length !== frame.w * frame.h * 4) {
    throw new Error(`rgba buffer is ${out.length}, frame needs ${frame.w * frame.h * 4}`);
  }
  const span = hi - lo || 1;
  const fx = occupancy ? frame.w / occupancy.w : 1;
  const fy = occupancy ? frame.h / occupancy.h : 1;
  for (let y = 0; y < frame.h; y++) {
    for (let x = 0; x < frame.w; x++) {
      const i = y * frame.w + x;
      let rgb: [number, number, number];
      if (occupancy &&
          occupancy.values[Math.floor(y / fy) * occupancy.w + Math.floor(x / fx)] > 0.5) {
        rgb = SOLID_RGB;
      } else {
        const v = frame.values[i];
        rgb = Number.isFinite(v) ? map((v - lo) / span) : NAN_RGB;
      }
      const base = i << 2;
      out[base] = rgb[0];
      out[base + 1] = rgb[1];
      out[base + 2] = rgb[2];
      out[base + 3] = 255;
    }
  }
}

function bilinear(a: Float32Array, w: number, h: number, x: number, y: number): number {
  const cx = Math.max(0, Math.min(w - 1, x));
  const cy = Math.max(0, Math.min(h - 1, y));
  const x0 = Math.min(w - 2, Math.floor(cx));
  const y0 = Math.min(h - 2, Math.floor(cy));
  const fx = cx - x0;
  const fy = cy - y0;
  const i = y0 * w + x0;
  return a[i] * (1 - fx) * (1 - fy) + a[i + 1] * fx * (1 - fy)
    + a[i + w] * (1 - fx) * fy + a[i + w + 1] * fx * fy;
}

/**
 * Short Euler tracer through a sampled velocity frame pair.  Returns a flat
 * [x0, y0, x1, y1, ...] polyline, truncated when it leaves the grid.
 */
export function traceStreamline(
  vx: Float32Array,
  vy: Float32Array,
  w: number,
  h: number,
  x0: number,
  y0: number,
  steps: number,
  dt: number,
): number[] {
  const pts = [x0, y0];
  let x = x0;
  let y = y0;
  for (let k = 0; k < steps; k++) {
    const ux = bilinear(vx, w, h, x, y) * dt;
    const uy = bilinear(vy, w, h, x, y) * dt;
    if (ux === 0 && uy === 0) break;
    x += ux;
    y += uy;
    if (x < 0 || y < 0 || x > w - 1 || y > h - 1) break;
    pts.push(x, y);
  }
  return pts;
}

/** Uniformly spread seed points for the streamline overlay. */
export function streamlineSeeds(w: number, h: number, nx: number, ny: number): [number, number][] {
  const seeds: [number, number][] = [];
  for (let j = 0; j < ny; j++) {
    for (let i = 0; i < nx; i++) {
      seeds.push([(i + 0.5) * w / nx, (j + 0.5) * h / ny]);
    }
  }
  return seeds;
}
