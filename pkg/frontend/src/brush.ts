// Pointer -> cell mapping and stroke batching.

import { Cell } from "./protocol";

export type BrushMode = "solid" | "fluid" | "bc";

export interface Brush {
  shape: "disk" | "square";
  radius: number;
  mode: BrushMode;
}

/** Canvas pixel -> grid cell, clamped to the raster. */
export function canvasToCell(
  px: number,
  py: number,
  canvasW: number,
  canvasH: number,
  gridW: number,
  gridH: number,
): Cell {
  const x = Math.max(0, Math.min(gridW - 1, Math.floor(px * gridW / canvasW)));
  const y = Math.max(0, Math.min(gridH - 1, Math.floor(py * gridH / canvasH)));
  return [x, y];
}

/** Cells covered by one brush stamp centered on (cx, cy), clipped to bounds. */
export function stampCells(brush: Brush, cx: number, cy: number, w: number, h: number): Cell[] {
  const r = Math.max(0, Math.floor(brush.radius));
  const cells: Cell[] = [];
  for (let dy = -r; dy <= r; dy++) {
    for (let dx = -r; dx <= r; dx++) {
      if (brush.shape === "disk" && dx * dx + dy * dy > r * r) continue;
      const x = cx + dx;
      const y = cy + dy;
      if (x < 0 || y < 0 || x >= w || y >= h) continue;
      cells.push([x, y]);
    }
  }
  return cells;
}

/**
 * Collects stamped cells between animation ticks.  flush() hands back the
 * deduplicated batch for one outgoing message and starts the next one.
 */
export class StrokeBatcher {
  private cells: Cell[] = [];
  private seen = new Set<string>();

  add(cells: Cell[]): void {
    for (const [x, y] of cells) {
      const key = `${x},${y}`;
      if (this.seen.has(key)) continue;
      this.seen.add(key);
      this.cells.push([x, y]);
    }
  }

  get pending(): number {
    return this.cells.length;
  }

  flush(): Cell[] {
    const batch = this.cells;
    this.cells = [];
    this.seen.clear();
    return batch;
  }
}
