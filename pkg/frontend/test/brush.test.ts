import { describe, expect, it } from "vitest";

import { Brush, StrokeBatcher, canvasToCell, stampCells } from "../src/brush";
import { Cell } from "../src/protocol";

const disk = (radius: number): Brush => ({ shape: "disk", radius, mode: "solid" });

describe("canvasToCell", () => {
  it("maps the canvas center to the grid center under identity zoom", () => {
    expect(canvasToCell(32, 16, 64, 32, 64, 32)).toEqual([32, 16]);
  });

  it("maps through an 8x display scale", () => {
    expect(canvasToCell(256, 128, 512, 256, 64, 32)).toEqual([32, 16]);
    expect(canvasToCell(0, 0, 512, 256, 64, 32)).toEqual([0, 0]);
    expect(canvasToCell(511, 255, 512, 256, 64, 32)).toEqual([63, 31]);
  });

  it("clamps out-of-canvas pointers to the raster", () => {
    expect(canvasToCell(-5, 700, 512, 256, 64, 32)).toEqual([0, 31]);
  });
});

describe("stampCells", () => {
  it("radius 0 is a single cell", () => {
    expect(stampCells(disk(0), 7, 9, 20, 20)).toEqual([[7, 9]]);
  });

  it("disk stamps satisfy the circle equation", () => {
    const r = 3;
    const cells = stampCells(disk(r), 10, 10, 32, 32);
    const got = new Set(cells.map(([x, y]) => `${x},${y}`));
    for (let y = 0; y < 32; y++) {
      for (let x = 0; x < 32; x++) {
        const inside = (x - 10) ** 2 + (y - 10) ** 2 <= r * r;
        expect(got.has(`${x},${y}`)).toBe(inside);
      }
    }
  });

  it("square stamps are full boxes", () => {
    const brush: Brush = { shape: "square", radius: 1, mode: "fluid" };
    expect(stampCells(brush, 5, 5, 32, 32)).toHaveLength(9);
  });

  it("clips at the raster edge", () => {
    const cells = stampCells(disk(2), 0, 0, 32, 32);
    for (const [x, y] of cells) {
      expect(x).toBeGreaterThanOrEqual(0);
      expect(y).toBeGreaterThanOrEqual(0);
    }
    expect(cells.length).toBeLessThan(stampCells(disk(2), 10, 10, 32, 32).length);
  });
});

describe("StrokeBatcher", () => {
  it("one flush per tick, union equals the rasterized stroke", () => {
    const batcher = new StrokeBatcher();
    const stamps = [
      stampCells(disk(2), 5, 5, 64, 64),
      stampCells(disk(2), 7, 5, 64, 64),
      stampCells(disk(2), 9, 6, 64, 64),
    ];
    const batches: Cell[][] = [];
    for (const cells of stamps) {
      batcher.add(cells);
      batches.push(batcher.flush());
    }
    expect(batches).toHaveLength(3);
    for (const batch of batches) expect(batch.length).toBeGreaterThan(0);

    const union = new Set(stamps.flat().map(([x, y]) => `${x},${y}`));
    const sent = new Set(batches.flat().map(([x, y]) => `${x},${y}`));
    expect(sent).toEqual(union);
  });

  it("dedupes within a tick", () => {
    const batcher = new StrokeBatcher();
    batcher.add([[1, 1], [2, 1]]);
    batcher.add([[2, 1], [3, 1]]);
    expect(batcher.pending).toBe(3);
    expect(batcher.flush()).toEqual([[1, 1], [2, 1], [3, 1]]);
    expect(batcher.pending).toBe(0);
  });
});
