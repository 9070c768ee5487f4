import assert from "node:assert/strict";
import { test } from "node:test";

import { MASKED, MaskModel, VISIBLE } from "../src/core/mask.js";

test("box stroke masks exactly its pixel area", () => {
  const m = new MaskModel(100, 100);
  m.addBox(10, 10, 50, 50);
  assert.equal(m.maskedCount(), 2500);
});

test("box and brush compose by union", () => {
  const m = new MaskModel(40, 40);
  m.addBox(0, 0, 10, 10);
  m.addBox(5, 5, 10, 10);
  // union, not sum: overlap counted once
  assert.equal(m.maskedCount(), 100 + 100 - 25);
  m.addBrush([{ x: 30, y: 30 }], 3);
  assert.ok(m.maskedCount() > 175);
});

test("eraser restores visibility", () => {
  const m = new MaskModel(20, 20);
  m.addBox(0, 0, 20, 20);
  assert.equal(m.maskedCount(), 400);
  m.addBox(0, 0, 20, 20, true);
  assert.equal(m.maskedCount(), 0);
});

test("undo restores the previous raster exactly", () => {
  const m = new MaskModel(32, 32);
  m.addBox(2, 2, 8, 8);
  m.addBrush([{ x: 20, y: 20 }, { x: 25, y: 25 }], 4);
  const before = m.rasterize();
  m.addBox(0, 0, 31, 31);
  assert.notDeepEqual(m.rasterize(), before);
  assert.equal(m.undo(), true);
  assert.deepEqual(m.rasterize(), before);
});

test("empty mask fails validation", () => {
  const m = new MaskModel(16, 16);
  assert.match(m.validate() ?? "", /empty/);
});

test("full-image mask is blocked with a context message", () => {
  const m = new MaskModel(16, 16);
  m.addBox(0, 0, 16, 16);
  assert.match(m.validate() ?? "", /leave context/);
});

test("partial mask validates", () => {
  const m = new MaskModel(16, 16);
  m.addBox(4, 4, 4, 4);
  assert.equal(m.validate(), null);
});

test("raster values are exactly 0 and 255", () => {
  const m = new MaskModel(8, 8);
  m.addBox(1, 1, 3, 3);
  const grid = m.rasterize();
  for (const v of grid) assert.ok(v === MASKED || v === VISIBLE);
});

test("brush stroke interpolates between points", () => {
  const m = new MaskModel(64, 64);
  m.addBrush([{ x: 4, y: 4 }, { x: 60, y: 4 }], 2);
  const grid = m.rasterize();
  // midpoint of the segment must be painted even though no point was there
  assert.equal(grid[4 * 64 + 32], MASKED);
});

test("clear empties the stroke list", () => {
  const m = new MaskModel(16, 16);
  m.addBox(0, 0, 4, 4);
  m.clear();
  assert.equal(m.maskedCount(), 0);
  assert.equal(m.undo(), false);
});
