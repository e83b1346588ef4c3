import { describe, expect, it } from 'vitest';

import {
  PATCH_SIDE,
  nudgeSelection,
  placeSelection,
  screenToImage,
} from '../src/geometry.js';

/** Deterministic 32-bit LCG so property loops are reproducible. */
function lcg(seed: number): () => number {
  let s = seed >>> 0;
  return () => {
    s = (Math.imul(s, 1664525) + 1013904223) >>> 0;
    return s / 2 ** 32;
  };
}

describe('placeSelection', () => {
  it('centers the box on a click at the image center', () => {
    expect(placeSelection(250, 250, 500, 500)).toEqual({ x: 225, y: 225 });
  });

  it('clamps a near-corner click to the origin', () => {
    expect(placeSelection(3, 3, 500, 500)).toEqual({ x: 0, y: 0 });
  });

  it('clamps at the far corner', () => {
    expect(placeSelection(499, 499, 500, 500)).toEqual({ x: 450, y: 450 });
  });

  it('pins each axis independently', () => {
    expect(placeSelection(3, 250, 500, 500)).toEqual({ x: 0, y: 225 });
    expect(placeSelection(250, 499, 500, 500)).toEqual({ x: 225, y: 450 });
  });

  it('keeps the full box inside the image for random clicks', () => {
    const rand = lcg(7);
    for (let i = 0; i < 500; i++) {
      const w = 50 + Math.floor(rand() * 400);
      const h = 50 + Math.floor(rand() * 400);
      const sel = placeSelection(rand() * w, rand() * h, w, h);
      expect(sel.x).toBeGreaterThanOrEqual(0);
      expect(sel.y).toBeGreaterThanOrEqual(0);
      expect(sel.x + PATCH_SIDE).toBeLessThanOrEqual(w);
      expect(sel.y + PATCH_SIDE).toBeLessThanOrEqual(h);
      expect(Number.isInteger(sel.x)).toBe(true);
      expect(Number.isInteger(sel.y)).toBe(true);
    }
  });

  it('centers exactly when there is room', () => {
    const sel = placeSelection(100, 80, 300, 300);
    expect(sel).toEqual({ x: 75, y: 55 });
  });
});

describe('nudgeSelection', () => {
  it('moves by the given delta', () => {
    expect(nudgeSelection({ x: 10, y: 20 }, 1, 0, 200, 200)).toEqual({ x: 11, y: 20 });
    expect(nudgeSelection({ x: 10, y: 20 }, 0, -10, 200, 200)).toEqual({ x: 10, y: 10 });
  });

  it('clamps at every edge', () => {
    expect(nudgeSelection({ x: 0, y: 0 }, -5, -5, 200, 200)).toEqual({ x: 0, y: 0 });
    expect(nudgeSelection({ x: 150, y: 150 }, 10, 10, 200, 200)).toEqual({
      x: 150,
      y: 150,
    });
  });

  it('never escapes the image under random walks', () => {
    const rand = lcg(11);
    let sel = { x: 60, y: 60 };
    for (let i = 0; i < 300; i++) {
      const dx = Math.floor(rand() * 21) - 10;
      const dy = Math.floor(rand() * 21) - 10;
      sel = nudgeSelection(sel, dx, dy, 160, 120);
      expect(sel.x).toBeGreaterThanOrEqual(0);
      expect(sel.y).toBeGreaterThanOrEqual(0);
      expect(sel.x + PATCH_SIDE).toBeLessThanOrEqual(160);
      expect(sel.y + PATCH_SIDE).toBeLessThanOrEqual(120);
    }
  });
});

describe('screenToImage', () => {
  it('is identity at zoom 1', () => {
    expect(screenToImage(37, 91, 1)).toEqual({ x: 37, y: 91 });
  });

  it('divides by the zoom factor', () => {
    expect(screenToImage(500, 500, 2)).toEqual({ x: 250, y: 250 });
    expect(screenToImage(501, 503, 2)).toEqual({ x: 250, y: 251 });
  });

  it('keeps the selection 50x50 in image coordinates at any zoom', () => {
    // a click at the same physical spot selects the same image region
    // whether zoomed or not; the box never scales with the view
    for (const zoom of [1, 2, 4, 8]) {
      const p = screenToImage(250 * zoom, 250 * zoom, zoom);
      const sel = placeSelection(p.x, p.y, 500, 500);
      expect(sel).toEqual({ x: 225, y: 225 });
    }
  });
});
