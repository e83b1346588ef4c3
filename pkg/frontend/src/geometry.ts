/** Side length of every crop, in image pixels. Matches the backend contract. */
export const PATCH_SIDE = 50;

/** Top-left corner of the fixed-size selection box, in image coordinates. */
export interface Point {
  x: number;
  y: number;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

/**
 * Center the selection box on a click at image coordinates, clamped so the
 * full box stays inside a width x height image. A click at the center of a
 * 500x500 image lands the box at (225, 225); a click at (3, 3) clamps to
 * (0, 0).
 */
export function placeSelection(
  clickX: number,
  clickY: number,
  width: number,
  height: number,
): Point {
  return {
    x: clamp(Math.round(clickX) - PATCH_SIDE / 2, 0, Math.max(0, width - PATCH_SIDE)),
    y: clamp(Math.round(clickY) - PATCH_SIDE / 2, 0, Math.max(0, height - PATCH_SIDE)),
  };
}

/** Shift the box by (dx, dy) image pixels, clamped to the image bounds. */
export function nudgeSelection(
  sel: Point,
  dx: number,
  dy: number,
  width: number,
  height: number,
): Point {
  return {
    x: clamp(sel.x + dx, 0, Math.max(0, width - PATCH_SIDE)),
    y: clamp(sel.y + dy, 0, Math.max(0, height - PATCH_SIDE)),
  };
}

/**
 * Map a position on the zoomed canvas back to image coordinates. The canvas
 * is the image scaled by `zoom`, so this is a floor division; the selection
 * itself always lives in image coordinates and never scales.
 */
export function screenToImage(screenX: number, screenY: number, zoom: number): Point {
  return { x: Math.floor(screenX / zoom), y: Math.floor(screenY / zoom) };
}
