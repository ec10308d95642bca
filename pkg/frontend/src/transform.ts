/** Zoom/pan mapping between viewport (CSS pixel) and image coordinates. */

export interface Viewport {
  scale: number;
  panX: number;
  panY: number;
}

export interface Point {
  x: number;
  y: number;
}

export function identityViewport(): Viewport {
  return { scale: 1, panX: 0, panY: 0 };
}

/** Viewport position -> integer image pixel (the pixel under the cursor). */
export function canvasToImage(v: Viewport, cx: number, cy: number): Point {
  return {
    x: Math.floor((cx - v.panX) / v.scale),
    y: Math.floor((cy - v.panY) / v.scale),
  };
}

/** Top-left corner of an image pixel in viewport coordinates. */
export function imageToCanvas(v: Viewport, ix: number, iy: number): Point {
  return { x: ix * v.scale + v.panX, y: iy * v.scale + v.panY };
}

export function inBounds(width: number, height: number, p: Point): boolean {
  return p.x >= 0 && p.x < width && p.y >= 0 && p.y < height;
}

/** Rescale around a fixed viewport point so the pixel under it stays put. */
export function zoomAt(v: Viewport, factor: number, cx: number, cy: number): Viewport {
  const scale = Math.min(Math.max(v.scale * factor, 0.25), 32);
  const ratio = scale / v.scale;
  return {
    scale,
    panX: cx - (cx - v.panX) * ratio,
    panY: cy - (cy - v.panY) * ratio,
  };
}

export function panBy(v: Viewport, dx: number, dy: number): Viewport {
  return { scale: v.scale, panX: v.panX + dx, panY: v.panY + dy };
}
