/** Flat-earth math for drawing the GPS track.
 *
 * At plant scale a local equirectangular projection about the track
 * centroid is indistinguishable from a proper map and needs no tiles:
 * east = dLon * cos(lat0), north = dLat, both in degrees.
 */

import type { GpsFix } from "./api.js";

export interface XY {
  x: number;
  y: number;
}

export interface Projected {
  points: XY[];
  lat0: number;
  lon0: number;
}

export function projectTrack(fixes: GpsFix[]): Projected {
  if (fixes.length === 0) throw new Error("no gps fixes");
  const lat0 = fixes.reduce((s, f) => s + f.latitude, 0) / fixes.length;
  const lon0 = fixes.reduce((s, f) => s + f.longitude, 0) / fixes.length;
  const k = Math.cos((lat0 * Math.PI) / 180);
  const points = fixes.map((f) => ({
    x: (f.longitude - lon0) * k,
    y: f.latitude - lat0,
  }));
  return { points, lat0, lon0 };
}

export interface Viewport {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/** Fit points into a width x height box with a pixel margin.
 *
 * A degenerate extent (single fix, or all fixes identical) gets a small
 * synthetic extent so the lone point lands mid-canvas instead of dividing
 * by zero.
 */
export function fitViewport(
  points: XY[],
  width: number,
  height: number,
  margin = 20,
): Viewport {
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const p of points) {
    minX = Math.min(minX, p.x);
    maxX = Math.max(maxX, p.x);
    minY = Math.min(minY, p.y);
    maxY = Math.max(maxY, p.y);
  }
  let spanX = maxX - minX;
  let spanY = maxY - minY;
  if (spanX <= 0 && spanY <= 0) {
    spanX = spanY = 1e-6;
    minX -= spanX / 2;
    minY -= spanY / 2;
  }
  const innerW = Math.max(1, width - 2 * margin);
  const innerH = Math.max(1, height - 2 * margin);
  const scale = Math.min(innerW / Math.max(spanX, 1e-12), innerH / Math.max(spanY, 1e-12));
  const cx = minX + spanX / 2;
  const cy = minY + spanY / 2;
  return {
    scale,
    offsetX: width / 2 - cx * scale,
    offsetY: height / 2 + cy * scale,
  };
}

/** Screen position of a projected point; north points up. */
export function toScreen(p: XY, v: Viewport): XY {
  return { x: p.x * v.scale + v.offsetX, y: v.offsetY - p.y * v.scale };
}

/** Index of the point nearest to a screen position, or null beyond maxDist. */
export function nearestIndex(
  points: XY[],
  v: Viewport,
  sx: number,
  sy: number,
  maxDist = 12,
): number | null {
  let best: number | null = null;
  let bestD = maxDist;
  for (let i = 0; i < points.length; i++) {
    const s = toScreen(points[i], v);
    const d = Math.hypot(s.x - sx, s.y - sy);
    if (d <= bestD) {
      bestD = d;
      best = i;
    }
  }
  return best;
}
