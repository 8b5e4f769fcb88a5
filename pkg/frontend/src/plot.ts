/** Canvas rendering of the GPS track with hover and click picking. */

import type { GpsFix } from "./api.js";
import { Projected, Viewport, fitViewport, nearestIndex, projectTrack, toScreen } from "./geo.js";

export interface TrackPlot {
  draw(selected: number | null, first: number | null, last: number | null): void;
  pick(sx: number, sy: number): number | null;
  readonly fixes: GpsFix[];
}

export function createTrackPlot(canvas: HTMLCanvasElement, fixes: GpsFix[]): TrackPlot {
  const projected: Projected = projectTrack(fixes);
  const viewport: Viewport = fitViewport(projected.points, canvas.width, canvas.height);
  const ctx = canvas.getContext("2d");
  // fixes carry global frame numbers, which is what the draft stores
  const byFrame = new Map<number, number>();
  fixes.forEach((f, i) => byFrame.set(f.frame_index, i));

  function draw(selected: number | null, first: number | null, last: number | null): void {
    if (!ctx) return;
    const lo = first !== null && last !== null ? Math.min(first, last) : null;
    const hi = first !== null && last !== null ? Math.max(first, last) : null;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "#b9c4d0";
    ctx.lineWidth = 1;
    ctx.beginPath();
    projected.points.forEach((p, i) => {
      const s = toScreen(p, viewport);
      if (i === 0) ctx.moveTo(s.x, s.y);
      else ctx.lineTo(s.x, s.y);
    });
    ctx.stroke();
    projected.points.forEach((p, i) => {
      const s = toScreen(p, viewport);
      const frame = fixes[i].frame_index;
      const inRange = lo !== null && hi !== null && frame >= lo && frame <= hi;
      ctx.fillStyle = frame === selected ? "#d4380d" : inRange ? "#1677ff" : "#5a6b7b";
      ctx.beginPath();
      ctx.arc(s.x, s.y, frame === selected ? 5 : 3, 0, 2 * Math.PI);
      ctx.fill();
    });
    if (first !== null) ring(first, "#52c41a");
    if (last !== null) ring(last, "#faad14");
  }

  function ring(frame: number, color: string): void {
    const index = byFrame.get(frame);
    if (!ctx || index === undefined) return;
    const s = toScreen(projected.points[index], viewport);
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(s.x, s.y, 8, 0, 2 * Math.PI);
    ctx.stroke();
  }

  function pick(sx: number, sy: number): number | null {
    return nearestIndex(projected.points, viewport, sx, sy);
  }

  return { draw, pick, fixes };
}
