/** Hand-rolled SVG line charts: small, dependency-free, gap-aware. */

import type { MetricsRow } from "./types.js";

export interface ChartSpec {
  title: string;
  metric: (row: MetricsRow) => number | null;
}

export const CHART_SPECS: ChartSpec[] = [
  { title: "Processed requests", metric: (r) => r.processed },
  { title: "Unprocessed requests", metric: (r) => r.unprocessed },
  { title: "Successful requests", metric: (r) => r.success },
  { title: "Failed requests", metric: (r) => r.failed },
  { title: "Latency (s)", metric: (r) => r.latency_s },
  { title: "Efficiency", metric: (r) => r.efficiency },
];

export interface Point {
  x: number;
  y: number | null; // null = break in the line (gap or undefined value)
}

export function seriesPoints(
  rows: (MetricsRow | null)[],
  metric: (row: MetricsRow) => number | null,
): Point[] {
  return rows.map((row) => (row === null ? { x: NaN, y: null } : { x: row.t_min, y: metric(row) }));
}

export function linearScale(d0: number, d1: number, r0: number, r1: number): (v: number) => number {
  const span = d1 - d0;
  if (span === 0) return () => (r0 + r1) / 2;
  return (v: number) => r0 + ((v - d0) / span) * (r1 - r0);
}

/** Build an SVG path, starting a new subpath after every null point. */
export function pathFor(
  points: Point[],
  xScale: (v: number) => number,
  yScale: (v: number) => number,
): string {
  let d = "";
  let pen = false;
  for (const point of points) {
    if (point.y === null || Number.isNaN(point.x)) {
      pen = false;
      continue;
    }
    const x = xScale(point.x).toFixed(1);
    const y = yScale(point.y).toFixed(1);
    d += `${pen ? "L" : "M"}${x},${y}`;
    pen = true;
  }
  return d;
}

export interface ChartDims {
  width: number;
  height: number;
  pad: number;
}

const DIMS: ChartDims = { width: 280, height: 120, pad: 24 };

export function chartSvg(title: string, points: Point[], dims: ChartDims = DIMS): string {
  const xs = points.filter((p) => p.y !== null && !Number.isNaN(p.x)).map((p) => p.x);
  const ys = points.filter((p) => p.y !== null).map((p) => p.y as number);
  const x0 = xs.length ? Math.min(...xs) : 0;
  const x1 = xs.length ? Math.max(...xs) : 1;
  const y1 = ys.length ? Math.max(...ys, 1) : 1;
  const xScale = linearScale(x0, x1 === x0 ? x0 + 1 : x1, dims.pad, dims.width - 6);
  const yScale = linearScale(0, y1, dims.height - 16, 8);
  const path = pathFor(points, xScale, yScale);
  const last = [...ys].pop();
  const lastText = last === undefined ? "–" : trimNumber(last);
  return (
    `<svg viewBox="0 0 ${dims.width} ${dims.height}" class="chart" role="img" aria-label="${title}">` +
    `<text x="6" y="12" class="chart-title">${title}</text>` +
    `<text x="${dims.width - 6}" y="12" text-anchor="end" class="chart-value">${lastText}</text>` +
    `<line x1="${dims.pad}" y1="${dims.height - 16}" x2="${dims.width - 6}" y2="${dims.height - 16}" class="chart-axis"/>` +
    `<text x="6" y="${dims.height - 18}" class="chart-tick">${trimNumber(y1)}</text>` +
    `<path d="${path}" class="chart-line" fill="none"/>` +
    `</svg>`
  );
}

export function trimNumber(v: number): string {
  if (!Number.isFinite(v)) return "∞";
  return Number.isInteger(v) ? String(v) : v.toFixed(2);
}

/** Efficiency is "absent" when nothing has failed; render as infinity. */
export function efficiencyText(value: number | null): string {
  return value === null ? "∞" : trimNumber(value);
}
