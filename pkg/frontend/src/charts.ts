/** Dependency-free SVG charts: a live incumbent/bound time series, and a
 * two-axis trade-off scatter. Pure string builders so they test without a DOM. */

import type { ProgressSeries } from "./state.js";

const W = 640;
const H = 280;
const PAD = 42;

interface Scale {
  (v: number): number;
}

function linearScale(min: number, max: number, outMin: number, outMax: number): Scale {
  const span = max - min || 1;
  return (v: number) => outMin + ((v - min) / span) * (outMax - outMin);
}

function polyline(xs: number[], ys: number[], cls: string, step = false): string {
  if (!xs.length) return "";
  const pts: string[] = [];
  for (let i = 0; i < xs.length; i++) {
    if (step && i > 0) pts.push(`${xs[i].toFixed(1)},${ys[i - 1].toFixed(1)}`);
    pts.push(`${xs[i].toFixed(1)},${ys[i].toFixed(1)}`);
  }
  return `<polyline class="${cls}" fill="none" points="${pts.join(" ")}"/>`;
}

/** Incumbent (stepping down) and lower bound (climbing) over elapsed time. */
export function progressChart(series: ProgressSeries): string {
  const pts = series.points;
  if (pts.length === 0) {
    return `<svg viewBox="0 0 ${W} ${H}" class="chart"><text x="20" y="40" class="hint">waiting for solver events</text></svg>`;
  }
  const tMax = Math.max(...pts.map((p) => p.t), 1);
  const values = pts.flatMap((p) => [p.incumbent, p.bound]).filter((v) => isFinite(v));
  const vMin = Math.min(...values);
  const vMax = Math.max(...values);
  const sx = linearScale(0, tMax, PAD, W - 10);
  const sy = linearScale(vMin, vMax, H - PAD, 14);
  const xs = pts.map((p) => sx(p.t));
  const parts = [
    `<svg viewBox="0 0 ${W} ${H}" class="chart">`,
    `<line x1="${PAD}" y1="${H - PAD}" x2="${W - 10}" y2="${H - PAD}" class="axis"/>`,
    `<line x1="${PAD}" y1="14" x2="${PAD}" y2="${H - PAD}" class="axis"/>`,
    polyline(xs, pts.map((p) => sy(p.incumbent)), "incumbent", true),
    polyline(xs, pts.map((p) => sy(p.bound)), "bound", true),
    `<text x="${PAD + 4}" y="24" class="legend incumbent-label">incumbent</text>`,
    `<text x="${PAD + 4}" y="40" class="legend bound-label">lower bound</text>`,
    `<text x="${W - 14}" y="${H - PAD + 16}" text-anchor="end" class="tick">${(tMax / 1000).toFixed(1)}s</text>`,
    `</svg>`,
  ];
  return parts.join("");
}

export interface ScatterPoint {
  x: number;
  y: number;
  label: string;
  index: number;
}

/** Trade-off scatter (violation on x, workload cost on y) with a connecting
 * chain; each dot carries its point index for click handling. */
export function paretoChart(points: ScatterPoint[]): string {
  if (points.length === 0) {
    return `<svg viewBox="0 0 ${W} ${H}" class="chart"><text x="20" y="40" class="hint">no trade-off points yet</text></svg>`;
  }
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const sx = linearScale(Math.min(...xs), Math.max(...xs), PAD, W - 16);
  const sy = linearScale(Math.min(...ys), Math.max(...ys), H - PAD, 16);
  const ordered = [...points].sort((a, b) => a.x - b.x);
  const parts = [
    `<svg viewBox="0 0 ${W} ${H}" class="chart">`,
    `<line x1="${PAD}" y1="${H - PAD}" x2="${W - 16}" y2="${H - PAD}" class="axis"/>`,
    `<line x1="${PAD}" y1="16" x2="${PAD}" y2="${H - PAD}" class="axis"/>`,
    polyline(ordered.map((p) => sx(p.x)), ordered.map((p) => sy(p.y)), "front"),
  ];
  for (const p of points) {
    parts.push(
      `<circle class="pareto-dot" data-index="${p.index}" cx="${sx(p.x).toFixed(1)}" ` +
        `cy="${sy(p.y).toFixed(1)}" r="6"><title>${p.label}</title></circle>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}
