/** UI-side view state. Progress series are append-only; every rendered number
 * comes from service responses, never from client-side recomputation. */

import type { ProgressEvent, Recommendation } from "./types.js";

export interface SeriesPoint {
  t: number;
  incumbent: number;
  bound: number;
  gap: number;
}

export interface ProgressSeries {
  points: SeriesPoint[];
}

export function emptySeries(): ProgressSeries {
  return { points: [] };
}

/** Append a stream record, enforcing the service's monotonicity contract
 * (incumbent never rises, bound never falls) so chart glitches from
 * out-of-order delivery are impossible. */
export function appendProgress(series: ProgressSeries, ev: ProgressEvent): ProgressSeries {
  const last = series.points[series.points.length - 1];
  const point: SeriesPoint = {
    t: ev.elapsed_ms,
    incumbent: last ? Math.min(last.incumbent, ev.incumbent) : ev.incumbent,
    bound: last ? Math.max(last.bound, ev.lower_bound) : ev.lower_bound,
    gap: ev.gap,
  };
  return { points: [...series.points, point] };
}

export function gapBadge(rec: Pick<Recommendation, "status" | "gap">): string {
  if (rec.status === "OPTIMAL") return "optimal";
  const pct = (rec.gap * 100).toFixed(1);
  return `within ${pct}% of optimal`;
}

export function formatBytes(n: number): string {
  if (n >= 1 << 30) return (n / (1 << 30)).toFixed(1) + " GiB";
  if (n >= 1 << 20) return (n / (1 << 20)).toFixed(1) + " MiB";
  if (n >= 1 << 10) return (n / (1 << 10)).toFixed(1) + " KiB";
  return n.toFixed(0) + " B";
}

export function formatCost(n: number): string {
  if (!isFinite(n)) return "-";
  if (Math.abs(n) >= 1e6 || (Math.abs(n) < 1e-3 && n !== 0)) return n.toExponential(3);
  return n.toLocaleString("en-US", { maximumFractionDigits: 2 });
}

/** Candidate include/exclude toggles for the delta panel. */
export interface CandidateToggles {
  excluded: Set<string>;
}

export function toggleCandidate(t: CandidateToggles, id: string): CandidateToggles {
  const excluded = new Set(t.excluded);
  if (excluded.has(id)) excluded.delete(id);
  else excluded.add(id);
  return { excluded };
}
