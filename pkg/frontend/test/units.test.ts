import { describe, expect, it } from "vitest";

import { parseSseChunk } from "../src/api.js";
import { paretoChart, progressChart } from "../src/charts.js";
import {
  appendProgress,
  emptySeries,
  formatBytes,
  gapBadge,
  toggleCandidate,
} from "../src/state.js";
import type { ProgressEvent } from "../src/types.js";

function progress(over: Partial<ProgressEvent>): ProgressEvent {
  return {
    type: "progress",
    elapsed_ms: 1,
    incumbent: 100,
    lower_bound: 10,
    gap: 0.9,
    nodes_explored: 1,
    ...over,
  };
}

describe("sse parsing", () => {
  it("splits complete frames and keeps the tail", () => {
    const { events, rest } = parseSseChunk(
      'data: {"type":"progress","elapsed_ms":1,"incumbent":5,"lower_bound":1,"gap":0.8,"nodes_explored":1}\n\n' +
        'data: {"type":"recomm',
    );
    expect(events).toHaveLength(1);
    expect(events[0].type).toBe("progress");
    expect(rest).toContain("recomm");
  });

  it("handles several frames in one chunk", () => {
    const frame = (inc: number) =>
      `data: {"type":"progress","elapsed_ms":${inc},"incumbent":${inc},"lower_bound":0,"gap":1,"nodes_explored":1}\n\n`;
    const { events, rest } = parseSseChunk(frame(3) + frame(2) + frame(1));
    expect(events.map((e) => (e as ProgressEvent).incumbent)).toEqual([3, 2, 1]);
    expect(rest).toBe("");
  });
});

describe("progress series", () => {
  it("is append-only and monotone even with noisy input", () => {
    let series = emptySeries();
    series = appendProgress(series, progress({ incumbent: 100, lower_bound: 10 }));
    series = appendProgress(series, progress({ incumbent: 120, lower_bound: 5 }));
    series = appendProgress(series, progress({ incumbent: 80, lower_bound: 40 }));
    expect(series.points).toHaveLength(3);
    const incumbents = series.points.map((p) => p.incumbent);
    const bounds = series.points.map((p) => p.bound);
    expect(incumbents).toEqual([...incumbents].sort((a, b) => b - a));
    expect(bounds).toEqual([...bounds].sort((a, b) => a - b));
  });
});

describe("labels", () => {
  it("renders the early-termination badge from the gap", () => {
    expect(gapBadge({ status: "GAP_REACHED", gap: 0.05 })).toBe("within 5.0% of optimal");
    expect(gapBadge({ status: "OPTIMAL", gap: 0 })).toBe("optimal");
  });

  it("formats byte sizes", () => {
    expect(formatBytes(512)).toBe("512 B");
    expect(formatBytes(200000)).toBe("195.3 KiB");
  });
});

describe("candidate toggles", () => {
  it("flips exclusion on and off", () => {
    let t = { excluded: new Set<string>() };
    t = toggleCandidate(t, "a");
    expect(t.excluded.has("a")).toBe(true);
    t = toggleCandidate(t, "a");
    expect(t.excluded.has("a")).toBe(false);
  });
});

describe("charts", () => {
  it("draws both solver series", () => {
    let series = emptySeries();
    series = appendProgress(series, progress({ elapsed_ms: 1, incumbent: 90, lower_bound: 10 }));
    series = appendProgress(series, progress({ elapsed_ms: 5, incumbent: 70, lower_bound: 30 }));
    const svg = progressChart(series);
    expect(svg).toContain("incumbent");
    expect(svg).toContain("bound");
    expect(svg).toContain("<polyline");
  });

  it("renders one clickable dot per trade-off point", () => {
    const svg = paretoChart([
      { x: 0, y: 40, label: "a", index: 0 },
      { x: 200000, y: 24, label: "b", index: 1 },
    ]);
    expect(svg.match(/pareto-dot/g)).toHaveLength(2);
    expect(svg).toContain('data-index="0"');
    expect(svg).toContain('data-index="1"');
  });
});
