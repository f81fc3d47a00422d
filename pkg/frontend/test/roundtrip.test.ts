/** Live round-trip against the real service: create a session, solve with a
 * streamed chart series, stop an exact solve early at a 5% gap, re-solve with
 * a delta, and trace a trade-off curve with at least two selectable points. */

import { spawn, ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AdvisorClient } from "../src/api.js";
import { appendProgress, emptySeries, gapBadge } from "../src/state.js";
import type { ProgressEvent, Recommendation } from "../src/types.js";

const PORT = 7937;
const BASE = `http://127.0.0.1:${PORT}`;

const CATALOG = {
  page_size: 4096,
  tables: [
    {
      name: "T1",
      row_count: 10000,
      columns: [
        { name: "c1", width: 4, distinct: 100 },
        { name: "c2", width: 8, distinct: 1000 },
        { name: "c3", width: 4, distinct: 10 },
      ],
    },
    {
      name: "T2",
      row_count: 1000,
      columns: [
        { name: "d1", width: 4, distinct: 100 },
        { name: "d2", width: 8, distinct: 50 },
      ],
    },
  ],
  join_selectivities: [{ left: "T1.c1", right: "T2.d1", sel: 0.01 }],
};

const WORKLOAD = "Q1 | 1.0 | SELECT c2 FROM T1 WHERE c1 = 5\n";

let server: ChildProcess;
const client = new AdvisorClient(BASE);

async function waitForService(timeoutMs = 30000) {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      await fetch(`${BASE}/sessions/none/recommendation`);
      return;
    } catch {
      if (Date.now() > deadline) throw new Error("service did not come up");
      await new Promise((r) => setTimeout(r, 300));
    }
  }
}

beforeAll(async () => {
  server = spawn(
    "python3",
    [
      "-c",
      "from ixtune.service import create_app; import uvicorn; " +
        `uvicorn.run(create_app(), host='127.0.0.1', port=${PORT}, log_level='warning')`,
    ],
    { stdio: "ignore" },
  );
  await waitForService();
}, 40000);

afterAll(() => {
  server?.kill();
});

describe("console round trip against the live service", () => {
  it("creates, solves with a live chart, re-tunes and explores trade-offs", async () => {
    const created = await client.createSession({
      catalog: CATALOG,
      workload: WORKLOAD,
      constraints: "SOFT ASSERT SUM(SIZE) <= 0\n",
    });
    expect(created.stats.candidates).toBeGreaterThanOrEqual(3);
    const sid = created.session_id;

    // solve with the default 5% gap, accumulating the chart series
    let series = emptySeries();
    const rec = (await client.solve(sid, { gap: 0.05 }, (ev) => {
      if (ev.type === "progress") series = appendProgress(series, ev as ProgressEvent);
    })) as Recommendation;
    expect(rec).not.toBeNull();
    expect(series.points.length).toBeGreaterThan(0);
    expect(rec.gap).toBeLessThanOrEqual(0.05);
    expect(rec.objective).toBeCloseTo(24.0, 6);
    expect(rec.perf).toBeCloseTo(0.4, 6);
    const covering = rec.indexes.find(
      (ix) => ix.key.join(",") === "c1" && ix.include.join(",") === "c2",
    );
    expect(covering).toBeDefined();

    // the stored recommendation matches the final stream record
    const stored = await client.recommendation(sid);
    expect(stored.objective).toBe(rec.objective);

    // the gap badge communicates early-termination quality
    expect(["optimal", "within 0.0% of optimal"]).toContain(gapBadge(rec));

    // early stop: request the stop before starting an exact solve; the
    // solver returns its best incumbent labeled with the achieved gap
    await client.stop(sid);
    const stopped = (await client.solve(sid, { gap: 0.0 }, () => {})) as Recommendation;
    expect(stopped).not.toBeNull();
    expect(["OPTIMAL", "TIME_LIMIT", "GAP_REACHED"]).toContain(stopped.status);
    expect(typeof gapBadge(stopped)).toBe("string");

    // delta re-solve: a tighter storage budget forces the scan back
    const before = stopped.objective;
    const after = await client.delta(sid, { add_constraints: ["ASSERT SUM(SIZE) <= 100000"] });
    expect(after.objective).toBeGreaterThan(before);
    expect(after.indexes).toHaveLength(0);

    // what-if: cost an explicit candidate subset through the service
    const all = await client.candidates(sid);
    const coveringId = all.find((ix) => ix.key.join(",") === "c1" && ix.include.join(",") === "c2");
    const report = await client.whatif(sid, coveringId ? [coveringId.id] : []);
    expect(report.rows[0].cost_baseline).toBeCloseTo(40.0, 6);
    expect(report.rows[0].cost_whatif).toBeCloseTo(24.0, 6);

    // trade-off curve: at least two points, endpoints included
    await client.delta(sid, { remove_constraints: ["c2"] });
    const points = await client.pareto(sid, { epsilon: 0.05, max_points: 8 });
    expect(points.length).toBeGreaterThanOrEqual(2);
    const sizes = points.map((p) => p.objectives[1]);
    expect(Math.min(...sizes)).toBeCloseTo(0, 6);
    for (const p of points) {
      expect(Array.isArray(p.indexes)).toBe(true);
      expect(p.lambda).toHaveLength(2);
    }

    await client.deleteSession(sid);
  }, 60000);

  it("maps busy sessions and validation errors to HTTP statuses", async () => {
    const created = await client.createSession({ catalog: CATALOG, workload: WORKLOAD });
    const sid = created.session_id;
    await expect(client.delta(sid, { remove_candidates: ["missing"] })).rejects.toMatchObject({
      status: 400,
    });
    const resp = await fetch(`${BASE}/sessions/does-not-exist/recommendation`);
    expect(resp.status).toBe(404);
    await client.deleteSession(sid);
  }, 30000);
});
