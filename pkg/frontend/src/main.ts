/** Interactive tuning console: create sessions, watch the live gap, stop
 * early, re-tune with deltas, and explore the soft-constraint trade-off. */

import { AdvisorClient, ServiceError } from "./api.js";
import { paretoChart, progressChart, ScatterPoint } from "./charts.js";
import {
  CandidateToggles,
  ProgressSeries,
  appendProgress,
  emptySeries,
  formatBytes,
  formatCost,
  gapBadge,
  toggleCandidate,
} from "./state.js";
import type { IndexInfo, ParetoPoint, Recommendation } from "./types.js";

const SAMPLE_CATALOG = `{
  "page_size": 4096,
  "tables": [
    {"name": "T1", "row_count": 10000, "columns": [
      {"name": "c1", "width": 4, "distinct": 100},
      {"name": "c2", "width": 8, "distinct": 1000},
      {"name": "c3", "width": 4, "distinct": 10}]},
    {"name": "T2", "row_count": 1000, "columns": [
      {"name": "d1", "width": 4, "distinct": 100},
      {"name": "d2", "width": 8, "distinct": 50}]}
  ],
  "join_selectivities": [{"left": "T1.c1", "right": "T2.d1", "sel": 0.01}]
}`;

const SAMPLE_WORKLOAD = `Q1 | 1.0 | SELECT c2 FROM T1 WHERE c1 = 5
Q2 | 2.0 | SELECT T1.c2, T2.d2 FROM T1, T2 WHERE T1.c1 = T2.d1 AND c3 = 2
Q3 | 1.0 | SELECT c1 FROM T1 WHERE c2 > 3 ORDER BY c1
U1 | 0.5 | UPDATE T1 SET c2 = 0 WHERE c1 = 5`;

const SAMPLE_CONSTRAINTS = `ASSERT SUM(SIZE) <= 400000
SOFT ASSERT SUM(SIZE) <= 0`;

interface AppState {
  client: AdvisorClient;
  sessionId: string | null;
  series: ProgressSeries;
  solving: boolean;
  recommendation: Recommendation | null;
  previousObjective: number | null;
  candidates: IndexInfo[];
  toggles: CandidateToggles;
  paretoPoints: ParetoPoint[];
  whatifSelection: Set<string>;
}

const state: AppState = {
  client: new AdvisorClient(""),
  sessionId: null,
  series: emptySeries(),
  solving: false,
  recommendation: null,
  previousObjective: null,
  candidates: [],
  toggles: { excluded: new Set() },
  paretoPoints: [],
  whatifSelection: new Set(),
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string, isError = false) {
  const bar = el<HTMLDivElement>("status");
  bar.textContent = text;
  bar.className = isError ? "status error" : "status";
}

function describeError(err: unknown): string {
  if (err instanceof ServiceError) {
    const body = err.body as { module?: string; report?: string[] } | null;
    let msg = err.message;
    if (body?.module) msg = `[${body.module}] ${msg}`;
    if (body?.report?.length) msg += ` (conflicting: ${body.report.join(", ")})`;
    return msg;
  }
  return String(err);
}

async function createSession() {
  try {
    const catalog = JSON.parse(el<HTMLTextAreaElement>("catalog-input").value);
    const workload = el<HTMLTextAreaElement>("workload-input").value;
    const constraints = el<HTMLTextAreaElement>("constraints-input").value;
    setStatus("creating session…");
    const created = await state.client.createSession({ catalog, workload, constraints });
    state.sessionId = created.session_id;
    state.series = emptySeries();
    state.recommendation = null;
    state.previousObjective = null;
    state.paretoPoints = [];
    state.whatifSelection = new Set();
    state.toggles = { excluded: new Set() };
    el<HTMLDivElement>("session-banner").textContent =
      `session ${created.session_id} — ${created.stats.statements} statements, ` +
      `${created.stats.candidates} candidates, ${created.stats.variables} variables`;
    setStatus("session ready");
    await refreshCandidates();
    render();
  } catch (err) {
    setStatus(describeError(err), true);
  }
}

async function refreshCandidates() {
  if (!state.sessionId) return;
  state.candidates = await state.client.candidates(state.sessionId);
}

async function startSolve() {
  if (!state.sessionId || state.solving) return;
  const gap = parseFloat(el<HTMLInputElement>("gap-input").value) || 0.05;
  state.solving = true;
  state.series = emptySeries();
  render();
  setStatus("solving…");
  try {
    const rec = await state.client.solve(state.sessionId, { gap }, (ev) => {
      if (ev.type === "progress") {
        state.series = appendProgress(state.series, ev);
        renderChart();
      }
    });
    if (rec) {
      state.previousObjective = state.recommendation?.objective ?? null;
      state.recommendation = rec;
    }
    setStatus("solve finished");
  } catch (err) {
    setStatus(describeError(err), true);
  } finally {
    state.solving = false;
    render();
  }
}

async function stopSolve() {
  if (!state.sessionId) return;
  try {
    await state.client.stop(state.sessionId);
    setStatus("stop requested — returning best incumbent");
  } catch (err) {
    setStatus(describeError(err), true);
  }
}

async function applyExclusions() {
  if (!state.sessionId) return;
  const remove = [...state.toggles.excluded];
  if (remove.length === 0) {
    setStatus("no candidates excluded; nothing to apply");
    return;
  }
  await runDelta({ remove_candidates: remove });
  state.toggles = { excluded: new Set() };
  await refreshCandidates();
  render();
}

async function addConstraint() {
  const line = el<HTMLInputElement>("constraint-line").value.trim();
  if (!state.sessionId || !line) return;
  await runDelta({ add_constraints: [line] });
  el<HTMLInputElement>("constraint-line").value = "";
}

async function runDelta(body: Parameters<AdvisorClient["delta"]>[1]) {
  if (!state.sessionId) return;
  try {
    setStatus("re-solving with delta…");
    const rec = await state.client.delta(state.sessionId, body);
    state.previousObjective = state.recommendation?.objective ?? null;
    state.recommendation = rec;
    setStatus("delta applied");
    render();
  } catch (err) {
    setStatus(describeError(err), true);
  }
}

async function runPareto() {
  if (!state.sessionId) return;
  const epsilon = parseFloat(el<HTMLInputElement>("epsilon-input").value) || 0.05;
  try {
    setStatus("tracing trade-off curve…");
    state.paretoPoints = await state.client.pareto(state.sessionId, { epsilon });
    setStatus(`trade-off curve: ${state.paretoPoints.length} points`);
    render();
  } catch (err) {
    setStatus(describeError(err), true);
  }
}

async function runWhatif() {
  if (!state.sessionId) return;
  try {
    const report = await state.client.whatif(state.sessionId, [...state.whatifSelection]);
    const rows = report.rows
      .map(
        (r) =>
          `<tr><td>${r.id}</td><td>${r.kind}</td><td>${r.weight}</td>` +
          `<td>${formatCost(r.cost_baseline)}</td><td>${formatCost(r.cost_whatif ?? NaN)}</td></tr>`,
      )
      .join("");
    el<HTMLDivElement>("whatif-table").innerHTML =
      `<table><thead><tr><th>statement</th><th>kind</th><th>weight</th>` +
      `<th>baseline</th><th>with selection</th></tr></thead><tbody>${rows}</tbody>` +
      `<tfoot><tr><td colspan="3">weighted total</td>` +
      `<td>${formatCost(report.total_baseline)}</td><td>${formatCost(report.total_whatif)}</td></tr></tfoot></table>`;
  } catch (err) {
    setStatus(describeError(err), true);
  }
}

function renderChart() {
  el<HTMLDivElement>("chart-box").innerHTML = progressChart(state.series);
  const last = state.series.points[state.series.points.length - 1];
  el<HTMLDivElement>("live-gap").textContent = last
    ? `incumbent ${formatCost(last.incumbent)} · bound ${formatCost(last.bound)} · gap ${(last.gap * 100).toFixed(2)}%`
    : "";
}

function renderRecommendation() {
  const box = el<HTMLDivElement>("recommendation");
  const rec = state.recommendation;
  if (!rec) {
    box.innerHTML = `<p class="hint">no recommendation yet — run a solve</p>`;
    return;
  }
  const badge = `<span class="badge ${rec.status === "OPTIMAL" ? "ok" : "warn"}">${gapBadge(rec)}</span>`;
  const delta =
    state.previousObjective !== null && state.previousObjective !== rec.objective
      ? `<p>objective ${formatCost(state.previousObjective)} → <strong>${formatCost(rec.objective)}</strong></p>`
      : `<p>objective <strong>${formatCost(rec.objective)}</strong></p>`;
  const indexRows = rec.indexes
    .map(
      (ix) =>
        `<tr><td><code>${ix.table}(${ix.key.join(", ")})` +
        `${ix.include.length ? ` incl (${ix.include.join(", ")})` : ""}` +
        `${ix.clustered ? " · clustered" : ""}</code></td><td>${formatBytes(ix.size_bytes)}</td></tr>`,
    )
    .join("");
  const queryRows = rec.per_query
    .map(
      (r) =>
        `<tr><td>${r.id}</td><td>${formatCost(r.cost_baseline)}</td>` +
        `<td>${formatCost(r.cost_recommended ?? NaN)}</td></tr>`,
    )
    .join("");
  const constraints = rec.constraint_report
    .map((c) => `<li class="${c.satisfied ? "ok" : "violated"}">${c.origin}</li>`)
    .join("");
  box.innerHTML = `
    <h3>recommendation ${badge}</h3>
    ${delta}
    <p>workload cost ${formatCost(rec.total_baseline)} → ${formatCost(rec.total_recommended)}
       (<strong>${(rec.perf * 100).toFixed(1)}%</strong> improvement) ·
       ${rec.nodes_explored} nodes · ${rec.elapsed_ms.toFixed(0)}ms</p>
    <table><thead><tr><th>index</th><th>size</th></tr></thead><tbody>${
      indexRows || `<tr><td colspan="2">no indexes selected</td></tr>`
    }</tbody></table>
    <details><summary>per-statement costs</summary>
      <table><thead><tr><th>statement</th><th>baseline</th><th>recommended</th></tr></thead>
      <tbody>${queryRows}</tbody></table></details>
    <details><summary>constraints</summary><ul>${constraints || "<li>none</li>"}</ul></details>`;
}

function renderCandidates() {
  const box = el<HTMLDivElement>("candidate-list");
  if (!state.candidates.length) {
    box.innerHTML = `<p class="hint">create a session to list candidates</p>`;
    return;
  }
  const rows = state.candidates
    .map((ix) => {
      const excluded = state.toggles.excluded.has(ix.id);
      const checkedWhatif = state.whatifSelection.has(ix.id) ? "checked" : "";
      return (
        `<tr class="${excluded ? "excluded" : ""}">` +
        `<td><input type="checkbox" data-role="exclude" data-id="${ix.id}" ${excluded ? "checked" : ""}></td>` +
        `<td><input type="checkbox" data-role="whatif" data-id="${ix.id}" ${checkedWhatif}></td>` +
        `<td><code>${ix.table}(${ix.key.join(", ")})` +
        `${ix.include.length ? ` incl (${ix.include.join(", ")})` : ""}` +
        `${ix.clustered ? " · clustered" : ""}</code></td>` +
        `<td>${formatBytes(ix.size_bytes)}</td><td>${ix.provenance ?? ""}</td></tr>`
      );
    })
    .join("");
  box.innerHTML =
    `<table><thead><tr><th>exclude</th><th>what-if</th><th>index</th><th>size</th><th>source</th></tr></thead>` +
    `<tbody>${rows}</tbody></table>`;
  box.querySelectorAll<HTMLInputElement>("input[data-role]").forEach((input) => {
    input.addEventListener("change", () => {
      const id = input.dataset.id!;
      if (input.dataset.role === "exclude") {
        state.toggles = toggleCandidate(state.toggles, id);
      } else {
        if (state.whatifSelection.has(id)) state.whatifSelection.delete(id);
        else state.whatifSelection.add(id);
      }
    });
  });
}

function renderPareto() {
  const pts: ScatterPoint[] = state.paretoPoints.map((p, i) => ({
    x: p.objectives[1] ?? 0,
    y: p.objectives[0],
    label: `cost ${formatCost(p.objectives[0])}, violation ${formatCost(p.objectives[1] ?? 0)}`,
    index: i,
  }));
  const box = el<HTMLDivElement>("pareto-box");
  box.innerHTML = paretoChart(pts);
  box.querySelectorAll<SVGCircleElement>(".pareto-dot").forEach((dot) => {
    dot.addEventListener("click", () => {
      const p = state.paretoPoints[Number(dot.dataset.index)];
      const detail = el<HTMLDivElement>("pareto-detail");
      const ids = p.indexes.length
        ? p.indexes.map((id) => `<code>${describeIndex(id)}</code>`).join(", ")
        : "no indexes";
      detail.innerHTML =
        `<p>λ = [${p.lambda.map((v) => v.toFixed(3)).join(", ")}] · ` +
        `objectives [${p.objectives.map(formatCost).join(", ")}] · ` +
        `${p.solve_ms.toFixed(0)}ms</p><p>${ids}</p>`;
    });
  });
}

function describeIndex(id: string): string {
  const ix = state.candidates.find((c) => c.id === id);
  if (!ix) return id;
  return `${ix.table}(${ix.key.join(", ")})${ix.include.length ? ` incl (${ix.include.join(", ")})` : ""}`;
}

function render() {
  el<HTMLButtonElement>("solve-btn").disabled = !state.sessionId || state.solving;
  el<HTMLButtonElement>("stop-btn").disabled = !state.solving;
  renderChart();
  renderRecommendation();
  renderCandidates();
  renderPareto();
}

export function boot() {
  el<HTMLTextAreaElement>("catalog-input").value = SAMPLE_CATALOG;
  el<HTMLTextAreaElement>("workload-input").value = SAMPLE_WORKLOAD;
  el<HTMLTextAreaElement>("constraints-input").value = SAMPLE_CONSTRAINTS;
  state.client = new AdvisorClient(el<HTMLInputElement>("service-url").value);
  el<HTMLInputElement>("service-url").addEventListener("change", (ev) => {
    state.client = new AdvisorClient((ev.target as HTMLInputElement).value.replace(/\/$/, ""));
  });
  el<HTMLButtonElement>("create-btn").addEventListener("click", createSession);
  el<HTMLButtonElement>("solve-btn").addEventListener("click", startSolve);
  el<HTMLButtonElement>("stop-btn").addEventListener("click", stopSolve);
  el<HTMLButtonElement>("apply-exclusions-btn").addEventListener("click", applyExclusions);
  el<HTMLButtonElement>("add-constraint-btn").addEventListener("click", addConstraint);
  el<HTMLButtonElement>("pareto-btn").addEventListener("click", runPareto);
  el<HTMLButtonElement>("whatif-btn").addEventListener("click", runWhatif);
  render();
}

if (typeof document !== "undefined" && document.getElementById("create-btn")) {
  boot();
}
