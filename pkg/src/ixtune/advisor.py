"""Tuning sessions: the full pipeline wired together, with incremental deltas.

A session parses its inputs once, generates candidates, freezes per-statement
template caches, compiles constraints and builds the integer program. Solves
are serialized per session; deltas (candidate or constraint changes, weight
changes) extend the caches in place and warm-start the solver instead of
rebuilding anything.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass

from . import bipmodel, candgen, inum, solver, whatif
from .bipmodel import BipDelta, BipProblem, CompileContext, ConstraintAst
from .candgen import CandidateSet, candidates_from_document
from .catalog import Catalog, IndexCandidate, load_catalog, make_candidate
from .errors import SessionBusy, StaleState, UnknownCandidate
from .inum import TemplatePlanSet
from .queryparse import Workload, parse_workload
from .solver import SolverOptions, SolverState, Solution
from .whatif import PlanCache, UpdateCostTable


@dataclass
class Problem:
    """Everything recommend() needs, independent of session bookkeeping."""

    catalog: Catalog
    workload: Workload
    candidates: CandidateSet
    plan_cache: PlanCache
    baseline: list[IndexCandidate]  # clustered first-column index per table
    basecosts: dict[str, float]
    caches: dict[str, TemplatePlanSet]
    update_table: UpdateCostTable
    asts: list[ConstraintAst]
    bip: BipProblem

    def compile_context(self) -> CompileContext:
        return CompileContext(
            candidates=self.candidates.all(),
            catalog=self.catalog,
            basecosts=self.basecosts,
            statement_ids=[st.query.id for st in self.workload.statements],
            read_ids={st.query.id for st in self.workload.read_statements()},
            update_rows=dict(self.update_table.ucost),
            update_base=dict(self.update_table.base),
            update_targets=dict(self.update_table.targets),
        )


def baseline_configuration(cat: Catalog) -> list[IndexCandidate]:
    """One clustered index per table on its first column (synthetic primary key)."""
    out = []
    for t in cat.tables:
        if t.columns:
            out.append(make_candidate(t.name, [t.columns[0].name], cat, clustered=True))
    return out


def build_problem(
    cat: Catalog,
    workload: Workload,
    candidates: CandidateSet,
    constraint_text: str = "",
    asts: list[ConstraintAst] | None = None,
) -> Problem:
    plan_cache = PlanCache(cat)
    baseline = baseline_configuration(cat)
    basecosts = {
        st.query.id: plan_cache.cost(st.query, baseline) for st in workload.statements
    }
    cand_list = candidates.all()
    caches = {
        st.query.id: inum.build_templates(
            st.query, cand_list, cat, plans=plan_cache.plans(st.query)
        )
        for st in workload.read_statements()
    }
    update_table = whatif.build_update_cost_table(workload, cand_list, cat)
    if asts is None:
        asts = bipmodel.parse_constraints(constraint_text)
    problem = Problem(
        catalog=cat,
        workload=workload,
        candidates=candidates,
        plan_cache=plan_cache,
        baseline=baseline,
        basecosts=basecosts,
        caches=caches,
        update_table=update_table,
        asts=asts,
        bip=None,  # filled below
    )
    ctx = problem.compile_context()
    hard = []
    for ast in asts:
        if not ast.soft:
            hard.extend(bipmodel.compile_constraint(ast, ctx))
    soft = bipmodel.build_soft_terms(asts, ctx)
    problem.bip = bipmodel.build_bip(
        workload, candidates, caches, update_table, hard, soft
    )
    return problem


@dataclass
class Recommendation:
    indexes: list[dict]
    objective: float
    lower_bound: float
    gap: float
    status: str
    nodes_explored: int
    elapsed_ms: float
    per_query: list[dict]
    total_baseline: float
    total_recommended: float
    perf: float
    constraint_report: list[dict]
    stats: dict

    def to_dict(self) -> dict:
        return {
            "indexes": self.indexes,
            "objective": self.objective,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "status": self.status,
            "nodes_explored": self.nodes_explored,
            "elapsed_ms": self.elapsed_ms,
            "per_query": self.per_query,
            "total_baseline": self.total_baseline,
            "total_recommended": self.total_recommended,
            "perf": self.perf,
            "constraint_report": self.constraint_report,
            "stats": self.stats,
        }


class Session:
    """A long-lived tuning session; operations are serialized per session."""

    def __init__(self, problem: Problem, session_id: str | None = None):
        self.id = session_id or uuid.uuid4().hex[:12]
        self.problem = problem
        self.state = SolverState(problem.bip)
        self.history: list[dict] = []
        self.last_recommendation: Recommendation | None = None
        self._busy = threading.Lock()
        self._constraint_counter = len(problem.asts)

    def stats(self) -> dict:
        bip = self.problem.bip
        counts = bip.structural_counts()
        return {
            "statements": len(self.problem.workload.statements),
            "candidates": len(self.problem.candidates),
            "templates": bip.num_y,
            "variables": bip.num_variables,
            "variables_z": bip.num_z,
            "variables_y": bip.num_y,
            "variables_x": bip.num_x,
            "structural_constraints": sum(counts.values()),
            "user_constraints": len(bip.constraints),
        }

    def _acquire(self):
        if not self._busy.acquire(blocking=False):
            raise SessionBusy(f"session {self.id} is already solving")


def create_session(
    catalog_doc: dict,
    workload_text: str,
    constraints_text: str = "",
    dba_candidates: list[dict] | None = None,
    session_id: str | None = None,
) -> Session:
    cat = load_catalog(catalog_doc)
    workload = parse_workload(workload_text, cat)
    dba = candidates_from_document(dba_candidates or [], cat)
    candidates = candgen.generate_candidates(workload, cat, dba)
    problem = build_problem(cat, workload, candidates, constraints_text)
    session = Session(problem, session_id)
    session._source = {
        "catalog": catalog_doc,
        "workload": workload_text,
        "constraints": constraints_text,
        "dba_candidates": dba_candidates or [],
    }
    return session


def recommend(session: Session, options: SolverOptions | None = None) -> Recommendation:
    session._acquire()
    try:
        solution = solver.solve(session.problem.bip, options, state=session.state)
        rec = _recommendation(session, solution)
        session.last_recommendation = rec
        return rec
    finally:
        session._busy.release()


def apply_delta(
    session: Session,
    delta_doc: dict,
    options: SolverOptions | None = None,
) -> Recommendation:
    session._acquire()
    try:
        delta = _prepare_delta(session, delta_doc)
        solution = solver.resolve_delta(session.state, delta, options)
        session.problem.bip = session.state.bip
        session.history.append(delta_doc)
        rec = _recommendation(session, solution)
        session.last_recommendation = rec
        return rec
    finally:
        session._busy.release()


def _prepare_delta(session: Session, doc: dict) -> BipDelta:
    problem = session.problem
    cat = problem.catalog

    removals = list(doc.get("remove_candidates", []))
    for aid in removals:
        if aid not in problem.candidates:
            raise UnknownCandidate(f"cannot remove unknown candidate {aid!r}")

    added: list[IndexCandidate] = []
    for entry in doc.get("add_candidates", []):
        cand = make_candidate(
            entry["table"],
            entry["key"],
            cat,
            include_columns=entry.get("include", ()),
            clustered=bool(entry.get("clustered", False)),
        )
        if cand.id not in problem.candidates and cand.id not in {a.id for a in added}:
            added.append(cand)

    weight_changes = {}
    for qid, value in (doc.get("set_weights") or {}).items():
        try:
            problem.workload.statement(qid)
        except KeyError:
            raise StaleState(f"weight change references unknown statement {qid!r}") from None
        if float(value) <= 0:
            raise StaleState(f"weight for {qid!r} must be positive")
        weight_changes[qid] = float(value)

    # mutate the session's caches and candidate set: extend, never rebuild
    for aid in removals:
        problem.candidates.remove(aid)
    for cand in added:
        problem.candidates.add(cand, "delta")
    for tps in problem.caches.values():
        if removals:
            tps.remove(removals)
        if added:
            tps.extend(added, cat)
    if removals:
        problem.update_table.remove_candidates(removals)
    add_ucost: dict[tuple[str, str], float] = {}
    if added:
        before = set(problem.update_table.ucost)
        problem.update_table.extend_candidates(problem.workload, added, cat)
        add_ucost = {
            k: v for k, v in problem.update_table.ucost.items() if k not in before
        }

    raw_lines = doc.get("add_constraints") or []
    if isinstance(raw_lines, str):
        raw_lines = [raw_lines]
    new_asts: list[ConstraintAst] = []
    for line in raw_lines:
        parsed = bipmodel.parse_constraints(line)
        for ast in parsed:
            session._constraint_counter += 1
            cid = f"c{session._constraint_counter}"
            new_asts.append(
                ConstraintAst(
                    cid=cid, text=ast.text, soft=ast.soft, kind=ast.kind,
                    aggregate=ast.aggregate, term=ast.term, filters=ast.filters,
                    cmp=ast.cmp, bound=ast.bound, domain=ast.domain,
                    loop_var=ast.loop_var, body=ast.body,
                    query_ref=ast.query_ref, factor=ast.factor,
                )
            )
    removed_tags = list(doc.get("remove_constraints", []))
    if removed_tags:
        problem.asts = [a for a in problem.asts if a.cid not in removed_tags]

    ctx = problem.compile_context()
    add_constraints = []
    for ast in new_asts:
        problem.asts.append(ast)
        if not ast.soft:
            add_constraints.extend(bipmodel.compile_constraint(ast, ctx))
    if any(ast.soft for ast in new_asts):
        problem.bip.soft_terms.extend(
            bipmodel.build_soft_terms([a for a in new_asts if a.soft], ctx)
        )

    if weight_changes:
        for qid, value in weight_changes.items():
            problem.workload = problem.workload.with_weight(qid, value)

    return BipDelta(
        add_candidates=added,
        remove_candidates=removals,
        add_constraints=add_constraints,
        remove_constraints=removed_tags,
        weight_changes=weight_changes,
        add_ucost=add_ucost,
    )


def whatif_report(session: Session, candidate_ids: list[str]) -> dict:
    problem = session.problem
    config = []
    for aid in candidate_ids:
        if aid not in problem.candidates:
            raise UnknownCandidate(f"unknown candidate {aid!r}")
        config.append(problem.candidates.by_id[aid])
    merged = _merge_with_baseline(problem, config)
    rows = []
    total_base = total_what = 0.0
    for st in problem.workload.statements:
        base = problem.basecosts[st.query.id]
        what = problem.plan_cache.cost(st.query, merged)
        rows.append({
            "id": st.query.id,
            "kind": st.query.kind,
            "weight": st.weight,
            "cost_baseline": base,
            "cost_whatif": what,
        })
        total_base += st.weight * base
        total_what += st.weight * what
    return {"rows": rows, "total_baseline": total_base, "total_whatif": total_what}


def _merge_with_baseline(problem: Problem, config) -> list[IndexCandidate]:
    seen = {}
    for a in list(config) + problem.baseline:
        seen.setdefault(a.id, a)
    return [seen[k] for k in sorted(seen)]


def _recommendation(session: Session, solution: Solution) -> Recommendation:
    problem = session.problem
    chosen = [problem.candidates.by_id[aid] for aid in solution.selected]
    merged = _merge_with_baseline(problem, chosen)

    per_query = []
    total_base = total_rec = 0.0
    for st in problem.workload.statements:
        base = problem.basecosts[st.query.id]
        after = problem.plan_cache.cost(st.query, merged)
        per_query.append({
            "id": st.query.id,
            "kind": st.query.kind,
            "weight": st.weight,
            "cost_baseline": base,
            "cost_recommended": after,
        })
        total_base += st.weight * base
        total_rec += st.weight * after
    perf = 0.0 if total_base <= 0 else 1.0 - total_rec / total_base

    report = []
    for lc in problem.bip.constraints:
        report.append({
            "origin": lc.origin,
            "satisfied": bipmodel.constraint_satisfied(problem.bip, lc, solution.selected),
        })

    return Recommendation(
        indexes=[
            {
                "id": a.id,
                "table": a.table,
                "key": list(a.key_columns),
                "include": list(a.include_columns),
                "clustered": a.clustered,
                "size_bytes": a.size_bytes,
            }
            for a in chosen
        ],
        objective=solution.objective,
        lower_bound=solution.lower_bound,
        gap=solution.gap,
        status=solution.status.value,
        nodes_explored=solution.nodes_explored,
        elapsed_ms=solution.elapsed_ms,
        per_query=per_query,
        total_baseline=total_base,
        total_recommended=total_rec,
        perf=perf,
        constraint_report=report,
        stats=session.stats(),
    )


def export_snapshot(session: Session) -> dict:
    return {
        "session_id": session.id,
        "source": session._source,
        "history": session.history,
    }


def import_snapshot(doc: dict) -> Session:
    src = doc["source"]
    session = create_session(
        src["catalog"], src["workload"], src.get("constraints", ""),
        src.get("dba_candidates"), session_id=doc.get("session_id"),
    )
    for delta_doc in doc.get("history", []):
        apply_delta(session, delta_doc)
    return session


def run_pareto(
    session: Session,
    epsilon: float,
    max_points: int = 32,
    options: SolverOptions | None = None,
):
    from . import pareto

    session._acquire()
    try:
        return pareto.chord(
            session.problem.bip,
            session.problem.bip.soft_terms,
            epsilon,
            max_points,
            options,
            state=session.state,
        )
    finally:
        session._busy.release()
