"""Seeded synthetic instances and the solver-vs-oracle equivalence harness.

Instance generation is fully deterministic given the seed, so any failure
replays exactly. The harness drives the whole pipeline (parse, candidate
generation, template caches, program build, exact solve) and compares the
result against the exhaustive oracle.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

from . import advisor, bipmodel, bruteforce, candgen, solver
from .bruteforce import OracleContext
from .candgen import CandidateSet
from .catalog import Catalog, load_catalog, make_candidate
from .errors import InfeasibleProblem
from .queryparse import Workload, parse_workload
from .solver import SolverOptions

_WIDTHS = (4, 8, 16)


@dataclass
class Instance:
    seed: int
    catalog_doc: dict
    workload_text: str
    constraint_text: str
    dba_docs: list[dict] = field(default_factory=list)
    candidate_cap: int | None = None


def random_catalog_doc(rng: random.Random, max_tables: int = 4) -> dict:
    n_tables = rng.randint(1, max_tables) if max_tables > 1 else 1
    if max_tables >= 2 and n_tables == 1:
        n_tables = 2  # joins need a partner table most of the time
    tables = []
    for t in range(n_tables):
        rows = rng.choice((400, 1000, 4000, 20000))
        n_cols = rng.randint(3, 6)
        columns = []
        for c in range(n_cols):
            distinct = rng.choice((2, 5, 10, 50, 200, 1000))
            columns.append({
                "name": f"c{c}",
                "width": rng.choice(_WIDTHS),
                "distinct": min(distinct, rows),
            })
        tables.append({"name": f"T{t}", "row_count": rows, "columns": columns})
    doc = {"page_size": 4096, "tables": tables, "join_selectivities": []}
    for i in range(len(tables) - 1):
        if rng.random() < 0.7:
            left = f"T{i}.c0"
            right = f"T{i + 1}.c0"
            doc["join_selectivities"].append(
                {"left": left, "right": right, "sel": rng.choice((0.001, 0.01, 0.05))}
            )
    return doc


def random_workload_text(rng: random.Random, catalog_doc: dict, max_statements: int = 8) -> str:
    tables = catalog_doc["tables"]
    n = rng.randint(2, max_statements)
    lines = []
    for i in range(n):
        weight = rng.choice((0.5, 1.0, 2.0, 5.0))
        roll = rng.random()
        if roll < 0.25 and len(tables) >= 1:
            lines.append(f"U{i} | {weight} | {_random_update(rng, tables)}")
        elif roll < 0.55 or len(tables) < 2:
            lines.append(f"Q{i} | {weight} | {_random_single(rng, tables)}")
        else:
            lines.append(f"Q{i} | {weight} | {_random_join(rng, tables)}")
    return "\n".join(lines) + "\n"


def _cols(table):
    return [c["name"] for c in table["columns"]]


def _random_single(rng, tables) -> str:
    t = rng.choice(tables)
    cols = _cols(t)
    proj = rng.sample(cols, k=min(len(cols), rng.randint(1, 3)))
    preds = []
    for c in rng.sample(cols, k=min(len(cols), rng.randint(1, 2))):
        if rng.random() < 0.7:
            preds.append(f"{c} = {rng.randint(0, 50)}")
        else:
            preds.append(f"{c} > {rng.randint(0, 50)}")
    sql = f"SELECT {', '.join(proj)} FROM {t['name']}"
    if preds:
        sql += " WHERE " + " AND ".join(preds)
    if rng.random() < 0.35:
        sql += f" ORDER BY {rng.choice(cols)}"
    return sql


def _random_join(rng, tables) -> str:
    k = 3 if (len(tables) >= 3 and rng.random() < 0.2) else 2
    chosen = rng.sample(tables, k=k)
    names = [t["name"] for t in chosen]
    proj = []
    for t in chosen:
        proj.append(f"{t['name']}.{rng.choice(_cols(t))}")
    joins = []
    for a, b in zip(chosen, chosen[1:]):
        joins.append(f"{a['name']}.c0 = {b['name']}.c0")
    preds = list(joins)
    for t in chosen:
        if rng.random() < 0.7:
            c = rng.choice(_cols(t))
            preds.append(f"{t['name']}.{c} = {rng.randint(0, 50)}")
    sql = f"SELECT {', '.join(proj)} FROM {', '.join(names)} WHERE {' AND '.join(preds)}"
    if rng.random() < 0.25:
        t = chosen[0]
        sql += f" ORDER BY {t['name']}.{rng.choice(_cols(t))}"
    return sql


def _random_update(rng, tables) -> str:
    t = rng.choice(tables)
    cols = _cols(t)
    target = rng.choice(cols)
    sql = f"UPDATE {t['name']} SET {target} = {rng.randint(0, 9)}"
    if rng.random() < 0.8:
        c = rng.choice(cols)
        sql += f" WHERE {c} = {rng.randint(0, 50)}"
    return sql


def trim_candidates(candidates: CandidateSet, cap: int) -> CandidateSet:
    """Deterministically shrink a candidate set, keeping per-table variety."""
    if len(candidates) <= cap:
        return candidates
    out = CandidateSet()
    by_table = candidates.by_table()
    tables = sorted(by_table)
    cursor = {t: 0 for t in tables}
    while len(out) < cap:
        progressed = False
        for t in tables:
            if len(out) >= cap:
                break
            lst = by_table[t]
            if cursor[t] < len(lst):
                a = lst[cursor[t]]
                cursor[t] += 1
                out.add(a, candidates.provenance[a.id])
                progressed = True
        if not progressed:
            break
    return out


def random_constraint_text(rng: random.Random, candidates: CandidateSet, kind: str | None) -> str:
    total = sum(a.size_bytes for a in candidates.all())
    if kind is None:
        kind = rng.choice(("none", "budget", "count", "cols", "speedup"))
    if kind == "none" or total == 0:
        return ""
    if kind == "budget":
        frac = rng.choice((0.2, 0.4, 0.7))
        return f"ASSERT SUM(SIZE) <= {int(total * frac)}\n"
    if kind == "count":
        return f"ASSERT COUNT(1) <= {rng.randint(1, 4)}\n"
    if kind == "cols":
        return "FOR t IN TABLES ASSERT COUNT(1) WHERE COLS > 5 <= 2\n"
    if kind == "speedup":
        factor = rng.choice((0.75, 0.9))
        return f"FOR q IN W ASSERT COST(q) <= {factor} * BASECOST(q)\n"
    return ""


def random_instance(
    seed: int,
    max_tables: int = 4,
    max_statements: int = 8,
    candidate_cap: int = 12,
    constraint_kind: str | None = None,
    wide_dba: bool = False,
) -> Instance:
    rng = random.Random(seed)
    catalog_doc = random_catalog_doc(rng, max_tables)
    workload_text = random_workload_text(rng, catalog_doc, max_statements)
    dba_docs = []
    if wide_dba:
        # wide composites exercise column-count constraints
        for t in catalog_doc["tables"]:
            cols = [c["name"] for c in t["columns"]]
            if len(cols) >= 6 and rng.random() < 0.8:
                dba_docs.append({"table": t["name"], "key": cols[:6]})
    cat = load_catalog(catalog_doc)
    workload = parse_workload(workload_text, cat)
    dba = candgen.candidates_from_document(dba_docs, cat)
    candidates = trim_candidates(
        candgen.generate_candidates(workload, cat, dba), candidate_cap
    )
    constraint_text = random_constraint_text(rng, candidates, constraint_kind)
    return Instance(
        seed=seed,
        catalog_doc=catalog_doc,
        workload_text=workload_text,
        constraint_text=constraint_text,
        dba_docs=dba_docs,
        candidate_cap=candidate_cap,
    )


@dataclass
class BuiltInstance:
    instance: Instance
    catalog: Catalog
    workload: Workload
    candidates: CandidateSet
    problem: advisor.Problem
    oracle_ctx: OracleContext


def build_instance(instance: Instance) -> BuiltInstance:
    cat = load_catalog(instance.catalog_doc)
    workload = parse_workload(instance.workload_text, cat)
    dba = candgen.candidates_from_document(instance.dba_docs, cat)
    candidates = candgen.generate_candidates(workload, cat, dba)
    if instance.candidate_cap is not None:
        candidates = trim_candidates(candidates, instance.candidate_cap)
    problem = advisor.build_problem(cat, workload, candidates, instance.constraint_text)
    ctx = OracleContext(
        catalog=cat,
        workload=workload,
        basecosts=problem.basecosts,
        plan_cache=problem.plan_cache,
    )
    return BuiltInstance(instance, cat, workload, candidates, problem, ctx)


@dataclass
class EquivalenceRow:
    seed: int
    candidates: int
    statements: int
    agree: bool
    detail: str
    solver_value: float | None = None
    oracle_value: float | None = None


def check_equivalence(built: BuiltInstance, threads: int = 1) -> EquivalenceRow:
    """Solve exactly and compare objective and configuration with the oracle."""
    instance = built.instance
    oracle = bruteforce.enumerate_optimal(
        built.workload,
        built.candidates.all(),
        built.problem.asts,
        built.catalog,
        ctx=built.oracle_ctx,
    )
    opts = SolverOptions(gap_threshold=0.0, threads=threads)
    try:
        sol = solver.solve(built.problem.bip, opts)
    except InfeasibleProblem:
        agree = not oracle.feasible
        return EquivalenceRow(
            instance.seed, len(built.candidates), len(built.workload.statements),
            agree, "both infeasible" if agree else "solver infeasible, oracle found optimum",
            None, oracle.value if oracle.feasible else None,
        )
    if not oracle.feasible:
        return EquivalenceRow(
            instance.seed, len(built.candidates), len(built.workload.statements),
            False, "oracle infeasible, solver returned a solution",
            sol.objective, None,
        )
    rel = abs(sol.objective - oracle.value) / max(abs(oracle.value), 1e-12)
    member = tuple(sorted(sol.selected)) in oracle.optima
    agree = rel <= 1e-9 and member
    detail = "ok" if agree else f"rel_err={rel:.2e} member={member}"
    return EquivalenceRow(
        instance.seed, len(built.candidates), len(built.workload.statements),
        agree, detail, sol.objective, oracle.value,
    )


def run_equivalence_suite(
    seeds,
    constraint_kind: str | None = None,
    threads: int = 1,
    progress=None,
) -> list[EquivalenceRow]:
    rows = []
    for seed in seeds:
        built = build_instance(random_instance(seed, constraint_kind=constraint_kind))
        row = check_equivalence(built, threads=threads)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


# --- larger synthetic instances for benchmarking ---

def bench_instance(
    n_statements: int,
    n_tables: int = 8,
    min_candidates: int = 0,
    seed: int = 20110829,
    budget_fraction: float = 0.25,
    update_share: float = 0.12,
) -> Instance:
    rng = random.Random(seed)
    tables = []
    for t in range(n_tables):
        rows = rng.choice((5000, 20000, 100000, 400000))
        columns = []
        for c in range(rng.randint(8, 12)):
            columns.append({
                "name": f"c{c}",
                "width": rng.choice(_WIDTHS),
                "distinct": min(rng.choice((10, 100, 1000, 10000)), rows),
            })
        tables.append({"name": f"T{t}", "row_count": rows, "columns": columns})
    catalog_doc = {"page_size": 8192, "tables": tables, "join_selectivities": []}
    for i in range(n_tables - 1):
        catalog_doc["join_selectivities"].append(
            {"left": f"T{i}.c0", "right": f"T{i + 1}.c0", "sel": 0.001}
        )
    lines = []
    for i in range(n_statements):
        weight = rng.choice((1.0, 2.0, 4.0))
        roll = rng.random()
        if roll < update_share:
            lines.append(f"U{i} | {weight} | {_random_update(rng, tables)}")
        elif roll < 0.75:
            lines.append(f"Q{i} | {weight} | {_random_single(rng, tables)}")
        else:
            lines.append(f"Q{i} | {weight} | {_random_join(rng, tables)}")
    workload_text = "\n".join(lines) + "\n"

    dba_docs = []
    cat = load_catalog(catalog_doc)
    workload = parse_workload(workload_text, cat)
    generated = candgen.generate_candidates(workload, cat, [])
    missing = max(0, min_candidates - len(generated))
    attempt = 0
    while missing > 0 and attempt < min_candidates * 10:
        attempt += 1
        t = rng.choice(tables)
        cols = [c["name"] for c in t["columns"]]
        k = rng.randint(2, min(5, len(cols)))
        key = rng.sample(cols, k=k)
        cand = make_candidate(t["name"], key, cat)
        if cand.id not in generated:
            generated.add(cand, "dba")
            dba_docs.append({"table": t["name"], "key": key})
            missing -= 1

    total = sum(a.size_bytes for a in generated.all())
    constraint_text = f"ASSERT SUM(SIZE) <= {int(total * budget_fraction)}\n"
    return Instance(
        seed=seed,
        catalog_doc=catalog_doc,
        workload_text=workload_text,
        constraint_text=constraint_text,
        dba_docs=dba_docs,
        candidate_cap=None,
    )


def chord_reference_instance(
    n_tables: int = 8,
    queries_per_table: int = 5,
    pad_columns: int = 0,
) -> Instance:
    """Read-only workload whose covering indexes have staggered benefit/size
    ratios, giving a many-point supported trade-off front. ``pad_columns``
    adds per-table filler candidates that never help any query, to grow the
    candidate universe without changing the front."""
    tables = []
    dba_docs = []
    for t in range(n_tables):
        rows = 20000 + 30000 * t
        columns = [
            {"name": "a", "width": 4, "distinct": min(100, rows)},
            {"name": "b", "width": 8 + 4 * t, "distinct": min(1000, rows)},
            {"name": "c", "width": 4, "distinct": min(10, rows)},
        ]
        for p in range(pad_columns):
            columns.append({"name": f"p{p}", "width": 4, "distinct": min(50, rows)})
            dba_docs.append({"table": f"T{t}", "key": [f"p{p}"]})
            if p + 1 < pad_columns:
                dba_docs.append({"table": f"T{t}", "key": [f"p{p}", f"p{p + 1}"]})
        tables.append({"name": f"T{t}", "row_count": rows, "columns": columns})
    catalog_doc = {"page_size": 4096, "tables": tables, "join_selectivities": []}
    lines = []
    sid = 0
    for t in range(n_tables):
        weight = float(n_tables - t)
        for j in range(queries_per_table):
            lines.append(f"Q{sid} | {weight} | SELECT b FROM T{t} WHERE a = {j}")
            sid += 1
    return Instance(
        seed=0,
        catalog_doc=catalog_doc,
        workload_text="\n".join(lines) + "\n",
        constraint_text="",
        dba_docs=dba_docs,
        candidate_cap=None,
    )


@dataclass
class BenchRow:
    instance: str
    statements: int
    candidates: int
    inum_ms: float
    build_ms: float
    solve_ms: float
    objective: float
    gap: float

    def as_csv(self) -> str:
        return (
            f"{self.instance},{self.statements},{self.candidates},"
            f"{self.inum_ms:.1f},{self.build_ms:.1f},{self.solve_ms:.1f},"
            f"{self.objective:.6g},{self.gap:.6g}"
        )


BENCH_CSV_HEADER = "instance,n_statements,n_candidates,inum_ms,build_ms,solve_ms,objective,gap"


def run_bench(instance: Instance, label: str, options: SolverOptions | None = None) -> BenchRow:
    """Time the three pipeline phases: template caches, program build, solve."""
    cat = load_catalog(instance.catalog_doc)
    workload = parse_workload(instance.workload_text, cat)
    dba = candgen.candidates_from_document(instance.dba_docs, cat)
    candidates = candgen.generate_candidates(workload, cat, dba)
    if instance.candidate_cap is not None:
        candidates = trim_candidates(candidates, instance.candidate_cap)

    from . import inum, whatif
    from .whatif import PlanCache

    t0 = time.perf_counter()
    plan_cache = PlanCache(cat)
    cand_list = candidates.all()
    caches = {
        st.query.id: inum.build_templates(st.query, cand_list, cat, plans=plan_cache.plans(st.query))
        for st in workload.read_statements()
    }
    t1 = time.perf_counter()

    baseline = advisor.baseline_configuration(cat)
    basecosts = {st.query.id: plan_cache.cost(st.query, baseline) for st in workload.statements}
    update_table = whatif.build_update_cost_table(workload, cand_list, cat)
    asts = bipmodel.parse_constraints(instance.constraint_text)
    ctx = bipmodel.CompileContext(
        candidates=cand_list,
        catalog=cat,
        basecosts=basecosts,
        statement_ids=[st.query.id for st in workload.statements],
        read_ids={st.query.id for st in workload.read_statements()},
        update_rows=dict(update_table.ucost),
        update_base=dict(update_table.base),
        update_targets=dict(update_table.targets),
    )
    hard = []
    for ast in asts:
        if not ast.soft:
            hard.extend(bipmodel.compile_constraint(ast, ctx))
    soft = bipmodel.build_soft_terms(asts, ctx)
    bip = bipmodel.build_bip(workload, candidates, caches, update_table, hard, soft)
    t2 = time.perf_counter()

    sol = solver.solve(bip, options or SolverOptions(gap_threshold=0.05))
    t3 = time.perf_counter()

    return BenchRow(
        instance=label,
        statements=len(workload.statements),
        candidates=len(candidates),
        inum_ms=(t1 - t0) * 1000.0,
        build_ms=(t2 - t1) * 1000.0,
        solve_ms=(t3 - t2) * 1000.0,
        objective=sol.objective,
        gap=sol.gap,
    )
