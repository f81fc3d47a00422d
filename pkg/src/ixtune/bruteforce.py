"""Exhaustive ground-truth oracle for small instances.

Everything here is deliberately independent of the template cache and the
integer program: configurations are costed exclusively through the what-if
engine, and constraints are evaluated directly from their parsed form rather
than from any compiled representation. The solver, the cache and the
constraint compiler are all tested against this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import whatif
from .bipmodel import BipProblem, ConstraintAst, matches_filters
from .catalog import Catalog, IndexCandidate
from .errors import TooManyCandidates
from .queryparse import Workload, UPDATE
from .whatif import NO_INDEX, PlanCache

INF = math.inf
_TOL = 1e-9


@dataclass
class OracleResult:
    optima: list[tuple[str, ...]]  # every minimizing configuration (candidate ids)
    value: float  # workload cost of the minimizers, inf when nothing is feasible
    feasible: bool
    cost_table: dict[tuple[str, ...], float] | None = None


@dataclass
class OracleContext:
    catalog: Catalog
    workload: Workload
    basecosts: dict[str, float]
    plan_cache: PlanCache

    @classmethod
    def build(cls, workload: Workload, cat: Catalog, baseline) -> "OracleContext":
        cache = PlanCache(cat)
        basecosts = {st.query.id: cache.cost(st.query, baseline) for st in workload.statements}
        return cls(cat, workload, basecosts, cache)


class _CostMemo:
    """Per-statement what-if costs memoized on the relevant candidate subset."""

    def __init__(self, ctx: OracleContext, candidates: list[IndexCandidate]):
        self.ctx = ctx
        self.relevant: dict[str, frozenset[str]] = {}
        self.memo: dict[tuple[str, frozenset[str]], float] = {}
        self.by_id = {a.id: a for a in candidates}
        for st in ctx.workload.statements:
            q = st.query
            tables = set(q.referenced_tables)
            if q.kind == UPDATE:
                tables |= set(q.query_shell.referenced_tables)
                tables.add(q.target_table)
            self.relevant[q.id] = frozenset(
                a.id for a in candidates if a.table in tables
            )

    def statement_cost(self, q, selected_ids: frozenset[str]) -> float:
        key = (q.id, selected_ids & self.relevant[q.id])
        hit = self.memo.get(key)
        if hit is None:
            config = [self.by_id[aid] for aid in sorted(key[1])]
            hit = self.ctx.plan_cache.cost(q, config)
            self.memo[key] = hit
        return hit

    def workload_cost(self, selected_ids: frozenset[str]) -> float:
        total = 0.0
        for st in self.ctx.workload.statements:
            total += st.weight * self.statement_cost(st.query, selected_ids)
        return total


def enumerate_optimal(
    workload: Workload,
    candidates: list[IndexCandidate],
    constraints: list[ConstraintAst],
    cat: Catalog,
    ctx: OracleContext | None = None,
    baseline=(),
    keep_cost_table: bool = False,
    limit: int = 20,
) -> OracleResult:
    """Exhaust every candidate subset; return all feasible cost minimizers."""
    if len(candidates) > limit:
        raise TooManyCandidates(f"{len(candidates)} candidates exceed the oracle limit {limit}")
    ctx = ctx or OracleContext.build(workload, cat, baseline)
    memo = _CostMemo(ctx, candidates)
    ordered = sorted(candidates, key=lambda a: a.id)

    best = INF
    optima: list[tuple[str, ...]] = []
    table: dict[tuple[str, ...], float] = {}
    feasible_any = False
    for mask in range(1 << len(ordered)):
        config = [ordered[i] for i in range(len(ordered)) if mask >> i & 1]
        if not configuration_feasible(config, constraints, ctx):
            continue
        feasible_any = True
        ids = frozenset(a.id for a in config)
        value = memo.workload_cost(ids)
        if keep_cost_table:
            table[tuple(sorted(ids))] = value
        if value < best - _TOL:
            best = value
            optima = [tuple(sorted(ids))]
        elif abs(value - best) <= _TOL:
            optima.append(tuple(sorted(ids)))
    return OracleResult(
        optima=sorted(optima),
        value=best,
        feasible=feasible_any,
        cost_table=table if keep_cost_table else None,
    )


def configuration_feasible(config, constraints, ctx: OracleContext) -> bool:
    """Direct semantic evaluation of the constraint language on a configuration."""
    clustered_per_table: dict[str, int] = {}
    for a in config:
        if a.clustered:
            clustered_per_table[a.table] = clustered_per_table.get(a.table, 0) + 1
    if any(n > 1 for n in clustered_per_table.values()):
        return False
    for ast in constraints:
        if ast.soft:
            continue
        if not _holds(ast, config, ctx):
            return False
    return True


def _holds(ast: ConstraintAst, config, ctx: OracleContext) -> bool:
    if ast.kind == "generator":
        return _generator_holds(ast, config, ctx)
    if ast.kind == "query_cost":
        return _query_cost_holds(ast, ast.query_ref, config, ctx)
    return _aggregate_holds(ast, config, ctx, extra_filters=())


def _generator_holds(ast, config, ctx) -> bool:
    body = ast.body
    if ast.domain == "W":
        return all(
            _query_cost_holds(body, st.query.id, config, ctx)
            for st in ctx.workload.statements
        )
    if ast.domain == "TABLES":
        for t in ctx.catalog.tables:
            scoped = [a for a in config if a.table == t.name]
            if not _aggregate_holds(body, scoped, ctx, extra_filters=ast.filters):
                return False
        return True
    # S: the body must hold for each candidate in the loop scope individually
    for a in config:
        if not matches_filters(a, ctx.catalog, ast.filters):
            continue
        if not _aggregate_holds(body, [a], ctx, extra_filters=()):
            return False
    return True


def _query_cost_holds(ast, qid: str, config, ctx) -> bool:
    st = ctx.workload.statement(qid)
    cost = ctx.plan_cache.cost(st.query, config)
    return cost <= ast.factor * ctx.basecosts[qid] + _TOL


def _aggregate_holds(ast, config, ctx, extra_filters) -> bool:
    from .bipmodel import measure  # local import to keep module roles one-way

    filters = tuple(extra_filters) + ast.filters
    selected = [a for a in config if matches_filters(a, ctx.catalog, filters)]
    values = [measure(a, ctx.catalog, ast.term) for a in selected]
    cmp, bound = ast.cmp, ast.bound
    if ast.aggregate in ("SUM", "COUNT"):
        lhs = float(len(values)) if ast.aggregate == "COUNT" else sum(values)
        return {
            "<=": lhs <= bound + _TOL,
            "<": lhs < bound,
            "=": abs(lhs - bound) <= _TOL,
            ">=": lhs >= bound - _TOL,
            ">": lhs > bound,
        }[cmp]
    if ast.aggregate == "MAX":
        if cmp == "<=":
            return all(v <= bound + _TOL for v in values)
        if cmp == "<":
            return all(v < bound for v in values)
        if cmp == ">=":
            return any(v >= bound - _TOL for v in values)
        if cmp == ">":
            return any(v > bound for v in values)
        return all(v <= bound + _TOL for v in values) and any(
            abs(v - bound) <= _TOL for v in values
        )
    # MIN
    if cmp == ">=":
        return all(v >= bound - _TOL for v in values)
    if cmp == ">":
        return all(v > bound for v in values)
    if cmp == "<=":
        return any(v <= bound + _TOL for v in values)
    if cmp == "<":
        return any(v < bound for v in values)
    return all(v >= bound - _TOL for v in values) and any(
        abs(v - bound) <= _TOL for v in values
    )


def soft_violation_semantic(ast: ConstraintAst, config, ctx: OracleContext) -> float:
    """Violation value (aggregate minus bound) evaluated from first principles."""
    from .bipmodel import measure

    if ast.kind == "query_cost":
        st = ctx.workload.statement(ast.query_ref)
        return ctx.plan_cache.cost(st.query, config) - ast.factor * ctx.basecosts[ast.query_ref]
    selected = [a for a in config if matches_filters(a, ctx.catalog, ast.filters)]
    if ast.aggregate == "COUNT":
        lhs = float(len(selected))
    else:
        lhs = sum(measure(a, ctx.catalog, ast.term) for a in selected)
    return lhs - ast.bound


def pareto_exact(
    workload: Workload,
    candidates: list[IndexCandidate],
    soft_asts: list[ConstraintAst],
    hard_asts: list[ConstraintAst],
    cat: Catalog,
    ctx: OracleContext | None = None,
    baseline=(),
    limit: int = 16,
) -> list[tuple[tuple[float, ...], tuple[str, ...]]]:
    """Full non-dominated set of (objective vector, configuration) pairs."""
    if len(candidates) > limit:
        raise TooManyCandidates(f"{len(candidates)} candidates exceed the oracle limit {limit}")
    ctx = ctx or OracleContext.build(workload, cat, baseline)
    memo = _CostMemo(ctx, candidates)
    ordered = sorted(candidates, key=lambda a: a.id)

    entries: list[tuple[tuple[float, ...], tuple[str, ...]]] = []
    for mask in range(1 << len(ordered)):
        config = [ordered[i] for i in range(len(ordered)) if mask >> i & 1]
        if not configuration_feasible(config, hard_asts, ctx):
            continue
        ids = frozenset(a.id for a in config)
        vector = (memo.workload_cost(ids),) + tuple(
            soft_violation_semantic(ast, config, ctx) for ast in soft_asts
        )
        entries.append((vector, tuple(sorted(ids))))

    front = []
    for vec, ids in entries:
        dominated = False
        for ovec, _o in entries:
            if ovec is vec:
                continue
            if all(a <= b + 1e-12 for a, b in zip(ovec, vec)) and any(
                a < b - 1e-12 for a, b in zip(ovec, vec)
            ):
                dominated = True
                break
        if not dominated:
            front.append((vec, ids))
    # one representative per distinct vector: lexicographically smallest ids
    front.sort(key=lambda e: (e[0], e[1]))
    uniq = []
    for vec, ids in front:
        if not uniq or any(abs(a - b) > 1e-12 for a, b in zip(uniq[-1][0], vec)):
            uniq.append((vec, ids))
    return uniq


# --- embedding of configurations into the integer program ---

@dataclass
class BipAssignment:
    template_choice: dict[str, int]  # statement id -> template index
    slot_choice: dict[str, dict[str, str]]  # statement id -> table -> access id
    selected: frozenset[str]


def assignment_from_config(config, bip: BipProblem) -> BipAssignment:
    """Variable assignment that realizes a configuration's workload cost.

    For each statement, pick the cost-minimizing template and per-slot access
    among the configuration's indexes (scan allowed); set the matching plan and
    access variables, and the selection variable of every configured index.
    """
    ids_by_table: dict[str, list[str]] = {}
    for a in config:
        ids_by_table.setdefault(a.table, []).append(a.id)
    for lst in ids_by_table.values():
        lst.sort()

    template_choice: dict[str, int] = {}
    slot_choice: dict[str, dict[str, str]] = {}
    for block in bip.blocks:
        best = INF
        best_k = None
        best_slots: dict[str, str] = {}
        for k, template in enumerate(block.templates.templates):
            acc = 0.0
            picks: dict[str, str] = {}
            dead = False
            for slot in template.slots:
                costs = slot.access_costs
                m = costs.get(NO_INDEX, INF)
                pick = NO_INDEX
                for aid in ids_by_table.get(slot.table, ()):
                    v = costs.get(aid)
                    if v is not None and v < m:
                        m = v
                        pick = aid
                if m == INF:
                    dead = True
                    break
                acc += m
                picks[slot.table] = pick
            if dead:
                continue
            acc += template.internal_cost
            if acc < best:
                best = acc
                best_k = k
                best_slots = picks
        template_choice[block.query_id] = best_k
        slot_choice[block.query_id] = best_slots
    return BipAssignment(
        template_choice=template_choice,
        slot_choice=slot_choice,
        selected=frozenset(a.id for a in config),
    )


def assignment_cost(bip: BipProblem, asg: BipAssignment) -> float:
    acc = 0.0
    for block in bip.blocks:
        k = asg.template_choice[block.query_id]
        template = block.templates.templates[k]
        acc += block.weight * template.internal_cost
        for slot in template.slots:
            aid = asg.slot_choice[block.query_id][slot.table]
            acc += block.weight * slot.access_costs[aid]
    for aid in sorted(asg.selected):
        acc += bip.z_objective.get(aid, 0.0)
    acc += bip.constant
    return acc


def assignment_structurally_feasible(bip: BipProblem, asg: BipAssignment) -> bool:
    """Check the three structural constraint families on an assignment."""
    for block in bip.blocks:
        k = asg.template_choice.get(block.query_id)
        if k is None or not 0 <= k < len(block.templates.templates):
            return False
        template = block.templates.templates[k]
        picks = asg.slot_choice.get(block.query_id, {})
        for slot in template.slots:
            aid = picks.get(slot.table)
            if aid is None or aid not in slot.access_costs:
                return False  # the slot sum for the chosen template must be 1
            if aid != NO_INDEX and aid not in asg.selected:
                return False  # access variables require their index selected
    return True
