"""Synthetic what-if optimizer: a deterministic, finite physical-plan space.

This module is the ground truth for every cost the workbench computes. For a
SELECT statement it enumerates plan skeletons (left-deep join orders with
nested-loop / hash / merge joins, leaf access methods left open as slots) and
costs a configuration by exhaustive minimization over skeletons and per-table
access-method choices. For an UPDATE it decomposes into query-shell cost,
per-index maintenance cost and a base row-update cost.

Cost model (all values double precision, summation order canonical):

* sequential scan of T costs ``pages(T) = ceil(row_count * row_width / page_size)``
* index height is ``max(1, ceil(log10(row_count)))``
* an index scan costs ``(height + ceil(sel * row_count) * factor) * multiplicity``
  where ``factor`` is 0.2 when the index carries every column the statement
  touches on that table, 1.0 otherwise
* ``sel`` multiplies 1/distinct for each equality predicate matching a prefix
  of the index key, then 1/3 per range predicate on the column immediately
  after that prefix; other predicates are residual filters at zero cost
* a slot that requires a sort order accepts only indexes whose leading key
  column provides it, and never a bare scan
* hash join internal cost is ``1.5 * (card_left + card_right)``, merge join
  ``1.0 * (card_left + card_right)`` (first join only, both inputs ordered on
  the join columns), nested loop 0 with the inner slot repeated once per outer
  row; joined cardinality is ``card_left * card_right * join_selectivity``
* an explicit sort of r rows costs ``0.01 * r * log2(max(r, 2))``; grouping
  costs ``0.01 * r``
* maintaining index a for an update of r rows costs ``r * (2 + height)``; the
  base row-update cost is ``r * 1.0``
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .catalog import Catalog, IndexCandidate
from .errors import CandidateTableMismatch, TableMismatch
from .queryparse import QueryDescriptor, Workload, UPDATE

INFINITE = math.inf

# Stable identifier for the "no index, scan the table" access choice.
NO_INDEX = "NO_INDEX"

RANGE_SELECTIVITY = 1.0 / 3.0
COVERED_SCAN_FACTOR = 0.2
SORT_CPU_FACTOR = 0.01
GROUP_CPU_FACTOR = 0.01

NESTED_LOOP = "NESTED_LOOP"
HASH = "HASH"
MERGE = "MERGE"

# Number of times the plan enumerator has actually run (cache misses only);
# lets callers assert that cached paths never re-enumerate.
plan_enumeration_calls = 0


@dataclass(frozen=True)
class SlotRequirement:
    """Leaf access slot of a plan skeleton, with enough context to cost any index."""

    table: str
    required_order: str | None
    multiplicity: int
    eq_selectivities: tuple[tuple[str, float], ...]  # sargable equality columns
    range_columns: tuple[str, ...]  # one entry per range comparison
    covering_columns: frozenset[str]  # columns an index must carry to be covering


@dataclass(frozen=True)
class PlanSkeleton:
    join_order: tuple[str, ...]
    join_algorithms: tuple[str, ...]
    slots: tuple[SlotRequirement, ...]  # catalog table order
    internal_cost: float


def eq_selectivity(cat: Catalog, table: str, column: str) -> float:
    return 1.0 / cat.table(table).column(column).distinct


def filtered_cardinality(q: QueryDescriptor, table: str, cat: Catalog) -> float:
    """Output cardinality of ``table`` after its local predicates."""
    card = float(cat.table(table).row_count)
    for t, c, _ in q.eq_predicates:
        if t == table:
            card *= eq_selectivity(cat, table, c)
    for t, _c in q.range_predicates:
        if t == table:
            card *= RANGE_SELECTIVITY
    return card


def sort_cost(rows: float) -> float:
    return SORT_CPU_FACTOR * rows * math.log2(max(rows, 2.0))


def group_cost(rows: float) -> float:
    return GROUP_CPU_FACTOR * rows


def slot_access_cost(slot: SlotRequirement, index: IndexCandidate | None, cat: Catalog) -> float:
    """Cost of serving ``slot`` with ``index`` (None = bare scan); inf if incompatible."""
    table = cat.table(slot.table)
    if index is None:
        if slot.required_order is not None:
            return INFINITE
        return float(cat.pages(slot.table)) * slot.multiplicity
    if index.table != slot.table:
        return INFINITE
    if slot.required_order is not None and index.key_columns[0] != slot.required_order:
        return INFINITE

    eq_map = dict(slot.eq_selectivities)
    sel = 1.0
    pos = 0
    keys = index.key_columns
    while pos < len(keys) and keys[pos] in eq_map:
        sel *= eq_map[keys[pos]]
        pos += 1
    if pos < len(keys):
        next_key = keys[pos]
        for col in slot.range_columns:
            if col == next_key:
                sel *= RANGE_SELECTIVITY

    carried = set(keys) | set(index.include_columns)
    factor = COVERED_SCAN_FACTOR if slot.covering_columns <= carried else 1.0
    height = cat.index_height(slot.table)
    matched = math.ceil(sel * table.row_count)
    return (height + matched * factor) * slot.multiplicity


def _local_eq_selectivities(q: QueryDescriptor, table: str, cat: Catalog):
    out = []
    seen = set()
    for t, c, _ in q.eq_predicates:
        if t == table and c not in seen:
            seen.add(c)
            out.append((c, eq_selectivity(cat, table, c)))
    return out


def _local_range_columns(q: QueryDescriptor, table: str):
    return tuple(c for t, c in q.range_predicates if t == table)


def _joins_to_prefix(q: QueryDescriptor, table: str, prefix: tuple[str, ...]):
    """Join predicates connecting ``table`` to the tables already joined."""
    out = []
    for (lt, lc), (rt, rc) in q.join_predicates:
        if lt == table and rt in prefix:
            out.append(((lt, lc), (rt, rc)))
        elif rt == table and lt in prefix:
            out.append(((rt, rc), (lt, lc)))
    return out  # each entry: ((table, its column), (prefix table, column))


def enumerate_plans(q: QueryDescriptor, cat: Catalog) -> list[PlanSkeleton]:
    """Enumerate the finite plan-skeleton space of a SELECT statement.

    Internal costs and multiplicities depend only on catalog statistics and
    the statement, never on the access method eventually plugged into a slot.
    """
    global plan_enumeration_calls
    plan_enumeration_calls += 1

    if q.kind == UPDATE:
        q = q.query_shell

    tables = q.referenced_tables
    base_card = {t: filtered_cardinality(q, t, cat) for t in tables}
    covering = {t: q.referenced_columns(t) for t in tables}
    local_eq = {t: _local_eq_selectivities(q, t, cat) for t in tables}
    local_rng = {t: _local_range_columns(q, t) for t in tables}

    def base_slot(t, order=None, mult=1, extra_eq=()):
        return SlotRequirement(
            table=t,
            required_order=order,
            multiplicity=mult,
            eq_selectivities=tuple(local_eq[t]) + tuple(extra_eq),
            range_columns=local_rng[t],
            covering_columns=covering[t],
        )

    skeletons: list[PlanSkeleton] = []

    if len(tables) == 1:
        t = tables[0]
        extra = 0.0
        if q.group_by:
            extra += group_cost(base_card[t])
        srt = sort_cost(base_card[t]) if q.order_by else 0.0
        skeletons.append(
            PlanSkeleton((t,), (), (base_slot(t),), internal_cost=extra + srt)
        )
        if q.order_by:
            skeletons.append(
                PlanSkeleton((t,), (), (base_slot(t, order=q.order_by[1]),), internal_cost=extra)
            )
        return skeletons

    n_joins = len(tables) - 1
    for perm in itertools.permutations(tables):
        for algos in itertools.product((NESTED_LOOP, HASH), repeat=n_joins):
            skeletons.extend(_join_skeletons(q, cat, perm, algos, base_card, base_slot))
        # merge join admitted only as the first join, canonical table order
        if cat.table_position(perm[0]) < cat.table_position(perm[1]):
            preds = _joins_to_prefix(q, perm[1], perm[:1])
            if preds:
                for rest in itertools.product((NESTED_LOOP, HASH), repeat=n_joins - 1):
                    skeletons.extend(
                        _join_skeletons(q, cat, perm, (MERGE,) + rest, base_card, base_slot)
                    )
    return skeletons


def _join_skeletons(q, cat, perm, algos, base_card, base_slot):
    """Build the skeleton(s) for one join order / algorithm assignment."""
    slot_specs: dict[str, dict] = {perm[0]: {"order": None, "mult": 1, "extra_eq": ()}}
    internal = 0.0
    card = base_card[perm[0]]
    for step, t in enumerate(perm[1:]):
        algo = algos[step]
        preds = _joins_to_prefix(q, t, perm[: step + 1])
        join_sel = 1.0
        for (it, ic), (pt, pc) in preds:
            join_sel *= cat.join_selectivity((it, ic), (pt, pc))
        spec = {"order": None, "mult": 1, "extra_eq": ()}
        if algo == NESTED_LOOP:
            spec["mult"] = max(1, math.ceil(card))
            spec["extra_eq"] = tuple(
                (ic, eq_selectivity(cat, it, ic)) for (it, ic), _ in preds
            )
        elif algo == HASH:
            internal += 1.5 * (card + base_card[t])
        else:  # MERGE: first join, both base inputs ordered on the join columns
            if step != 0 or not preds:
                return []
            (it, ic), (pt, pc) = preds[0]
            spec["order"] = ic
            slot_specs[pt]["order"] = pc
            internal += 1.0 * (card + base_card[t])
        slot_specs[t] = spec
        card = card * base_card[t] * join_sel

    if q.group_by:
        internal += group_cost(card)

    def build(order_overrides=None, extra_internal=0.0):
        specs = []
        for t in sorted(perm, key=cat.table_position):
            s = slot_specs[t]
            order = s["order"]
            if order_overrides and t in order_overrides:
                order = order_overrides[t]
            specs.append(base_slot(t, order=order, mult=s["mult"], extra_eq=s["extra_eq"]))
        return PlanSkeleton(
            tuple(perm),
            tuple(algos),
            tuple(specs),
            internal_cost=internal + extra_internal,
        )

    out = [build(extra_internal=sort_cost(card) if q.order_by else 0.0)]
    if (
        q.order_by
        and q.order_by[0] == perm[0]
        and all(a == NESTED_LOOP for a in algos)
    ):
        # nested loops preserve the outer order: push the sort into the outer slot
        out.append(build(order_overrides={perm[0]: q.order_by[1]}))
    return out


def whatif_cost(
    q: QueryDescriptor,
    config,
    cat: Catalog,
    plans: list[PlanSkeleton] | None = None,
) -> float:
    """Cost of the optimal plan for ``q`` given exactly the indexes in ``config``.

    Exhaustive minimization over every plan skeleton and every per-table
    access-method assignment; the independent reference all faster paths are
    tested against.
    """
    if q.kind == UPDATE:
        total = whatif_cost(q.query_shell, config, cat, plans=plans)
        for a in sorted((a for a in config if a.table == q.target_table), key=lambda a: a.id):
            total += update_cost(a, q, cat)
        total += base_update_cost(q, cat)
        return total

    by_table: dict[str, list[IndexCandidate]] = {}
    for a in config:
        if not cat.has_table(a.table):
            raise CandidateTableMismatch(f"index {a.id} is on unknown table {a.table!r}")
        by_table.setdefault(a.table, []).append(a)
    for lst in by_table.values():
        lst.sort(key=lambda a: a.id)

    if plans is None:
        plans = enumerate_plans(q, cat)

    best = INFINITE
    for skeleton in plans:
        per_slot: list[list[float]] = []
        dead = False
        combos = 1
        for slot in skeleton.slots:
            options = [slot_access_cost(slot, None, cat)]
            options.extend(slot_access_cost(slot, a, cat) for a in by_table.get(slot.table, ()))
            options = [c for c in options if c != INFINITE]
            if not options:
                dead = True
                break
            combos *= len(options)
            per_slot.append(options)
        if dead:
            continue
        if combos > 4096:
            # the cross-product minimum is attained at the per-slot minima;
            # summing those in the same order gives the identical value
            acc = 0.0
            for options in per_slot:
                acc += min(options)
            acc += skeleton.internal_cost
            if acc < best:
                best = acc
            continue
        for combo in itertools.product(*per_slot):
            acc = 0.0
            for value in combo:
                acc += value
            acc += skeleton.internal_cost
            if acc < best:
                best = acc
    return best


def rows_updated(q: QueryDescriptor, cat: Catalog) -> float:
    sel = 1.0
    for t, c, _ in q.eq_predicates:
        if t == q.target_table:
            sel *= eq_selectivity(cat, t, c)
    for t, _c in q.range_predicates:
        if t == q.target_table:
            sel *= RANGE_SELECTIVITY
    return sel * cat.table(q.target_table).row_count


def update_cost(a: IndexCandidate, q: QueryDescriptor, cat: Catalog) -> float:
    """Maintenance cost of index ``a`` under update statement ``q``."""
    if a.table != q.target_table:
        raise TableMismatch(
            f"index {a.id} is on {a.table!r}, update {q.id} targets {q.target_table!r}"
        )
    return rows_updated(q, cat) * (2 + cat.index_height(a.table))


def base_update_cost(q: QueryDescriptor, cat: Catalog) -> float:
    """Cost of updating the base rows themselves, independent of any index."""
    return rows_updated(q, cat) * 1.0


@dataclass
class UpdateCostTable:
    """Per-(index, update statement) maintenance costs plus base update costs."""

    ucost: dict[tuple[str, str], float] = field(default_factory=dict)  # (cand id, stmt id)
    base: dict[str, float] = field(default_factory=dict)  # stmt id -> base row cost
    targets: dict[str, str] = field(default_factory=dict)  # stmt id -> target table

    def extend_candidates(self, workload: Workload, candidates, cat: Catalog):
        for st in workload.update_statements():
            q = st.query
            for a in candidates:
                if a.table == q.target_table and (a.id, q.id) not in self.ucost:
                    self.ucost[(a.id, q.id)] = update_cost(a, q, cat)

    def remove_candidates(self, ids):
        drop = set(ids)
        for key in [k for k in self.ucost if k[0] in drop]:
            del self.ucost[key]


def build_update_cost_table(workload: Workload, candidates, cat: Catalog) -> UpdateCostTable:
    table = UpdateCostTable()
    for st in workload.update_statements():
        q = st.query
        table.base[q.id] = base_update_cost(q, cat)
        table.targets[q.id] = q.target_table
    table.extend_candidates(workload, candidates, cat)
    return table


class PlanCache:
    """Per-query skeleton cache so repeated what-if calls never re-enumerate."""

    def __init__(self, cat: Catalog):
        self.cat = cat
        self._plans: dict[str, list[PlanSkeleton]] = {}

    def plans(self, q: QueryDescriptor) -> list[PlanSkeleton]:
        read = q.query_shell if q.kind == UPDATE else q
        if read.id not in self._plans:
            self._plans[read.id] = enumerate_plans(read, self.cat)
        return self._plans[read.id]

    def cost(self, q: QueryDescriptor, config) -> float:
        return whatif_cost(q, config, self.cat, plans=self.plans(q))
