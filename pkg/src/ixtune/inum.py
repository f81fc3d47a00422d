"""Per-query template-plan cache and its fast cost evaluation.

Building the cache walks the what-if plan space once per query and freezes,
for every skeleton, the internal cost plus a per-slot table of finite access
costs (one entry per compatible candidate, plus the bare scan when the slot
has no order requirement). Costing a configuration afterwards is a pure
minimization over the cached tables and matches the exhaustive what-if result
bit for bit, because both paths share one cost-formula implementation and one
summation order.

Incompatible (infinite) entries are never stored: absence means incompatible,
which keeps the downstream integer program sparse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .catalog import Catalog, IndexCandidate
from .errors import ForeignCandidate, UnknownTemplate
from .queryparse import QueryDescriptor, UPDATE
from . import whatif
from .whatif import NO_INDEX, PlanSkeleton, SlotRequirement

INFINITE = math.inf


@dataclass
class TemplateSlot:
    requirement: SlotRequirement
    access_costs: dict[str, float] = field(default_factory=dict)  # cand id / NO_INDEX -> cost

    @property
    def table(self) -> str:
        return self.requirement.table


@dataclass
class Template:
    internal_cost: float
    slots: tuple[TemplateSlot, ...]


@dataclass
class TemplatePlanSet:
    """Cached template plans for one read statement."""

    query_id: str
    tables: tuple[str, ...]  # referenced tables, catalog order
    templates: list[Template]
    known_ids: set[str] = field(default_factory=set)

    def gamma(self, k: int, table: str, access: str) -> float:
        """Access cost of plugging ``access`` into the slot of ``table`` in template ``k``.

        Zero when the statement does not reference the table, infinite when
        the access method is incompatible with the slot.
        """
        if not 0 <= k < len(self.templates):
            raise UnknownTemplate(f"query {self.query_id!r} has no template {k}")
        if table not in self.tables:
            return 0.0
        for slot in self.templates[k].slots:
            if slot.table == table:
                return slot.access_costs.get(access, INFINITE)
        return 0.0

    def extend(self, candidates, cat: Catalog):
        """Add access-cost entries for new candidates without re-enumerating plans."""
        fresh = [a for a in candidates if a.id not in self.known_ids]
        for a in fresh:
            self.known_ids.add(a.id)
            if a.table not in self.tables:
                continue
            for template in self.templates:
                for slot in template.slots:
                    if slot.table != a.table:
                        continue
                    cost = whatif.slot_access_cost(slot.requirement, a, cat)
                    if cost != INFINITE:
                        slot.access_costs[a.id] = cost

    def remove(self, ids):
        drop = set(ids)
        self.known_ids -= drop
        for template in self.templates:
            for slot in template.slots:
                for aid in drop & slot.access_costs.keys():
                    del slot.access_costs[aid]

    def to_debug_dict(self) -> dict:
        return {
            "query": self.query_id,
            "templates": [
                {
                    "beta": t.internal_cost,
                    "slots": [
                        {
                            "table": s.table,
                            "order": s.requirement.required_order,
                            "multiplicity": s.requirement.multiplicity,
                            "gamma": dict(sorted(s.access_costs.items())),
                        }
                        for s in t.slots
                    ],
                }
                for t in self.templates
            ],
        }


def build_templates(
    q: QueryDescriptor,
    candidates,
    cat: Catalog,
    plans: list[PlanSkeleton] | None = None,
) -> TemplatePlanSet:
    """Freeze the template cache for a SELECT statement or update query shell."""
    if q.kind == UPDATE:
        q = q.query_shell
    if plans is None:
        plans = whatif.enumerate_plans(q, cat)

    all_candidates = list(candidates)
    by_table: dict[str, list[IndexCandidate]] = {}
    for a in all_candidates:
        by_table.setdefault(a.table, []).append(a)
    for lst in by_table.values():
        lst.sort(key=lambda a: a.id)

    templates = []
    for skeleton in plans:
        slots = []
        for req in skeleton.slots:
            costs: dict[str, float] = {}
            scan = whatif.slot_access_cost(req, None, cat)
            if scan != INFINITE:
                costs[NO_INDEX] = scan
            for a in by_table.get(req.table, ()):
                cost = whatif.slot_access_cost(req, a, cat)
                if cost != INFINITE:
                    costs[a.id] = cost
            slots.append(TemplateSlot(requirement=req, access_costs=costs))
        templates.append(Template(internal_cost=skeleton.internal_cost, slots=tuple(slots)))

    return TemplatePlanSet(
        query_id=q.id,
        tables=q.referenced_tables,
        templates=templates,
        known_ids={a.id for a in all_candidates},
    )


def inum_cost(tps: TemplatePlanSet, config) -> float:
    """min over templates of (internal cost + per-slot cheapest available access).

    The per-slot minimization is valid because access costs are separable
    across tables; the result equals the exhaustive what-if cost exactly.
    """
    ids_by_table: dict[str, list[str]] = {}
    for a in config:
        if a.id not in tps.known_ids:
            raise ForeignCandidate(f"candidate {a.id} is not in the template cache of {tps.query_id!r}")
        ids_by_table.setdefault(a.table, []).append(a.id)
    for lst in ids_by_table.values():
        lst.sort()

    best = INFINITE
    for template in tps.templates:
        acc = 0.0
        dead = False
        for slot in template.slots:
            costs = slot.access_costs
            m = costs.get(NO_INDEX, INFINITE)
            for aid in ids_by_table.get(slot.table, ()):
                v = costs.get(aid)
                if v is not None and v < m:
                    m = v
            if m == INFINITE:
                dead = True
                break
            acc += m
        if not dead:
            acc += template.internal_cost
            if acc < best:
                best = acc
    return best
