"""Candidate-index generation from the workload plus administrator-supplied indexes.

Per-statement heuristics, applied without any benefit-based pruning:

1. a single-column index for every equality, range, join and order-by column
2. a composite of all equality columns (catalog column order), plus one
   variant per range column appended after the equality prefix
3. the order-by column as leading key, equality columns after it
4. covering variants of (2): projected columns carried as includes
5. a clustered variant of (1) on the most selective equality column

Candidates are deduplicated structurally across statements and against the
administrator set; identifiers are content hashes, stable across sessions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .catalog import Catalog, IndexCandidate, make_candidate
from .errors import AdvisorError, InvalidDbaCandidate
from .queryparse import QueryDescriptor, Workload


@dataclass
class CandidateSet:
    by_id: dict[str, IndexCandidate] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)

    def add(self, candidate: IndexCandidate, source: str):
        if candidate.id not in self.by_id:
            self.by_id[candidate.id] = candidate
            self.provenance[candidate.id] = source

    def remove(self, candidate_id: str):
        del self.by_id[candidate_id]
        del self.provenance[candidate_id]

    def __contains__(self, candidate_id: str) -> bool:
        return candidate_id in self.by_id

    def __len__(self) -> int:
        return len(self.by_id)

    def all(self) -> list[IndexCandidate]:
        return sorted(self.by_id.values(), key=lambda a: a.id)

    def for_table(self, table: str) -> list[IndexCandidate]:
        return [a for a in self.all() if a.table == table]

    def by_table(self) -> dict[str, list[IndexCandidate]]:
        out: dict[str, list[IndexCandidate]] = {}
        for a in self.all():
            out.setdefault(a.table, []).append(a)
        return out

    def copy(self) -> "CandidateSet":
        return CandidateSet(dict(self.by_id), dict(self.provenance))


def generate_candidates(
    workload: Workload,
    cat: Catalog,
    dba: list[IndexCandidate] | None = None,
) -> CandidateSet:
    out = CandidateSet()
    for st in workload.read_statements():
        _candidates_for_statement(st.query, cat, out)
    for a in dba or []:
        if not cat.has_table(a.table):
            raise InvalidDbaCandidate(f"candidate {a.id}: unknown table {a.table!r}")
        try:
            rebuilt = make_candidate(
                a.table, a.key_columns, cat,
                include_columns=a.include_columns, clustered=a.clustered,
            )
        except AdvisorError as exc:
            raise InvalidDbaCandidate(f"candidate {a.id}: {exc}") from exc
        out.add(rebuilt, "dba")
    return out


def candidates_from_document(doc: list[dict], cat: Catalog) -> list[IndexCandidate]:
    """Parse the administrator candidate file: a JSON list of index definitions."""
    out = []
    for entry in doc:
        try:
            out.append(
                make_candidate(
                    entry["table"],
                    entry["key"],
                    cat,
                    include_columns=entry.get("include", ()),
                    clustered=bool(entry.get("clustered", False)),
                )
            )
        except (AdvisorError, KeyError, TypeError) as exc:
            raise InvalidDbaCandidate(f"bad candidate entry {entry!r}: {exc}") from exc
    return out


def _candidates_for_statement(q: QueryDescriptor, cat: Catalog, out: CandidateSet):
    for table in q.referenced_tables:
        stats = cat.table(table)
        order = {c.name: pos for pos, c in enumerate(stats.columns)}

        eq_cols = _in_catalog_order(
            {c for t, c, _ in q.eq_predicates if t == table}, order)
        range_cols = _in_catalog_order(
            {c for t, c in q.range_predicates if t == table}, order)
        join_cols = _in_catalog_order(
            {c for pair in q.join_predicates for t, c in pair if t == table}, order)
        ob_col = q.order_by[1] if q.order_by and q.order_by[0] == table else None
        proj_cols = _in_catalog_order(
            {c for t, c in q.projections if t == table}, order)

        singles = _in_catalog_order(
            set(eq_cols) | set(range_cols) | set(join_cols) | ({ob_col} if ob_col else set()),
            order)
        for c in singles:
            out.add(make_candidate(table, [c], cat), "single-column")

        composites = []
        if eq_cols:
            composites.append(tuple(eq_cols))
            for r in range_cols:
                if r not in eq_cols:
                    composites.append(tuple(eq_cols) + (r,))
        for keys in composites:
            out.add(make_candidate(table, keys, cat), "eq-composite")

        if ob_col:
            keys = (ob_col,) + tuple(c for c in eq_cols if c != ob_col)
            out.add(make_candidate(table, keys, cat), "order-by-leading")

        for keys in composites:
            includes = tuple(c for c in proj_cols if c not in keys)
            if includes:
                out.add(
                    make_candidate(table, keys, cat, include_columns=includes),
                    "covering",
                )

        if eq_cols:
            best = max(eq_cols, key=lambda c: (stats.column(c).distinct, -order[c]))
            out.add(make_candidate(table, [best], cat, clustered=True), "clustered-eq")


def _in_catalog_order(cols, order) -> list[str]:
    return sorted(cols, key=lambda c: order[c])
