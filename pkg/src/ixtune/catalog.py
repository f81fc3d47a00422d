"""Database schema and synthetic statistics.

The catalog is the statistics substrate every cost computation reads: table
cardinalities, per-column byte widths and distinct counts, and pairwise join
selectivities. It is immutable after loading and safe to share across threads.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

from .errors import (
    DuplicateTable,
    InvalidStatistics,
    NonPositiveWidth,
    UnknownColumn,
    UnknownColumnInJoinSelectivity,
    UnknownTable,
)

# Per-row overhead charged by the index size estimate, in bytes.
ROW_OVERHEAD_BYTES = 8


@dataclass(frozen=True)
class ColumnStats:
    name: str
    width: int
    distinct: int


@dataclass(frozen=True)
class TableStats:
    name: str
    row_count: int
    columns: tuple[ColumnStats, ...]

    def column(self, name: str) -> ColumnStats:
        for col in self.columns:
            if col.name == name:
                return col
        raise UnknownColumn(f"table {self.name!r} has no column {name!r}")

    def has_column(self, name: str) -> bool:
        return any(col.name == name for col in self.columns)

    @property
    def row_width(self) -> int:
        return sum(col.width for col in self.columns)

    def column_position(self, name: str) -> int:
        for pos, col in enumerate(self.columns):
            if col.name == name:
                return pos
        raise UnknownColumn(f"table {self.name!r} has no column {name!r}")


@dataclass(frozen=True)
class Catalog:
    tables: tuple[TableStats, ...]
    page_size: int = 4096
    # key: frozenset of two (table, column) pairs; value: selectivity in (0, 1]
    join_selectivities: dict[frozenset, float] = field(default_factory=dict)

    @cached_property
    def _by_name(self) -> dict[str, TableStats]:
        return {t.name: t for t in self.tables}

    @cached_property
    def _positions(self) -> dict[str, int]:
        return {t.name: pos for pos, t in enumerate(self.tables)}

    def table(self, name: str) -> TableStats:
        t = self._by_name.get(name)
        if t is None:
            raise UnknownTable(f"unknown table {name!r}")
        return t

    def has_table(self, name: str) -> bool:
        return name in self._by_name

    def table_position(self, name: str) -> int:
        pos = self._positions.get(name)
        if pos is None:
            raise UnknownTable(f"unknown table {name!r}")
        return pos

    def join_selectivity(self, left: tuple[str, str], right: tuple[str, str]) -> float:
        """Selectivity of the equi-join ``left = right``.

        Missing entries default to 1/max(distinct counts of the two columns),
        the classical optimizer default.
        """
        key = frozenset((left, right))
        if key in self.join_selectivities:
            return self.join_selectivities[key]
        d1 = self.table(left[0]).column(left[1]).distinct
        d2 = self.table(right[0]).column(right[1]).distinct
        return 1.0 / max(d1, d2, 1)

    @cached_property
    def _pages(self) -> dict[str, int]:
        return {
            t.name: math.ceil(t.row_count * t.row_width / self.page_size)
            for t in self.tables
        }

    @cached_property
    def _heights(self) -> dict[str, int]:
        return {
            t.name: max(1, math.ceil(math.log10(max(t.row_count, 1))))
            for t in self.tables
        }

    def pages(self, table_name: str) -> int:
        pages = self._pages.get(table_name)
        if pages is None:
            raise UnknownTable(f"unknown table {table_name!r}")
        return pages

    def index_height(self, table_name: str) -> int:
        height = self._heights.get(table_name)
        if height is None:
            raise UnknownTable(f"unknown table {table_name!r}")
        return height


@dataclass(frozen=True)
class IndexCandidate:
    """A candidate index on a single table.

    Two candidates with identical (table, key_columns, include_columns,
    clustered) are the same candidate; ``id`` is a content hash of that
    tuple, so identity is stable across sessions.
    """

    id: str
    table: str
    key_columns: tuple[str, ...]
    include_columns: tuple[str, ...]
    clustered: bool
    size_bytes: int

    @property
    def width(self) -> int:
        """Number of columns carried by the index (keys plus includes)."""
        return len(self.key_columns) + len(self.include_columns)

    def all_columns(self) -> tuple[str, ...]:
        return self.key_columns + self.include_columns

    def row_width_bytes(self, cat: Catalog) -> int:
        """Per-entry byte width: row overhead plus carried column widths."""
        t = cat.table(self.table)
        return ROW_OVERHEAD_BYTES + sum(t.column(c).width for c in self.all_columns())

    def describe(self) -> str:
        parts = [f"{self.table}({', '.join(self.key_columns)})"]
        if self.include_columns:
            parts.append(f"include({', '.join(self.include_columns)})")
        if self.clustered:
            parts.append("clustered")
        return " ".join(parts)


def candidate_id(table: str, key_columns, include_columns, clustered: bool) -> str:
    payload = json.dumps([table, list(key_columns), list(include_columns), bool(clustered)])
    return hashlib.sha1(payload.encode()).hexdigest()[:12]


def estimate_index_size(
    table: str,
    key_columns,
    include_columns,
    cat: Catalog,
) -> int:
    """Estimated index size: row_count x (overhead + carried column widths)."""
    t = cat.table(table)
    width = ROW_OVERHEAD_BYTES
    for c in tuple(key_columns) + tuple(include_columns):
        width += t.column(c).width
    return t.row_count * width


def make_candidate(
    table: str,
    key_columns,
    cat: Catalog,
    include_columns=(),
    clustered: bool = False,
) -> IndexCandidate:
    keys = tuple(key_columns)
    includes = tuple(include_columns)
    if not keys:
        raise InvalidStatistics("an index needs at least one key column")
    if set(keys) & set(includes):
        raise InvalidStatistics(f"key and include columns overlap: {sorted(set(keys) & set(includes))}")
    if len(set(keys)) != len(keys) or len(set(includes)) != len(includes):
        raise InvalidStatistics("duplicate column in index definition")
    t = cat.table(table)
    for c in keys + includes:
        if not t.has_column(c):
            raise UnknownColumn(f"table {table!r} has no column {c!r}")
    return IndexCandidate(
        id=candidate_id(table, keys, includes, clustered),
        table=table,
        key_columns=keys,
        include_columns=includes,
        clustered=clustered,
        size_bytes=estimate_index_size(table, keys, includes, cat),
    )


def load_catalog(document: dict) -> Catalog:
    """Validate and load a catalog document (see ``catalog_to_document``)."""
    page_size = int(document.get("page_size", 4096))
    if page_size <= 0:
        raise InvalidStatistics(f"page_size must be positive, got {page_size}")

    tables = []
    seen = set()
    for tdoc in document.get("tables", []):
        name = tdoc["name"]
        if name in seen:
            raise DuplicateTable(f"duplicate table {name!r}")
        seen.add(name)
        row_count = int(tdoc["row_count"])
        if row_count < 0:
            raise InvalidStatistics(f"table {name!r}: negative row_count")
        cols = []
        col_names = set()
        for cdoc in tdoc.get("columns", []):
            cname = cdoc["name"]
            if cname in col_names:
                raise InvalidStatistics(f"table {name!r}: duplicate column {cname!r}")
            col_names.add(cname)
            width = int(cdoc["width"])
            if width <= 0:
                raise NonPositiveWidth(f"column {name}.{cname} has non-positive width {width}")
            distinct = int(cdoc["distinct"])
            if distinct < 1 or distinct > max(row_count, 1):
                raise InvalidStatistics(
                    f"column {name}.{cname}: distinct {distinct} outside [1, {max(row_count, 1)}]"
                )
            cols.append(ColumnStats(cname, width, distinct))
        tables.append(TableStats(name, row_count, tuple(cols)))

    cat = Catalog(tables=tuple(tables), page_size=page_size)

    sels: dict[frozenset, float] = {}
    for jdoc in document.get("join_selectivities", []):
        left = _parse_column_ref(jdoc["left"])
        right = _parse_column_ref(jdoc["right"])
        for table, column in (left, right):
            if not cat.has_table(table) or not cat.table(table).has_column(column):
                raise UnknownColumnInJoinSelectivity(
                    f"join selectivity references unknown column {table}.{column}"
                )
        sel = float(jdoc["sel"])
        if not (0.0 < sel <= 1.0):
            raise InvalidStatistics(f"join selectivity {sel} outside (0, 1]")
        sels[frozenset((left, right))] = sel

    return Catalog(tables=tuple(tables), page_size=page_size, join_selectivities=sels)


def catalog_to_document(cat: Catalog) -> dict:
    """Serialize a catalog back into the document form accepted by load_catalog."""
    doc = {
        "page_size": cat.page_size,
        "tables": [
            {
                "name": t.name,
                "row_count": t.row_count,
                "columns": [
                    {"name": c.name, "width": c.width, "distinct": c.distinct} for c in t.columns
                ],
            }
            for t in cat.tables
        ],
        "join_selectivities": [],
    }
    for key in sorted(cat.join_selectivities, key=lambda k: sorted(k)):
        left, right = sorted(key)
        doc["join_selectivities"].append(
            {
                "left": f"{left[0]}.{left[1]}",
                "right": f"{right[0]}.{right[1]}",
                "sel": cat.join_selectivities[key],
            }
        )
    return doc


def _parse_column_ref(ref: str) -> tuple[str, str]:
    table, sep, column = ref.partition(".")
    if not sep or not table or not column:
        raise UnknownColumnInJoinSelectivity(f"malformed column reference {ref!r}, expected T.c")
    return table, column
