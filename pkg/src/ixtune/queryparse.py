"""Workload parser for the supported SQL subset.

Workload files are UTF-8 text with one statement per line in the form
``<id> | <weight> | <SQL>``; ``#`` starts a comment line. The grammar covers
conjunctive SELECT/UPDATE statements with equality and range comparisons,
equi-joins, a single-column ORDER BY and an optional GROUP BY list. Each
statement may reference a table at most once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .catalog import Catalog
from .errors import (
    MultipleTableReference,
    UnknownColumn,
    UnsupportedFeature,
    WorkloadSyntaxError,
)

SELECT = "select"
UPDATE = "update"

_TOKEN_RE = re.compile(
    r"""
    \s*(
        '(?:[^'\\]|\\.)*'      |   # string literal
        \d+\.\d+               |   # float
        \d+                    |   # int
        [A-Za-z_][A-Za-z0-9_]* |   # identifier / keyword
        <= | >= | != | <> |
        [(),.*=<>;]
    )
    """,
    re.VERBOSE,
)

_KEYWORDS = {
    "select", "from", "where", "and", "or", "order", "group", "by", "update",
    "set", "between", "in", "like", "join", "on", "asc", "desc", "not", "null",
}


@dataclass(frozen=True)
class QueryDescriptor:
    id: str
    kind: str  # SELECT | UPDATE
    referenced_tables: tuple[str, ...]  # catalog order
    projections: tuple[tuple[str, str], ...] = ()
    eq_predicates: tuple[tuple[str, str, object], ...] = ()
    range_predicates: tuple[tuple[str, str], ...] = ()
    join_predicates: tuple[tuple[tuple[str, str], tuple[str, str]], ...] = ()
    order_by: tuple[str, str] | None = None
    group_by: tuple[tuple[str, str], ...] = ()
    # UPDATE only
    target_table: str | None = None
    set_columns: tuple[str, ...] = ()
    query_shell: "QueryDescriptor | None" = None

    def referenced_columns(self, table: str) -> frozenset[str]:
        """All columns of ``table`` the statement touches (drives index covering)."""
        cols = set()
        for t, c in self.projections:
            if t == table:
                cols.add(c)
        for t, c, _ in self.eq_predicates:
            if t == table:
                cols.add(c)
        for t, c in self.range_predicates:
            if t == table:
                cols.add(c)
        for (lt, lc), (rt, rc) in self.join_predicates:
            if lt == table:
                cols.add(lc)
            if rt == table:
                cols.add(rc)
        if self.order_by and self.order_by[0] == table:
            cols.add(self.order_by[1])
        for t, c in self.group_by:
            if t == table:
                cols.add(c)
        return frozenset(cols)


@dataclass(frozen=True)
class WeightedStatement:
    query: QueryDescriptor
    weight: float


@dataclass(frozen=True)
class Workload:
    statements: tuple[WeightedStatement, ...]

    def read_statements(self) -> list[WeightedStatement]:
        """SELECT statements plus the query shells of updates, in workload order."""
        out = []
        for st in self.statements:
            if st.query.kind == SELECT:
                out.append(st)
            else:
                out.append(WeightedStatement(st.query.query_shell, st.weight))
        return out

    def update_statements(self) -> list[WeightedStatement]:
        return [st for st in self.statements if st.query.kind == UPDATE]

    def statement(self, qid: str) -> WeightedStatement:
        for st in self.statements:
            if st.query.id == qid:
                return st
        raise KeyError(qid)

    def with_weight(self, qid: str, weight: float) -> "Workload":
        out = []
        for st in self.statements:
            if st.query.id == qid:
                out.append(WeightedStatement(st.query, weight))
            else:
                out.append(st)
        return Workload(tuple(out))


def parse_workload(text: str, cat: Catalog) -> Workload:
    statements: list[WeightedStatement] = []
    seen_ids: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|", 2)
        if len(parts) != 3:
            raise WorkloadSyntaxError("expected '<id> | <weight> | <SQL>'", lineno)
        qid = parts[0].strip()
        if not qid:
            raise WorkloadSyntaxError("empty statement id", lineno)
        if qid in seen_ids:
            raise WorkloadSyntaxError(f"duplicate statement id {qid!r}", lineno)
        seen_ids.add(qid)
        try:
            weight = float(parts[1].strip())
        except ValueError:
            raise WorkloadSyntaxError(f"bad weight {parts[1].strip()!r}", lineno) from None
        if weight <= 0:
            raise WorkloadSyntaxError(f"weight must be positive, got {weight}", lineno)
        sql = parts[2].strip().rstrip(";")
        query = _StatementParser(sql, cat, qid, lineno).parse()
        statements.append(WeightedStatement(query, weight))
    return Workload(tuple(statements))


def workload_to_text(workload: Workload) -> str:
    """Pretty-print a workload; parsing the result yields an equal Workload."""
    lines = []
    for st in workload.statements:
        lines.append(f"{st.query.id} | {st.weight} | {_render_sql(st.query)};")
    return "\n".join(lines) + ("\n" if lines else "")


class _StatementParser:
    def __init__(self, sql: str, cat: Catalog, qid: str, lineno: int):
        self.cat = cat
        self.qid = qid
        self.lineno = lineno
        self.tokens = self._tokenize(sql)
        self.pos = 0
        self.alias_to_table: dict[str, str] = {}

    # --- token plumbing ---

    def _tokenize(self, sql: str) -> list[str]:
        tokens = []
        pos = 0
        while pos < len(sql):
            m = _TOKEN_RE.match(sql, pos)
            if not m:
                if sql[pos:].strip():
                    raise WorkloadSyntaxError(f"cannot tokenize near {sql[pos:pos + 12]!r}", self.lineno)
                break
            tokens.append(m.group(1))
            pos = m.end()
        return tokens

    def _peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> str:
        tok = self._peek()
        if tok is None:
            raise WorkloadSyntaxError("unexpected end of statement", self.lineno)
        self.pos += 1
        return tok

    def _expect_keyword(self, kw: str):
        tok = self._next()
        if tok.lower() != kw:
            raise WorkloadSyntaxError(f"expected {kw.upper()}, got {tok!r}", self.lineno)

    def _peek_keyword(self, kw: str) -> bool:
        tok = self._peek()
        return tok is not None and tok.lower() == kw

    # --- grammar ---

    def parse(self) -> QueryDescriptor:
        tok = self._peek()
        if tok is None:
            raise WorkloadSyntaxError("empty statement", self.lineno)
        if tok.lower() == "select":
            return self._parse_select()
        if tok.lower() == "update":
            return self._parse_update()
        raise WorkloadSyntaxError(f"expected SELECT or UPDATE, got {tok!r}", self.lineno)

    def _parse_select(self) -> QueryDescriptor:
        self._expect_keyword("select")
        proj_tokens = []
        star = False
        if self._peek() == "*":
            self._next()
            star = True
        else:
            proj_tokens.append(self._parse_column_token())
            while self._peek() == ",":
                self._next()
                proj_tokens.append(self._parse_column_token())
        self._expect_keyword("from")
        tables = self._parse_from()

        eq, ranges, joins = [], [], []
        if self._peek_keyword("where"):
            self._next()
            eq, ranges, joins = self._parse_predicates()

        group_by = []
        order_by = None
        while self._peek() is not None:
            tok = self._next().lower()
            if tok == "group":
                self._expect_keyword("by")
                group_by.append(self._resolve_column(self._parse_column_token()))
                while self._peek() == ",":
                    self._next()
                    group_by.append(self._resolve_column(self._parse_column_token()))
            elif tok == "order":
                self._expect_keyword("by")
                order_by = self._resolve_column(self._parse_column_token())
                if self._peek_keyword("asc") or self._peek_keyword("desc"):
                    self._next()
                if self._peek() == ",":
                    raise UnsupportedFeature("multi-column ORDER BY is not supported")
            else:
                raise WorkloadSyntaxError(f"unexpected token {tok!r}", self.lineno)

        projections = self._expand_projections(proj_tokens, star, tables)
        return QueryDescriptor(
            id=self.qid,
            kind=SELECT,
            referenced_tables=self._catalog_order(tables),
            projections=tuple(projections),
            eq_predicates=tuple(eq),
            range_predicates=tuple(ranges),
            join_predicates=tuple(joins),
            order_by=order_by,
            group_by=tuple(group_by),
        )

    def _parse_update(self) -> QueryDescriptor:
        self._expect_keyword("update")
        target = self._next()
        if not self.cat.has_table(target):
            raise UnknownColumn(f"unknown table {target!r}", module="queryparse")
        self.alias_to_table[target] = target
        self._expect_keyword("set")
        set_cols = []
        while True:
            col = self._next()
            if not self.cat.table(target).has_column(col):
                raise UnknownColumn(f"table {target!r} has no column {col!r}", module="queryparse")
            tok = self._next()
            if tok != "=":
                raise WorkloadSyntaxError(f"expected '=' in SET clause, got {tok!r}", self.lineno)
            self._parse_literal()
            set_cols.append(col)
            if self._peek() == ",":
                self._next()
                continue
            break
        eq, ranges, joins = [], [], []
        if self._peek_keyword("where"):
            self._next()
            eq, ranges, joins = self._parse_predicates()
        if self._peek() is not None:
            raise WorkloadSyntaxError(f"unexpected token {self._peek()!r}", self.lineno)
        if joins:
            raise UnsupportedFeature("joins in UPDATE statements are not supported")

        shell = QueryDescriptor(
            id=self.qid,
            kind=SELECT,
            referenced_tables=(target,),
            projections=tuple((target, c) for c in set_cols),
            eq_predicates=tuple(eq),
            range_predicates=tuple(ranges),
        )
        return QueryDescriptor(
            id=self.qid,
            kind=UPDATE,
            referenced_tables=(target,),
            eq_predicates=tuple(eq),
            range_predicates=tuple(ranges),
            target_table=target,
            set_columns=tuple(set_cols),
            query_shell=shell,
        )

    def _parse_from(self) -> list[str]:
        tables = []
        while True:
            name = self._next()
            if name.lower() in _KEYWORDS:
                if name.lower() == "join":
                    raise UnsupportedFeature("JOIN ... ON syntax is not supported; use comma joins")
                raise WorkloadSyntaxError(f"expected table name, got {name!r}", self.lineno)
            if not self.cat.has_table(name):
                raise UnknownColumn(f"unknown table {name!r}", module="queryparse")
            alias = name
            nxt = self._peek()
            if nxt is not None and nxt.lower() not in _KEYWORDS and nxt not in (",", ";") and nxt.isidentifier():
                alias = self._next()
            if name in tables:
                raise MultipleTableReference(name, self.qid)
            tables.append(name)
            if alias in self.alias_to_table:
                raise MultipleTableReference(self.alias_to_table[alias], self.qid)
            self.alias_to_table[alias] = name
            if name != alias:
                self.alias_to_table.setdefault(name, name)
            if self._peek() == ",":
                self._next()
                continue
            break
        return tables

    def _parse_predicates(self):
        eq, ranges, joins = [], [], []
        while True:
            self._parse_one_predicate(eq, ranges, joins)
            if self._peek_keyword("and"):
                self._next()
                continue
            if self._peek_keyword("or"):
                raise UnsupportedFeature("OR predicates are not supported")
            break
        return eq, ranges, joins

    def _parse_one_predicate(self, eq, ranges, joins):
        tok = self._peek()
        if tok == "(":
            raise UnsupportedFeature("parenthesized predicates and subqueries are not supported")
        left = self._resolve_column(self._parse_column_token())
        op = self._next()
        if op in ("!=", "<>"):
            raise UnsupportedFeature("inequality predicates are not supported")
        if op.lower() == "between":
            self._parse_literal()
            self._expect_keyword("and")
            self._parse_literal()
            ranges.append(left)
            ranges.append(left)
            return
        if op.lower() in ("in", "like"):
            raise UnsupportedFeature(f"{op.upper()} predicates are not supported")
        if op not in ("=", "<", ">", "<=", ">="):
            raise WorkloadSyntaxError(f"unsupported operator {op!r}", self.lineno)
        nxt = self._peek()
        if nxt is not None and (nxt == "(" or nxt.lower() == "select"):
            raise UnsupportedFeature("subqueries are not supported")
        if nxt is not None and (nxt.isidentifier() and nxt.lower() not in ("null",)):
            right = self._resolve_column(self._parse_column_token())
            if op != "=":
                raise UnsupportedFeature("non-equality join predicates are not supported")
            if left[0] == right[0]:
                raise UnsupportedFeature("self-comparisons within one table are not supported")
            joins.append((left, right))
            return
        literal = self._parse_literal()
        if op == "=":
            eq.append((left[0], left[1], literal))
        else:
            ranges.append(left)

    def _parse_column_token(self) -> tuple[str | None, str]:
        first = self._next()
        if not first.isidentifier() or first.lower() in _KEYWORDS:
            raise WorkloadSyntaxError(f"expected column reference, got {first!r}", self.lineno)
        if self._peek() == ".":
            self._next()
            second = self._next()
            if not second.isidentifier():
                raise WorkloadSyntaxError(f"expected column after '.', got {second!r}", self.lineno)
            return first, second
        return None, first

    def _resolve_column(self, ref: tuple[str | None, str]) -> tuple[str, str]:
        qualifier, column = ref
        if qualifier is not None:
            table = self.alias_to_table.get(qualifier)
            if table is None:
                raise UnknownColumn(f"unknown table or alias {qualifier!r}", module="queryparse")
            if not self.cat.table(table).has_column(column):
                raise UnknownColumn(f"table {table!r} has no column {column!r}", module="queryparse")
            return table, column
        matches = [
            t for t in dict.fromkeys(self.alias_to_table.values())
            if self.cat.table(t).has_column(column)
        ]
        if not matches:
            raise UnknownColumn(f"column {column!r} not found in referenced tables", module="queryparse")
        if len(matches) > 1:
            raise UnknownColumn(f"column {column!r} is ambiguous across {matches}", module="queryparse")
        return matches[0], column

    def _parse_literal(self):
        tok = self._next()
        if tok.startswith("'"):
            return tok[1:-1]
        try:
            if "." in tok:
                return float(tok)
            return int(tok)
        except ValueError:
            raise WorkloadSyntaxError(f"expected literal, got {tok!r}", self.lineno) from None

    def _expand_projections(self, proj_tokens, star: bool, tables: list[str]):
        if star:
            out = []
            for t in tables:
                out.extend((t, c.name) for c in self.cat.table(t).columns)
            return out
        return [self._resolve_column(ref) for ref in proj_tokens]

    def _catalog_order(self, tables: list[str]) -> tuple[str, ...]:
        return tuple(sorted(tables, key=self.cat.table_position))


def _render_sql(q: QueryDescriptor) -> str:
    if q.kind == UPDATE:
        sets = ", ".join(f"{c} = 0" for c in q.set_columns)
        sql = f"UPDATE {q.target_table} SET {sets}"
        preds = _render_predicates(q)
        if preds:
            sql += " WHERE " + preds
        return sql
    cols = ", ".join(f"{t}.{c}" for t, c in q.projections)
    sql = f"SELECT {cols} FROM {', '.join(q.referenced_tables)}"
    preds = _render_predicates(q)
    if preds:
        sql += " WHERE " + preds
    if q.group_by:
        sql += " GROUP BY " + ", ".join(f"{t}.{c}" for t, c in q.group_by)
    if q.order_by:
        sql += f" ORDER BY {q.order_by[0]}.{q.order_by[1]}"
    return sql


def _render_predicates(q: QueryDescriptor) -> str:
    parts = []
    for t, c, lit in q.eq_predicates:
        parts.append(f"{t}.{c} = {_render_literal(lit)}")
    seen_range: dict[tuple[str, str], int] = {}
    for t, c in q.range_predicates:
        seen_range[(t, c)] = seen_range.get((t, c), 0) + 1
    for (t, c), n in seen_range.items():
        # one comparison per recorded range predicate occurrence
        parts.append(f"{t}.{c} > 0")
        for _ in range(n - 1):
            parts.append(f"{t}.{c} < 1000000")
    for (lt, lc), (rt, rc) in q.join_predicates:
        parts.append(f"{lt}.{lc} = {rt}.{rc}")
    return " AND ".join(parts)


def _render_literal(lit) -> str:
    if isinstance(lit, str):
        return f"'{lit}'"
    return repr(lit)
