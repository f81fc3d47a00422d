"""Binary integer program over index-selection, plan-choice and access variables.

Variable families (names as used in the LP dump):

* ``z_<id>``        one per candidate index: selected or not
* ``y_<q>_<k>``     one per read statement and template: plan choice
* ``x_<q>_<k>_<t>_<id>``  one per template slot and compatible access method
  (including the bare scan ``NO_INDEX`` where the slot allows it)

The objective sums weighted template internal costs over y, weighted access
costs over x, weighted index-maintenance costs over z, and a constant for the
base update cost. Structural constraints: each read statement picks exactly
one template, each slot of the picked template picks exactly one access, and
a real index may only be used where it is selected.

The module also parses the administrator constraint language (one statement
per line) and compiles it into linear constraints over these variables, plus
the always-present rule of at most one clustered index per table.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, replace

from .candgen import CandidateSet
from .catalog import Catalog, IndexCandidate
from .errors import (
    DslSyntaxError,
    EmptyScopeWarning,
    InfeasibleProblem,
    MissingTemplateCache,
    MissingUpdateCost,
    NonLinearConstruct,
    StaleState,
    UnknownAttribute,
    WeightOutOfRange,
)
from .inum import TemplatePlanSet
from .queryparse import Workload
from .whatif import NO_INDEX, UpdateCostTable

LE = "<="
EQ = "="
GE = ">="


@dataclass(frozen=True)
class LinConstraint:
    """A sparse linear constraint over selection variables.

    ``query`` marks query-cost constraints: their left-hand side additionally
    contains that statement's full plan-cost expression (its y and x terms
    with the template and access costs as coefficients).
    """

    z_coeffs: tuple[tuple[str, float], ...]
    cmp: str
    rhs: float
    origin: str
    query: str | None = None

    def z_map(self) -> dict[str, float]:
        return dict(self.z_coeffs)


@dataclass(frozen=True)
class FilterClause:
    attr: str  # TABLE | WIDTH | SIZE | CLUSTERED | COLS
    op: str
    value: object


@dataclass(frozen=True)
class ConstraintAst:
    cid: str
    text: str
    soft: bool
    kind: str  # index_aggregate | query_cost | generator
    aggregate: str | None = None
    term: str | None = None
    filters: tuple[FilterClause, ...] = ()
    cmp: str | None = None
    bound: float | None = None
    domain: str | None = None
    loop_var: str | None = None
    body: "ConstraintAst | None" = None
    query_ref: str | None = None
    factor: float | None = None


@dataclass(frozen=True)
class SoftTerm:
    """Violation expression of a soft constraint: aggregate minus bound.

    ``query``/``query_coeff`` add the statement's plan-cost expression for
    soft query-cost constraints; ``offset`` carries the negated bound.
    """

    cid: str
    origin: str
    z_coeffs: tuple[tuple[str, float], ...]
    offset: float
    query: str | None = None
    query_coeff: float = 0.0


@dataclass
class QueryBlock:
    query_id: str
    weight: float
    templates: TemplatePlanSet
    base_weight: float  # statement weight before any scalarization


@dataclass
class BipProblem:
    """Immutable problem instance handed to the solver."""

    blocks: list[QueryBlock]
    candidates: list[IndexCandidate]  # sorted by id
    z_objective: dict[str, float]  # candidate id -> weighted maintenance cost
    constant: float
    constraints: list[LinConstraint]
    soft_terms: list[SoftTerm]
    update_rows: dict[tuple[str, str], float]  # (cand id, update id) -> ucost
    update_base: dict[str, float]  # update id -> base row cost
    update_weights: dict[str, float]  # update id -> statement weight
    scalarization: tuple[float, ...] | None = None

    # --- sizes ---

    @property
    def num_z(self) -> int:
        return len(self.candidates)

    @property
    def num_y(self) -> int:
        return sum(len(b.templates.templates) for b in self.blocks)

    @property
    def num_x(self) -> int:
        return sum(
            len(slot.access_costs)
            for b in self.blocks
            for t in b.templates.templates
            for slot in t.slots
        )

    @property
    def num_variables(self) -> int:
        return self.num_z + self.num_y + self.num_x

    def structural_counts(self) -> dict[str, int]:
        y_sums = len(self.blocks)
        x_sums = sum(
            len(t.slots) for b in self.blocks for t in b.templates.templates
        )
        links = sum(
            sum(1 for a in slot.access_costs if a != NO_INDEX)
            for b in self.blocks
            for t in b.templates.templates
            for slot in t.slots
        )
        return {"y_sums": y_sums, "x_sums": x_sums, "links": links}

    def candidate(self, cand_id: str) -> IndexCandidate:
        for a in self.candidates:
            if a.id == cand_id:
                return a
        raise KeyError(cand_id)

    # --- variable materialization (dump / small-instance tests) ---

    def variable_names(self):
        for a in self.candidates:
            yield f"z_{a.id}"
        for b in self.blocks:
            for k, t in enumerate(b.templates.templates):
                yield f"y_{b.query_id}_{k}"
                for slot in t.slots:
                    for aid in sorted(slot.access_costs):
                        yield f"x_{b.query_id}_{k}_{slot.table}_{aid}"

    def iter_structural_constraints(self):
        """Yield (label, terms, cmp, rhs) for the three structural families."""
        for b in self.blocks:
            terms = [(f"y_{b.query_id}_{k}", 1.0) for k in range(len(b.templates.templates))]
            yield (f"plan_{b.query_id}", terms, EQ, 1.0)
        for b in self.blocks:
            for k, t in enumerate(b.templates.templates):
                for slot in t.slots:
                    terms = [
                        (f"x_{b.query_id}_{k}_{slot.table}_{aid}", 1.0)
                        for aid in sorted(slot.access_costs)
                    ]
                    terms.append((f"y_{b.query_id}_{k}", -1.0))
                    yield (f"slot_{b.query_id}_{k}_{slot.table}", terms, EQ, 0.0)
        for b in self.blocks:
            for k, t in enumerate(b.templates.templates):
                for slot in t.slots:
                    for aid in sorted(slot.access_costs):
                        if aid == NO_INDEX:
                            continue
                        yield (
                            f"link_{b.query_id}_{k}_{slot.table}_{aid}",
                            [(f"z_{aid}", 1.0), (f"x_{b.query_id}_{k}_{slot.table}_{aid}", -1.0)],
                            GE,
                            0.0,
                        )

    def dump_lp(self, fp):
        fp.write("min:")
        for b in self.blocks:
            for k, t in enumerate(b.templates.templates):
                fp.write(f" + {b.weight * t.internal_cost:.9g} y_{b.query_id}_{k}")
                for slot in t.slots:
                    for aid in sorted(slot.access_costs):
                        coef = b.weight * slot.access_costs[aid]
                        fp.write(f" + {coef:.9g} x_{b.query_id}_{k}_{slot.table}_{aid}")
        for a in self.candidates:
            coef = self.z_objective.get(a.id, 0.0)
            if coef:
                fp.write(f" + {coef:.9g} z_{a.id}")
        if self.constant:
            fp.write(f" + {self.constant:.9g}")
        fp.write("\n")
        for label, terms, cmp, rhs in self.iter_structural_constraints():
            body = " + ".join(f"{c:.9g} {name}" for name, c in terms)
            fp.write(f"{label}: {body} {cmp} {rhs:.9g}\n")
        for i, lc in enumerate(self.constraints):
            parts = [f"{c:.9g} z_{aid}" for aid, c in lc.z_coeffs]
            if lc.query is not None:
                parts.append(f"cost({lc.query})")
            fp.write(f"user_{i}[{lc.origin}]: {' + '.join(parts) or '0'} {lc.cmp} {lc.rhs:.9g}\n")


# --- construction ---

def build_bip(
    workload: Workload,
    candidates: CandidateSet,
    template_caches: dict[str, TemplatePlanSet],
    update_table: UpdateCostTable,
    constraints: list[LinConstraint] | None = None,
    soft_terms: list[SoftTerm] | None = None,
) -> BipProblem:
    cand_list = candidates.all()
    blocks = []
    for st in workload.read_statements():
        tps = template_caches.get(st.query.id)
        if tps is None:
            raise MissingTemplateCache(f"no template cache for statement {st.query.id!r}")
        blocks.append(QueryBlock(st.query.id, st.weight, tps, st.weight))

    z_objective = {a.id: 0.0 for a in cand_list}
    constant = 0.0
    update_weights = {}
    for st in workload.update_statements():
        q = st.query
        update_weights[q.id] = st.weight
        if q.id not in update_table.base:
            raise MissingUpdateCost(f"no base update cost for statement {q.id!r}")
        constant += st.weight * update_table.base[q.id]
        for a in cand_list:
            if a.table != q.target_table:
                continue
            key = (a.id, q.id)
            if key not in update_table.ucost:
                raise MissingUpdateCost(f"no maintenance cost for ({a.id}, {q.id})")
            z_objective[a.id] += st.weight * update_table.ucost[key]

    all_constraints = clustered_constraints(cand_list) + list(constraints or [])
    return BipProblem(
        blocks=blocks,
        candidates=cand_list,
        z_objective=z_objective,
        constant=constant,
        constraints=all_constraints,
        soft_terms=list(soft_terms or []),
        update_rows=dict(update_table.ucost),
        update_base=dict(update_table.base),
        update_weights=update_weights,
    )


def clustered_constraints(candidates) -> list[LinConstraint]:
    """At most one clustered index per table (always implicitly present)."""
    groups: dict[str, list[str]] = {}
    for a in candidates:
        if a.clustered:
            groups.setdefault(a.table, []).append(a.id)
    out = []
    for table in sorted(groups):
        ids = sorted(groups[table])
        out.append(
            LinConstraint(
                z_coeffs=tuple((aid, 1.0) for aid in ids),
                cmp=LE,
                rhs=1.0,
                origin=f"builtin-clustered({table})",
            )
        )
    return out


# --- configuration evaluation ---

def config_query_cost(block: QueryBlock, ids_by_table: dict[str, list[str]]) -> float:
    """Cheapest plan cost for one statement given the available index ids."""
    best = math.inf
    for template in block.templates.templates:
        acc = 0.0
        dead = False
        for slot in template.slots:
            costs = slot.access_costs
            m = costs.get(NO_INDEX, math.inf)
            for aid in ids_by_table.get(slot.table, ()):
                v = costs.get(aid)
                if v is not None and v < m:
                    m = v
            if m == math.inf:
                dead = True
                break
            acc += m
        if not dead:
            acc += template.internal_cost
            if acc < best:
                best = acc
    return best


def group_by_table(bip: BipProblem, selected_ids) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    index = {a.id: a for a in bip.candidates}
    for aid in selected_ids:
        out.setdefault(index[aid].table, []).append(aid)
    for lst in out.values():
        lst.sort()
    return out


def config_objective(bip: BipProblem, selected_ids) -> float:
    """Canonical objective value of a configuration (same grouping every caller)."""
    by_table = group_by_table(bip, selected_ids)
    acc = 0.0
    for block in bip.blocks:
        acc += block.weight * config_query_cost(block, by_table)
    for aid in sorted(selected_ids):
        acc += bip.z_objective[aid]
    acc += bip.constant
    return acc


def statement_cost_value(bip: BipProblem, query_id: str, selected_ids) -> float:
    """Left-hand side of a query-cost constraint: plan cost plus update terms."""
    by_table = group_by_table(bip, selected_ids)
    for block in bip.blocks:
        if block.query_id == query_id:
            value = config_query_cost(block, by_table)
            break
    else:
        raise KeyError(query_id)
    return value


def constraint_satisfied(bip: BipProblem, lc: LinConstraint, selected_ids, tol=1e-9) -> bool:
    selected = set(selected_ids)
    lhs = 0.0
    for aid, coef in lc.z_coeffs:
        if aid in selected:
            lhs += coef
    if lc.query is not None:
        lhs += statement_cost_value(bip, lc.query, selected_ids)
    if lc.cmp == LE:
        return lhs <= lc.rhs + tol
    if lc.cmp == GE:
        return lhs >= lc.rhs - tol
    return abs(lhs - lc.rhs) <= tol


def soft_violation(bip: BipProblem, term: SoftTerm, selected_ids) -> float:
    selected = set(selected_ids)
    value = term.offset
    for aid, coef in term.z_coeffs:
        if aid in selected:
            value += coef
    if term.query is not None:
        value += term.query_coeff * statement_cost_value(bip, term.query, selected_ids)
    return value


# --- constraint DSL ---

_DSL_TOKEN = re.compile(
    r"\s*(<=|>=|\*|[(),=<>]|\d+\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?|[A-Za-z_][A-Za-z0-9_]*)"
)

_AGGREGATES = {"SUM", "COUNT", "MIN", "MAX"}
_TERMS = {"SIZE", "WIDTH", "1"}
_FILTER_ATTRS = {"TABLE", "WIDTH", "SIZE", "CLUSTERED", "COLS"}


def parse_constraints(text: str) -> list[ConstraintAst]:
    out = []
    counter = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        counter += 1
        out.append(_ConstraintParser(line, lineno, f"c{counter}").parse())
    return out


class _ConstraintParser:
    def __init__(self, line: str, lineno: int, cid: str):
        self.line = line
        self.lineno = lineno
        self.cid = cid
        self.tokens = self._tokenize(line)
        self.pos = 0

    def _tokenize(self, line):
        tokens = []
        pos = 0
        while pos < len(line):
            m = _DSL_TOKEN.match(line, pos)
            if not m:
                if line[pos:].strip():
                    raise DslSyntaxError(f"cannot tokenize near {line[pos:pos + 12]!r}", self.lineno)
                break
            tokens.append(m.group(1))
            pos = m.end()
        return tokens

    def _peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self):
        tok = self._peek()
        if tok is None:
            raise DslSyntaxError("unexpected end of constraint", self.lineno)
        self.pos += 1
        return tok

    def _expect(self, expected):
        tok = self._next()
        if tok.upper() != expected:
            raise DslSyntaxError(f"expected {expected}, got {tok!r}", self.lineno)
        return tok

    def _number(self):
        tok = self._next()
        try:
            return float(tok)
        except ValueError:
            raise DslSyntaxError(f"expected number, got {tok!r}", self.lineno) from None

    def parse(self) -> ConstraintAst:
        soft = False
        if self._peek() and self._peek().upper() == "SOFT":
            self._next()
            soft = True
        tok = self._peek()
        if tok is None:
            raise DslSyntaxError("empty constraint", self.lineno)
        if tok.upper() == "FOR":
            ast = self._parse_generator(soft)
        elif tok.upper() == "ASSERT":
            ast = self._parse_assert(soft, loop_var=None)
        else:
            raise DslSyntaxError(f"expected ASSERT or FOR, got {tok!r}", self.lineno)
        if self._peek() is not None:
            raise DslSyntaxError(f"unexpected trailing token {self._peek()!r}", self.lineno)
        return ast

    def _parse_generator(self, soft) -> ConstraintAst:
        self._expect("FOR")
        loop_var = self._next()
        self._expect("IN")
        domain = self._next().upper()
        if domain not in ("W", "S", "TABLES"):
            raise DslSyntaxError(f"generator domain must be W, S or TABLES, got {domain!r}", self.lineno)
        filters = ()
        if self._peek() and self._peek().upper() == "WHERE":
            self._next()
            filters = self._parse_filters()
        body = self._parse_assert(False, loop_var=loop_var)
        return ConstraintAst(
            cid=self.cid, text=self.line, soft=soft, kind="generator",
            domain=domain, loop_var=loop_var, filters=filters, body=body,
        )

    def _parse_assert(self, soft, loop_var) -> ConstraintAst:
        self._expect("ASSERT")
        head = self._next()
        up = head.upper()
        if up == "COST":
            return self._parse_query_cost(soft, loop_var)
        if up not in _AGGREGATES:
            raise NonLinearConstruct(
                f"unsupported construct {head!r}: only SUM/COUNT/MIN/MAX aggregates "
                f"and COST comparisons are linear"
            )
        self._expect("(")
        term = self._next().upper()
        if term == "ONE":
            term = "1"
        if term not in _TERMS:
            raise UnknownAttribute(f"unknown measure {term!r}, expected SIZE, WIDTH or 1")
        self._expect(")")
        filters = ()
        if self._peek() and self._peek().upper() == "WHERE":
            self._next()
            filters = self._parse_filters()
        cmp = self._cmp_token()
        bound = self._number()
        if not math.isfinite(bound):
            raise DslSyntaxError("constraint bound must be finite", self.lineno)
        return ConstraintAst(
            cid=self.cid, text=self.line, soft=soft, kind="index_aggregate",
            aggregate=up, term="ONE" if term == "1" else term,
            filters=filters, cmp=cmp, bound=bound,
        )

    def _parse_query_cost(self, soft, loop_var) -> ConstraintAst:
        self._expect("(")
        ref = self._next()
        self._expect(")")
        cmp = self._cmp_token()
        if cmp not in (LE, "<"):
            raise NonLinearConstruct("query-cost constraints support only <= / < bounds")
        factor = self._number()
        self._expect("*")
        self._expect("BASECOST")
        self._expect("(")
        ref2 = self._next()
        self._expect(")")
        if ref2 != ref:
            raise DslSyntaxError("COST and BASECOST must name the same statement", self.lineno)
        return ConstraintAst(
            cid=self.cid, text=self.line, soft=soft, kind="query_cost",
            cmp=LE, query_ref=ref, factor=factor,
        )

    def _cmp_token(self):
        tok = self._next()
        mapping = {"<=": LE, ">=": GE, "=": EQ, "<": "<", ">": ">"}
        if tok not in mapping:
            raise DslSyntaxError(f"expected comparison, got {tok!r}", self.lineno)
        return mapping[tok]

    def _parse_filters(self):
        clauses = []
        while True:
            attr = self._next().upper()
            if attr not in _FILTER_ATTRS:
                raise UnknownAttribute(f"unknown filter attribute {attr!r}")
            if attr == "CLUSTERED" and (
                self._peek() is None
                or self._peek().upper() in ("AND",)
                or self._peek() in ("<=", ">=", "<", ">")
            ):
                # when CLUSTERED has no own comparison the next token belongs
                # to the enclosing aggregate comparison
                if self._peek() in ("<=", ">=", "<", ">"):
                    clauses.append(FilterClause("CLUSTERED", EQ, True))
                    break
                clauses.append(FilterClause("CLUSTERED", EQ, True))
                if self._peek() is None:
                    break
                self._next()  # AND
                continue
            op = self._cmp_token()
            if attr == "TABLE":
                value = self._next()
                if op != EQ:
                    raise UnknownAttribute("TABLE filters support only equality")
            elif attr == "CLUSTERED":
                tok = self._next().lower()
                if tok not in ("true", "false", "0", "1"):
                    raise DslSyntaxError(f"expected boolean, got {tok!r}", self.lineno)
                value = tok in ("true", "1")
            else:
                value = self._number()
            clauses.append(FilterClause(attr, op, value))
            if self._peek() and self._peek().upper() == "AND":
                self._next()
                continue
            break
        return tuple(clauses)


# --- compilation ---

@dataclass
class CompileContext:
    candidates: list[IndexCandidate]
    catalog: Catalog
    basecosts: dict[str, float]  # statement id -> cost under the baseline
    statement_ids: list[str]  # all workload statement ids, in order
    read_ids: set[str]
    update_rows: dict[tuple[str, str], float]
    update_base: dict[str, float]
    update_targets: dict[str, str]


def measure(candidate: IndexCandidate, cat: Catalog, term: str) -> float:
    if term == "SIZE":
        return float(candidate.size_bytes)
    if term == "WIDTH":
        return float(candidate.row_width_bytes(cat))
    return 1.0  # ONE


def _filter_value(candidate: IndexCandidate, cat: Catalog, attr: str):
    if attr == "TABLE":
        return candidate.table
    if attr == "SIZE":
        return float(candidate.size_bytes)
    if attr == "WIDTH":
        return float(candidate.row_width_bytes(cat))
    if attr == "COLS":
        return float(candidate.width)
    return candidate.clustered  # CLUSTERED


def matches_filters(candidate: IndexCandidate, cat: Catalog, filters) -> bool:
    for clause in filters:
        value = _filter_value(candidate, cat, clause.attr)
        if clause.attr == "TABLE":
            if value != clause.value:
                return False
        elif clause.attr == "CLUSTERED":
            if bool(value) != bool(clause.value):
                return False
        else:
            ok = {
                LE: value <= clause.value,
                "<": value < clause.value,
                EQ: value == clause.value,
                GE: value >= clause.value,
                ">": value > clause.value,
            }[clause.op]
            if not ok:
                return False
    return True


def compile_constraint(ast: ConstraintAst, ctx: CompileContext) -> list[LinConstraint]:
    if ast.soft:
        raise NonLinearConstruct(f"{ast.cid}: soft constraints are scalarized, not compiled")
    if ast.kind == "generator":
        return _compile_generator(ast, ctx)
    if ast.kind == "query_cost":
        return [_compile_query_cost(ast, ast.query_ref, ctx)]
    return _compile_aggregate(ast, ctx, extra_filters=())


def _compile_generator(ast: ConstraintAst, ctx: CompileContext) -> list[LinConstraint]:
    body = ast.body
    out = []
    if ast.domain == "W":
        if ast.filters:
            raise UnknownAttribute("filters are not supported on W generators")
        if body.kind != "query_cost":
            raise NonLinearConstruct("W generators support only COST assertions")
        for qid in ctx.statement_ids:
            out.append(_compile_query_cost(body, qid, ctx, origin=f"{ast.cid}[{qid}]"))
        return out
    if body.kind == "query_cost":
        raise DslSyntaxError("COST assertions require a W generator or a literal id", 0)
    if ast.domain == "TABLES":
        for table in (t.name for t in ctx.catalog.tables):
            extra = (FilterClause("TABLE", EQ, table),) + ast.filters
            out.extend(
                _compile_aggregate(body, ctx, extra_filters=extra, origin=f"{ast.cid}[{table}]")
            )
        return out
    # S: one instance per candidate
    for a in ctx.candidates:
        if not matches_filters(a, ctx.catalog, ast.filters):
            continue
        extra = (FilterClause("TABLE", EQ, a.table),)
        scoped = [c for c in ctx.candidates if c.id == a.id]
        out.extend(
            _compile_aggregate(body, ctx, extra_filters=ast.filters, origin=f"{ast.cid}[{a.id}]",
                               scope_override=scoped)
        )
    return out


def _compile_query_cost(ast, qid: str, ctx: CompileContext, origin=None) -> LinConstraint:
    if qid not in ctx.basecosts:
        raise StaleState(f"query-cost constraint references unknown statement {qid!r}")
    cap = ast.factor * ctx.basecosts[qid]
    z_terms = []
    rhs = cap
    if qid in ctx.update_base:  # update statement: include maintenance terms
        rhs -= ctx.update_base[qid]
        target = ctx.update_targets[qid]
        for a in ctx.candidates:
            if a.table == target:
                z_terms.append((a.id, ctx.update_rows[(a.id, qid)]))
    return LinConstraint(
        z_coeffs=tuple(sorted(z_terms)),
        cmp=LE,
        rhs=rhs,
        origin=origin or ast.cid,
        query=qid,
    )


def _compile_aggregate(
    ast: ConstraintAst,
    ctx: CompileContext,
    extra_filters=(),
    origin=None,
    scope_override=None,
) -> list[LinConstraint]:
    origin = origin or ast.cid
    filters = tuple(extra_filters) + ast.filters
    scope = scope_override if scope_override is not None else ctx.candidates
    scope = [a for a in scope if matches_filters(a, ctx.catalog, filters)]
    weights = {a.id: measure(a, ctx.catalog, ast.term) for a in scope}
    cmp, bound = ast.cmp, ast.bound

    if ast.aggregate in ("SUM", "COUNT"):
        if ast.aggregate == "COUNT":
            weights = {aid: 1.0 for aid in weights}
        integral = ast.term == "ONE" or ast.aggregate == "COUNT"
        cmp, bound = _close_comparison(cmp, bound, integral)
        if not scope:
            return _trivial(0.0, cmp, bound, origin)
        return [
            LinConstraint(
                z_coeffs=tuple(sorted(weights.items())),
                cmp=cmp,
                rhs=bound,
                origin=origin,
            )
        ]

    # MIN / MAX: universal direction removes offending candidates, existential
    # direction requires at least one selected candidate in the qualifying set
    out = []
    if ast.aggregate == "MAX":
        if cmp in (LE, "<"):
            bad = [a for a in scope if (weights[a.id] > bound if cmp == LE else weights[a.id] >= bound)]
            out.extend(_forbid(a, origin) for a in bad)
            if not scope:
                warnings.warn(f"{origin}: empty candidate scope", EmptyScopeWarning)
            return out
        if cmp in (GE, ">"):
            good = [a for a in scope if (weights[a.id] >= bound if cmp == GE else weights[a.id] > bound)]
            return _require_one(good, origin)
        # equality: nothing above the bound, at least one exactly at it
        bad = [a for a in scope if weights[a.id] > bound]
        out.extend(_forbid(a, origin) for a in bad)
        out.extend(_require_one([a for a in scope if weights[a.id] == bound], origin))
        return out
    # MIN
    if cmp in (GE, ">"):
        bad = [a for a in scope if (weights[a.id] < bound if cmp == GE else weights[a.id] <= bound)]
        out.extend(_forbid(a, origin) for a in bad)
        if not scope:
            warnings.warn(f"{origin}: empty candidate scope", EmptyScopeWarning)
        return out
    if cmp in (LE, "<"):
        good = [a for a in scope if (weights[a.id] <= bound if cmp == LE else weights[a.id] < bound)]
        return _require_one(good, origin)
    bad = [a for a in scope if weights[a.id] < bound]
    out.extend(_forbid(a, origin) for a in bad)
    out.extend(_require_one([a for a in scope if weights[a.id] == bound], origin))
    return out


def _close_comparison(cmp: str, bound: float, integral: bool):
    """Strict comparisons become closed: exact over integer measures, widened otherwise."""
    if cmp == "<":
        return (LE, bound - 1.0) if integral else (LE, bound)
    if cmp == ">":
        return (GE, bound + 1.0) if integral else (GE, bound)
    return cmp, bound


def _forbid(candidate: IndexCandidate, origin: str) -> LinConstraint:
    return LinConstraint(
        z_coeffs=((candidate.id, 1.0),), cmp=EQ, rhs=0.0, origin=origin
    )


def _require_one(scope, origin: str) -> list[LinConstraint]:
    if not scope:
        err = InfeasibleProblem(
            f"constraint {origin} requires a candidate that does not exist", report=[origin]
        )
        err.module = "bipmodel"
        raise err
    return [
        LinConstraint(
            z_coeffs=tuple(sorted((a.id, 1.0) for a in scope)),
            cmp=GE,
            rhs=1.0,
            origin=origin,
        )
    ]


def _trivial(lhs: float, cmp: str, rhs: float, origin: str) -> list[LinConstraint]:
    holds = {LE: lhs <= rhs, GE: lhs >= rhs, EQ: lhs == rhs}[cmp]
    if holds:
        warnings.warn(f"{origin}: trivially satisfied (empty scope)", EmptyScopeWarning)
        return []
    err = InfeasibleProblem(f"constraint {origin} is trivially unsatisfiable", report=[origin])
    err.module = "bipmodel"
    raise err


def build_soft_terms(asts: list[ConstraintAst], ctx: CompileContext) -> list[SoftTerm]:
    out = []
    for ast in asts:
        if not ast.soft:
            continue
        out.extend(_soft_terms_for(ast, ctx))
    return out


def _soft_terms_for(ast: ConstraintAst, ctx: CompileContext) -> list[SoftTerm]:
    if ast.kind == "generator":
        raise NonLinearConstruct(f"{ast.cid}: soft generators are not supported")
    if ast.kind == "query_cost":
        qid = ast.query_ref
        if qid not in ctx.basecosts:
            raise StaleState(f"soft constraint references unknown statement {qid!r}")
        cap = ast.factor * ctx.basecosts[qid]
        z_terms = []
        offset = -cap
        if qid in ctx.update_base:
            offset += ctx.update_base[qid]
            target = ctx.update_targets[qid]
            z_terms = [
                (a.id, ctx.update_rows[(a.id, qid)])
                for a in ctx.candidates
                if a.table == target
            ]
        return [SoftTerm(ast.cid, ast.cid, tuple(sorted(z_terms)), offset, query=qid, query_coeff=1.0)]
    if ast.aggregate not in ("SUM", "COUNT"):
        raise NonLinearConstruct(f"{ast.cid}: soft MIN/MAX constraints are not linear")
    scope = [a for a in ctx.candidates if matches_filters(a, ctx.catalog, ast.filters)]
    weights = {
        a.id: (1.0 if ast.aggregate == "COUNT" else measure(a, ctx.catalog, ast.term))
        for a in scope
    }
    coeffs = tuple(sorted(weights.items()))
    if ast.cmp in (LE, "<", GE, ">"):
        sign = 1.0 if ast.cmp in (LE, "<") else -1.0
        return [
            SoftTerm(
                ast.cid, ast.cid,
                tuple((aid, sign * c) for aid, c in coeffs),
                -sign * ast.bound,
            )
        ]
    # soft equality: two one-sided violation terms of equal standing
    return [
        SoftTerm(f"{ast.cid}+", ast.cid, coeffs, -ast.bound),
        SoftTerm(f"{ast.cid}-", ast.cid, tuple((aid, -c) for aid, c in coeffs), ast.bound),
    ]


# --- scalarization ---

def scalarize(bip: BipProblem, soft_terms: list[SoftTerm], lambdas) -> BipProblem:
    """Weighted-sum objective over workload cost and soft-constraint violations."""
    weights = tuple(float(v) for v in lambdas)
    if len(weights) != len(soft_terms) + 1:
        raise WeightOutOfRange(
            f"need {len(soft_terms) + 1} weights (workload cost plus one per soft term), "
            f"got {len(weights)}"
        )
    for w in weights:
        if not (0.0 <= w <= 1.0):
            raise WeightOutOfRange(f"weight {w} outside [0, 1]")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise WeightOutOfRange(f"weights must sum to 1, got {sum(weights)}")

    lam0 = weights[0]
    blocks = []
    for b in bip.blocks:
        w = lam0 * b.weight
        for lam, term in zip(weights[1:], soft_terms):
            if term.query == b.query_id:
                w += lam * term.query_coeff
        blocks.append(QueryBlock(b.query_id, w, b.templates, b.base_weight))

    z_objective = {aid: lam0 * v for aid, v in bip.z_objective.items()}
    for lam, term in zip(weights[1:], soft_terms):
        for aid, coef in term.z_coeffs:
            z_objective[aid] = z_objective.get(aid, 0.0) + lam * coef
    constant = lam0 * bip.constant
    for lam, term in zip(weights[1:], soft_terms):
        constant += lam * term.offset

    return BipProblem(
        blocks=blocks,
        candidates=bip.candidates,
        z_objective=z_objective,
        constant=constant,
        constraints=list(bip.constraints),
        soft_terms=[],
        update_rows=bip.update_rows,
        update_base=bip.update_base,
        update_weights=bip.update_weights,
        scalarization=weights,
    )


# --- deltas ---

@dataclass
class BipDelta:
    """Change set for incremental re-solves."""

    add_candidates: list[IndexCandidate] = field(default_factory=list)
    remove_candidates: list[str] = field(default_factory=list)
    add_constraints: list[LinConstraint] = field(default_factory=list)
    remove_constraints: list[str] = field(default_factory=list)  # origin tags
    weight_changes: dict[str, float] = field(default_factory=dict)
    add_ucost: dict[tuple[str, str], float] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not (
            self.add_candidates or self.remove_candidates or self.add_constraints
            or self.remove_constraints or self.weight_changes
        )


def apply_delta(bip: BipProblem, delta: BipDelta) -> BipProblem:
    known_queries = {b.query_id for b in bip.blocks} | set(bip.update_weights)
    for qid in delta.weight_changes:
        if qid not in known_queries:
            raise StaleState(f"weight change references unknown statement {qid!r}")
    for lc in delta.add_constraints:
        if lc.query is not None and lc.query not in known_queries:
            raise StaleState(f"constraint references unknown statement {lc.query!r}")

    removed = set(delta.remove_candidates)
    candidates = [a for a in bip.candidates if a.id not in removed]
    existing = {a.id for a in candidates}
    for a in delta.add_candidates:
        if a.id not in existing:
            candidates.append(a)
            existing.add(a.id)
    candidates.sort(key=lambda a: a.id)

    update_rows = {
        k: v for k, v in bip.update_rows.items() if k[0] not in removed
    }
    update_rows.update(delta.add_ucost)

    update_weights = dict(bip.update_weights)
    blocks = []
    for b in bip.blocks:
        w = delta.weight_changes.get(b.query_id, b.base_weight)
        blocks.append(QueryBlock(b.query_id, w, b.templates, w))
    for qid in update_weights:
        if qid in delta.weight_changes:
            update_weights[qid] = delta.weight_changes[qid]

    z_objective = {a.id: 0.0 for a in candidates}
    constant = 0.0
    for qid, w in update_weights.items():
        constant += w * bip.update_base[qid]
    for (aid, qid), ucost in sorted(update_rows.items()):
        if aid in z_objective:
            z_objective[aid] += update_weights[qid] * ucost

    dropped = set(delta.remove_constraints)
    user = []
    for lc in bip.constraints:
        if lc.origin.startswith("builtin-clustered") or lc.origin in dropped:
            continue
        narrowed = _narrow_constraint(lc, existing)
        if narrowed is not None:
            user.append(narrowed)
    user.extend(delta.add_constraints)
    constraints = clustered_constraints(candidates) + user

    return BipProblem(
        blocks=blocks,
        candidates=candidates,
        z_objective=z_objective,
        constant=constant,
        constraints=constraints,
        soft_terms=list(bip.soft_terms),
        update_rows=update_rows,
        update_base=dict(bip.update_base),
        update_weights=update_weights,
        scalarization=bip.scalarization,
    )


def _narrow_constraint(lc: LinConstraint, existing_ids) -> LinConstraint | None:
    """Drop terms over removed candidates; discard constraints that become vacuous."""
    kept = tuple((aid, c) for aid, c in lc.z_coeffs if aid in existing_ids)
    if len(kept) == len(lc.z_coeffs):
        return lc
    narrowed = replace(lc, z_coeffs=kept)
    if kept or narrowed.query is not None:
        return narrowed
    lhs = 0.0
    holds = {LE: lhs <= lc.rhs, GE: lhs >= lc.rhs, EQ: lhs == lc.rhs}[lc.cmp]
    return None if holds else narrowed
