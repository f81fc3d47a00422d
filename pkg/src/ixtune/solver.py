"""Anytime exact solver for the index-selection integer program.

Strategy: branch and bound over the selection (z) variables only. For any
complete selection the plan-choice variables follow in closed form by
per-statement template minimization, so nodes never touch them explicitly.

Node lower bounds come from a Lagrangian relaxation: the links between
selection and access variables, and every user constraint except the built-in
one-clustered-per-table rule, are dualized with multipliers improved by
projected subgradient steps. The dualized problem separates into independent
per-statement template minimizations plus a per-index selection subproblem, so
a bound evaluation is linear in the size of the access-cost tables. Multipliers
are inherited from parent nodes and kept sparse.

Determinism: the search pops a fixed-size batch of best-bound nodes per round
and applies results in node order, so the trajectory (and therefore every
reported number) is independent of the worker-thread count. Incumbent ties
within absolute 1e-9 are broken lexicographically by candidate id.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

from . import bipmodel
from .bipmodel import BipDelta, BipProblem, LinConstraint, LE, GE, EQ
from .errors import InfeasibleProblem
from .whatif import NO_INDEX

logger = logging.getLogger(__name__)

INF = math.inf
VALUE_TOL = 1e-9  # absolute tolerance for objective comparisons
GAP_EPSILON = 1e-12  # guard for the gap denominator


class SolveStatus(Enum):
    OPTIMAL = "OPTIMAL"
    GAP_REACHED = "GAP_REACHED"
    TIME_LIMIT = "TIME_LIMIT"
    INFEASIBLE = "INFEASIBLE"


@dataclass(frozen=True)
class ProgressRecord:
    elapsed_ms: float
    incumbent: float
    lower_bound: float
    gap: float
    nodes_explored: int

    def to_dict(self) -> dict:
        return {
            "elapsed_ms": self.elapsed_ms,
            "incumbent": self.incumbent,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "nodes_explored": self.nodes_explored,
        }


@dataclass
class SolverOptions:
    gap_threshold: float = 0.05
    time_limit: float | None = None  # seconds
    threads: int = 1
    max_subgradient_steps: int = 30
    root_subgradient_steps: int | None = None  # default: 4x the per-node budget
    node_batch: int = 8
    progress: object | None = None  # callable(ProgressRecord)
    node_observer: object | None = None  # callable(fixed_ids, banned_ids, bound)
    stop_event: threading.Event | None = None
    max_nodes: int | None = None


@dataclass
class Solution:
    status: SolveStatus
    objective: float
    lower_bound: float
    gap: float
    selected: tuple[str, ...]  # candidate ids, sorted
    nodes_explored: int
    elapsed_ms: float
    plan_choices: dict = field(default_factory=dict)  # query id -> (template, {table: access id})


@dataclass
class FeasibilityResult:
    feasible: bool
    witness: tuple[str, ...] | None
    report: list[str]


def compute_gap(objective: float, lower_bound: float) -> float:
    return (objective - lower_bound) / max(objective, GAP_EPSILON)


# --- internal problem views ---

class _Slot:
    __slots__ = ("table", "entries", "lookup")

    def __init__(self, table: str):
        self.table = table
        self.entries: list[tuple[float, int]] = []  # (access cost, candidate index); -1 = scan
        self.lookup: dict[int, float] = {}

    def insert(self, gamma: float, ci: int):
        bisect.insort(self.entries, (gamma, ci))
        self.lookup[ci] = gamma

    def drop(self, removed: set[int]):
        self.entries = [(g, ci) for g, ci in self.entries if ci not in removed]
        for ci in list(self.lookup):
            if ci in removed:
                del self.lookup[ci]


class _TView:
    __slots__ = ("internal", "slots")

    def __init__(self, internal: float, slots: list[_Slot]):
        self.internal = internal
        self.slots = slots


class _Block:
    __slots__ = ("query_id", "weight", "tviews", "cands")

    def __init__(self, query_id: str, weight: float, tviews: list[_TView]):
        self.query_id = query_id
        self.weight = weight
        self.tviews = tviews
        self.cands: list[int] = []  # candidate indices on referenced tables


@dataclass
class _DualCons:
    """Internal constraint view, normalized by its largest coefficient so that
    subgradient components stay O(1) across mixed scales."""

    zc: list[tuple[int, float]]
    kind: str  # le | ge | eq
    rhs: float
    block_index: int | None
    qcoef: float  # coefficient of the linked statement's plan-cost expression
    origin: str
    source: LinConstraint
    zc_map: dict[int, float] = field(default_factory=dict)


class SolverState:
    """Reusable solver state: problem views, multipliers and the incumbent.

    Kept across re-solves so that deltas and scalarization sweeps warm-start.
    """

    def __init__(self, bip: BipProblem):
        self.bip = bip
        self.ids: list[str] = [a.id for a in bip.candidates]
        self.index: dict[str, int] = {aid: i for i, aid in enumerate(self.ids)}
        self.cand = list(bip.candidates)
        self.removed: set[int] = set()
        self.base_w: list[float] = [bip.z_objective.get(aid, 0.0) for aid in self.ids]
        self.sizes: list[float] = [float(a.size_bytes) for a in self.cand]
        self.blocks: list[_Block] = []
        self.block_of_query: dict[str, int] = {}
        self._build_blocks()
        self._build_groups()
        self._build_constraints()
        self.link_mult: dict[tuple[int, int, int], dict[int, float]] = {}
        self.benefit: dict[int, float] = {}
        self.branch_order: list[int] = []
        self._compute_benefits()
        self.incumbent_hint: tuple[str, ...] | None = None
        self.last_exact: bool = False

    # --- construction ---

    def _build_blocks(self):
        self.blocks = []
        self.block_of_query = {}
        for b in self.bip.blocks:
            tviews = []
            for template in b.templates.templates:
                slots = []
                for tslot in template.slots:
                    slot = _Slot(tslot.table)
                    entries = []
                    for aid, gamma in tslot.access_costs.items():
                        if aid == NO_INDEX:
                            ci = -1
                        else:
                            ci = self.index.get(aid)
                            if ci is None:
                                continue  # cache entry for a candidate this problem dropped
                        entries.append((gamma, ci))
                        slot.lookup[ci] = gamma
                    entries.sort()
                    slot.entries = entries
                    slots.append(slot)
                tviews.append(_TView(template.internal_cost, slots))
            blk = _Block(b.query_id, b.weight, tviews)
            tables = set(b.templates.tables)
            blk.cands = [i for i, a in enumerate(self.cand) if a.table in tables]
            self.block_of_query[b.query_id] = len(self.blocks)
            self.blocks.append(blk)

    def _build_groups(self):
        groups: dict[str, list[int]] = {}
        self.nonclustered: list[int] = []
        for i, a in enumerate(self.cand):
            if i in self.removed:
                continue
            if a.clustered:
                groups.setdefault(a.table, []).append(i)
            else:
                self.nonclustered.append(i)
        self.clustered_groups = [groups[t] for t in sorted(groups)]
        self.grouped = {ci for g in self.clustered_groups for ci in g}

    def _build_constraints(self, carry: dict | None = None):
        self.prop_cons: list[_DualCons] = []
        self.dual_cons: list[_DualCons] = []
        self.cons_mult: list[float] = []
        for lc in self.bip.constraints:
            raw = [
                (self.index[aid], coef)
                for aid, coef in lc.z_coeffs
                if aid in self.index and self.index[aid] not in self.removed
            ]
            kind = {LE: "le", GE: "ge", EQ: "eq"}[lc.cmp]
            bi = self.block_of_query.get(lc.query) if lc.query is not None else None
            scale = max([abs(c) for _ci, c in raw] + [abs(lc.rhs), 1.0])
            zc = [(ci, c / scale) for ci, c in raw]
            qcoef = (1.0 / scale) if bi is not None else 0.0
            dc = _DualCons(zc, kind, lc.rhs / scale, bi, qcoef, lc.origin, lc, dict(zc))
            self.prop_cons.append(dc)
            if lc.origin.startswith("builtin-clustered"):
                continue  # handled natively by the selection subproblem
            if len(zc) <= 1 and bi is None:
                continue  # singleton constraints are resolved by propagation
            self.dual_cons.append(dc)
            self.cons_mult.append(carry.get(_cons_key(lc), 0.0) if carry else 0.0)

    def _compute_benefits(self, only: list[int] | None = None):
        targets = only if only is not None else [i for i in range(len(self.cand)) if i not in self.removed]
        if only is None:
            self.benefit = {}
        cost0 = {}
        for bi, blk in enumerate(self.blocks):
            cost0[bi] = self._block_cost_restricted(bi, frozenset())
        target_set = set(targets)
        for bi, blk in enumerate(self.blocks):
            base = cost0[bi]
            for ci in blk.cands:
                if ci not in target_set:
                    continue
                with_ci = self._block_cost_with_single(bi, ci)
                gain = base - with_ci
                if gain > 0.0:
                    self.benefit[ci] = self.benefit.get(ci, 0.0) + blk.weight * gain
        for ci in targets:
            self.benefit.setdefault(ci, 0.0)
        self.branch_order = sorted(
            (ci for ci in range(len(self.cand)) if ci not in self.removed),
            key=lambda ci: (-self.benefit.get(ci, 0.0), self.ids[ci]),
        )

    # --- per-block evaluations ---

    def _block_cost_restricted(self, bi: int, allowed: frozenset[int]) -> float:
        """Cheapest plan when only ``allowed`` candidates (plus scans) exist."""
        best = INF
        for tv in self.blocks[bi].tviews:
            acc = 0.0
            dead = False
            for slot in tv.slots:
                m = slot.lookup.get(-1, INF)
                for ci in allowed:
                    v = slot.lookup.get(ci)
                    if v is not None and v < m:
                        m = v
                if m == INF:
                    dead = True
                    break
                acc += m
            if not dead:
                acc += tv.internal
                if acc < best:
                    best = acc
        return best

    def _block_cost_with_single(self, bi: int, ci: int) -> float:
        best = INF
        for tv in self.blocks[bi].tviews:
            acc = 0.0
            dead = False
            for slot in tv.slots:
                m = slot.lookup.get(-1, INF)
                v = slot.lookup.get(ci)
                if v is not None and v < m:
                    m = v
                if m == INF:
                    dead = True
                    break
                acc += m
            if not dead:
                acc += tv.internal
                if acc < best:
                    best = acc
        return best

    def _block_min_cost(self, bi: int, banned: set[int]) -> float:
        """Cheapest plan over every non-banned access (optimistic)."""
        best = INF
        for tv in self.blocks[bi].tviews:
            acc = 0.0
            dead = False
            for slot in tv.slots:
                m = INF
                for g, ci in slot.entries:
                    if ci not in banned:
                        m = g
                        break
                if m == INF:
                    dead = True
                    break
                acc += m
            if not dead:
                acc += tv.internal
                if acc < best:
                    best = acc
        return best

    def config_plan_choices(self, selected_ids) -> dict:
        """Closed-form optimal template and access choice per statement."""
        allowed = frozenset(self.index[aid] for aid in selected_ids if aid in self.index)
        out = {}
        for bi, blk in enumerate(self.blocks):
            best = INF
            choice = None
            for ki, tv in enumerate(blk.tviews):
                acc = 0.0
                picks = {}
                dead = False
                for slot in tv.slots:
                    m = slot.lookup.get(-1, INF)
                    pick = -1
                    for ci in allowed:
                        v = slot.lookup.get(ci)
                        if v is not None and v < m:
                            m = v
                            pick = ci
                    if m == INF:
                        dead = True
                        break
                    acc += m
                    picks[slot.table] = pick
                if dead:
                    continue
                acc += tv.internal
                if acc < best:
                    best = acc
                    choice = (ki, {
                        t: (NO_INDEX if ci < 0 else self.ids[ci]) for t, ci in picks.items()
                    })
            out[blk.query_id] = choice
        return out

    # --- incremental rebinding ---

    def rebind(self, new_bip: BipProblem):
        """Point the state at a modified problem, reusing every shared structure."""
        old_cons = {
            _cons_key(dc.source): self.cons_mult[j] for j, dc in enumerate(self.dual_cons)
        }
        old_ids = set(self.ids) - {self.ids[i] for i in self.removed}
        new_ids = {a.id for a in new_bip.candidates}
        removed_ids = old_ids - new_ids
        added = [a for a in new_bip.candidates if a.id not in self.index]
        # candidates removed by an earlier delta and re-added now
        resurrected = [
            a for a in new_bip.candidates
            if a.id in self.index and self.index[a.id] in self.removed
        ]

        self.bip = new_bip
        if removed_ids:
            removed_now = {self.index[aid] for aid in removed_ids}
            self.removed |= removed_now
            for blk in self.blocks:
                for tv in blk.tviews:
                    for slot in tv.slots:
                        slot.drop(removed_now)
            for key in list(self.link_mult):
                pen = self.link_mult[key]
                for ci in list(pen):
                    if ci in self.removed:
                        del pen[ci]
                if not pen:
                    del self.link_mult[key]
            for ci in removed_now:
                self.benefit.pop(ci, None)

        for a in added:
            ci = len(self.ids)
            self.ids.append(a.id)
            self.index[a.id] = ci
            self.cand.append(a)
            self.sizes.append(float(a.size_bytes))
            self.base_w.append(0.0)
        for a in resurrected:
            self.removed.discard(self.index[a.id])

        weight_changed = False
        uniform_scale: float | None = None
        for bi, b in enumerate(new_bip.blocks):
            old_w = self.blocks[bi].weight
            if old_w != b.weight:
                weight_changed = True
            if uniform_scale != -1.0:
                if old_w > 0.0:
                    ratio = b.weight / old_w
                    if uniform_scale is None:
                        uniform_scale = ratio
                    elif abs(ratio - uniform_scale) > 1e-12 * max(1.0, abs(uniform_scale)):
                        uniform_scale = -1.0
                elif b.weight != old_w:
                    uniform_scale = -1.0
            self.blocks[bi].weight = b.weight

        new_entries = added + resurrected
        if new_entries:
            fresh_set = {a.id for a in new_entries}
            by_table: dict[str, list[int]] = {}
            for i, a in enumerate(self.cand):
                if i not in self.removed:
                    by_table.setdefault(a.table, []).append(i)
            for bi, b in enumerate(new_bip.blocks):
                blk = self.blocks[bi]
                for ki, template in enumerate(b.templates.templates):
                    for si, tslot in enumerate(template.slots):
                        slot = blk.tviews[ki].slots[si]
                        for aid, gamma in tslot.access_costs.items():
                            if aid in fresh_set:
                                slot.insert(gamma, self.index[aid])
                blk.cands = sorted(
                    ci for t in set(b.templates.tables) for ci in by_table.get(t, ())
                )

        self.base_w = [new_bip.z_objective.get(aid, 0.0) for aid in self.ids]
        self._build_groups()
        self._build_constraints(carry=old_cons)
        if weight_changed and not new_entries and not removed_ids:
            # benefit scores only steer branching and greedy repair; on pure
            # weight changes the stale ordering remains a usable prior, so a
            # full recomputation is not worth its cost
            if uniform_scale not in (None, -1.0, 0.0):
                for ci in self.benefit:
                    self.benefit[ci] *= uniform_scale
        elif weight_changed:
            self._compute_benefits()
        elif new_entries:
            self._compute_benefits(only=[self.index[a.id] for a in new_entries])
        else:
            self.branch_order = [ci for ci in self.branch_order if ci not in self.removed]
            for ci in range(len(self.cand)):
                if ci not in self.removed and ci not in self.benefit:
                    self.benefit[ci] = 0.0

        if self.incumbent_hint is not None:
            kept = tuple(aid for aid in self.incumbent_hint if aid in new_ids)
            self.incumbent_hint = kept


def _cons_key(lc: LinConstraint):
    return (lc.origin, lc.cmp, lc.rhs, lc.z_coeffs, lc.query)


# --- Lagrangian bound ---

def _slot_min(slot: _Slot, weight: float, banned: set[int], pen: dict[int, float] | None):
    best = INF
    best_ci = None
    best_raw = 0.0
    for g, ci in slot.entries:
        if ci in banned:
            continue
        if pen and ci in pen:
            continue
        best = weight * g
        best_ci = ci
        best_raw = g
        break
    if pen:
        lookup = slot.lookup
        for ci, mu in pen.items():
            if ci in banned:
                continue
            g = lookup.get(ci)
            if g is None:
                continue
            v = weight * g + mu
            if v < best:
                best = v
                best_ci = ci
                best_raw = g
    return best, best_ci, best_raw


def _evaluate_dual(state: SolverState, fixed_in: set[int], banned: set[int],
                   link_mult, cons_mult):
    """One evaluation of the dualized problem; returns bound and argmins."""
    bound = state.bip.constant
    extra_weight: dict[int, float] = {}
    rc_adj: dict[int, float] = {}
    for j, dc in enumerate(state.dual_cons):
        lam = cons_mult[j]
        if lam == 0.0:
            continue
        m = -lam if dc.kind == "ge" else lam
        for ci, coef in dc.zc:
            rc_adj[ci] = rc_adj.get(ci, 0.0) + m * coef
        if dc.block_index is not None:
            extra_weight[dc.block_index] = extra_weight.get(dc.block_index, 0.0) + m * dc.qcoef
        bound -= m * dc.rhs
    for pen in link_mult.values():
        for ci, mu in pen.items():
            if mu:
                rc_adj[ci] = rc_adj.get(ci, 0.0) - mu

    choices = []
    for bi, blk in enumerate(state.blocks):
        weight = blk.weight + extra_weight.get(bi, 0.0)
        best = INF
        best_k = -1
        best_sel = None
        best_raw = 0.0
        for ki, tv in enumerate(blk.tviews):
            acc = weight * tv.internal
            raw = tv.internal
            sel = []
            dead = False
            for si, slot in enumerate(tv.slots):
                pen = link_mult.get((bi, ki, si))
                v, ci, g = _slot_min(slot, weight, banned, pen)
                if ci is None:
                    dead = True
                    break
                acc += v
                raw += g
                sel.append((si, ci))
            if dead:
                continue
            if acc < best:
                best, best_k, best_sel, best_raw = acc, ki, sel, raw
        bound += best
        choices.append((best_k, best_sel, best_raw))

    base_w = state.base_w
    zhat = set(fixed_in)
    for ci in fixed_in:
        bound += base_w[ci] + rc_adj.get(ci, 0.0)
    for group in state.clustered_groups:
        if any(ci in fixed_in for ci in group):
            continue
        best = 0.0
        best_ci = None
        for ci in group:
            if ci in banned:
                continue
            rc = base_w[ci] + rc_adj.get(ci, 0.0)
            if rc < best:
                best = rc
                best_ci = ci
        if best_ci is not None:
            bound += best
            zhat.add(best_ci)
    for ci in state.nonclustered:
        if ci in fixed_in or ci in banned:
            continue
        rc = base_w[ci] + rc_adj.get(ci, 0.0)
        if rc < 0.0:
            bound += rc
            zhat.add(ci)
    return bound, zhat, choices, rc_adj


def _subgradient(state: SolverState, fixed_in: set[int], banned: set[int],
                 link_mult, cons_mult, upper_bound: float | None, max_steps: int):
    """Projected subgradient ascent on the dual; returns the best bound seen.

    Step size alpha*(UB - L)/||g||^2 with alpha halved after 5 non-improving
    steps, mirroring the configured defaults; a windowed plateau cutoff stops
    climbs that no longer move the bound.
    """
    alpha = 2.0
    non_improving = 0
    best_bound = -INF
    window_anchor = -INF
    primal_sets: list[frozenset[int]] = []
    best_choices = None
    best_rc_adj: dict[int, float] = {}
    for step in range(max_steps + 1):
        bound, zhat, choices, rc_adj = _evaluate_dual(state, fixed_in, banned, link_mult, cons_mult)
        if bound > best_bound:
            best_bound = bound
            best_choices = choices
            best_rc_adj = rc_adj
            non_improving = 0
        else:
            non_improving += 1
            if non_improving >= 5:
                alpha *= 0.5
                non_improving = 0
        if step == 0 or bound >= best_bound:
            primal_sets.append(frozenset(zhat))
        if step == max_steps or alpha < 1e-4:
            break
        if step % 12 == 0:
            # plateau cutoff: the whole window moved less than rounding noise
            if best_bound - window_anchor <= 1e-7 * (1.0 + abs(best_bound)):
                break
            window_anchor = best_bound
        ub = upper_bound if upper_bound is not None else bound + abs(bound) + 1.0
        if bound >= ub:
            break

        grads_link: dict[tuple[int, int, int, int], float] = {}
        for bi, (ki, sel, _raw) in enumerate(choices):
            for si, ci in sel:
                if ci >= 0:
                    g = 1.0 - (1.0 if ci in zhat else 0.0)
                    if g:
                        grads_link[(bi, ki, si, ci)] = g
        for key, pen in link_mult.items():
            for ci, mu in pen.items():
                coord = key + (ci,)
                if coord not in grads_link and mu > 0.0 and ci in zhat:
                    grads_link[coord] = -1.0
        grads_cons = []
        for j, dc in enumerate(state.dual_cons):
            lhs = 0.0
            for ci, coef in dc.zc:
                if ci in zhat:
                    lhs += coef
            if dc.block_index is not None:
                lhs += dc.qcoef * choices[dc.block_index][2]
            g = lhs - dc.rhs
            if dc.kind == "ge":
                g = -g
            grads_cons.append(g)
        norm2 = sum(g * g for g in grads_link.values()) + sum(g * g for g in grads_cons)
        if norm2 <= 0.0:
            break
        t = alpha * (ub - bound) / norm2
        if t <= 0.0:
            break
        for (bi, ki, si, ci), g in grads_link.items():
            pen = link_mult.setdefault((bi, ki, si), {})
            nv = pen.get(ci, 0.0) + t * g
            if nv > 0.0:
                pen[ci] = nv
            elif ci in pen:
                del pen[ci]
        for j, dc in enumerate(state.dual_cons):
            nv = cons_mult[j] + t * grads_cons[j]
            cons_mult[j] = nv if dc.kind == "eq" else max(0.0, nv)
    return best_bound, primal_sets, best_choices, best_rc_adj


# --- constraint propagation ---

def _propagate(state: SolverState, fixed_in: set[int], banned: set[int]) -> bool:
    """Fixpoint bound propagation over all hard constraints; False if infeasible."""
    tol = 1e-9
    changed = True
    while changed:
        changed = False
        if fixed_in & banned:
            return False
        for dc in state.prop_cons:
            lo = hi = 0.0
            free = []
            for ci, coef in dc.zc:
                if ci in fixed_in:
                    lo += coef
                    hi += coef
                elif ci in banned:
                    continue
                elif coef >= 0:
                    hi += coef
                    free.append((ci, coef))
                else:
                    lo += coef
                    free.append((ci, coef))
            if dc.block_index is not None:
                lo += dc.qcoef * state._block_min_cost(dc.block_index, banned)
                hi += dc.qcoef * state._block_cost_restricted(dc.block_index, frozenset(fixed_in))
            if dc.kind in ("le", "eq"):
                if lo > dc.rhs + tol:
                    return False
                for ci, coef in free:
                    if coef > 0 and lo + coef > dc.rhs + tol:
                        banned.add(ci)
                        changed = True
                    elif coef < 0 and lo - coef > dc.rhs + tol:
                        fixed_in.add(ci)
                        changed = True
                if changed:
                    break
            if dc.kind in ("ge", "eq"):
                if hi < dc.rhs - tol:
                    return False
                for ci, coef in free:
                    if coef > 0 and hi - coef < dc.rhs - tol:
                        fixed_in.add(ci)
                        changed = True
                    elif coef < 0 and hi + coef < dc.rhs - tol:
                        banned.add(ci)
                        changed = True
                if changed:
                    break
    return bool(not (fixed_in & banned))


# --- feasibility ---

def _selection_feasible(state: SolverState, selected: set[int], cons=None) -> bool:
    cons = cons if cons is not None else state.prop_cons
    ids = [state.ids[ci] for ci in selected]
    for dc in cons:
        lhs = 0.0
        for ci, coef in dc.zc:
            if ci in selected:
                lhs += coef
        if dc.block_index is not None:
            lhs += dc.qcoef * state._block_cost_restricted(dc.block_index, frozenset(selected))
        if dc.kind == "le" and lhs > dc.rhs + 1e-9:
            return False
        if dc.kind == "ge" and lhs < dc.rhs - 1e-9:
            return False
        if dc.kind == "eq" and abs(lhs - dc.rhs) > 1e-9:
            return False
    return True


def _repair(state: SolverState, base: set[int], fixed_in: set[int], banned: set[int]):
    """Greedy repair of a tentative selection toward hard feasibility."""
    selected = (set(base) | set(fixed_in)) - set(banned) - state.removed
    for group in state.clustered_groups:
        members = [ci for ci in group if ci in selected]
        if len(members) > 1:
            members.sort(key=lambda ci: (ci not in fixed_in, -state.benefit.get(ci, 0.0), state.ids[ci]))
            for ci in members[1:]:
                if ci in fixed_in:
                    return None
                selected.discard(ci)
    for _round in range(4):
        ok = True
        for dc in state.prop_cons:
            if dc.block_index is not None:
                continue
            lhs = sum(coef for ci, coef in dc.zc if ci in selected)
            if dc.kind in ("le", "eq") and lhs > dc.rhs + 1e-9:
                ok = False
                removable = sorted(
                    (ci for ci, coef in dc.zc if ci in selected and ci not in fixed_in and coef > 0),
                    key=lambda ci: (state.benefit.get(ci, 0.0), state.ids[ci]),
                )
                for ci in removable:
                    selected.discard(ci)
                    lhs -= dc.zc_map[ci]
                    if lhs <= dc.rhs + 1e-9:
                        break
                else:
                    return None
            if dc.kind in ("ge", "eq") and lhs < dc.rhs - 1e-9:
                ok = False
                addable = sorted(
                    (ci for ci, coef in dc.zc
                     if ci not in selected and ci not in banned and ci not in state.removed and coef > 0),
                    key=lambda ci: (-state.benefit.get(ci, 0.0), state.ids[ci]),
                )
                for ci in addable:
                    selected.add(ci)
                    lhs += dc.zc_map[ci]
                    if lhs >= dc.rhs - 1e-9:
                        break
                else:
                    return None
        if ok:
            break
    return selected


def _find_witness(state: SolverState, cons) -> set[int] | None:
    """Find any selection satisfying ``cons``, or None. Complete search fallback."""
    for attempt in (set(), _repair_under(state, set(), cons)):
        if attempt is not None and _selection_feasible(state, attempt, cons):
            return attempt
    # depth-first complete search with propagation
    saved = state.prop_cons
    state.prop_cons = cons
    try:
        stack = [(set(), set(state.removed))]
        while stack:
            fixed, banned = stack.pop()
            if not _propagate(state, fixed, banned):
                continue
            if _selection_feasible(state, fixed, cons):
                return fixed
            free = next(
                (ci for ci in state.branch_order if ci not in fixed and ci not in banned),
                None,
            )
            if free is None:
                continue
            stack.append((fixed, banned | {free}))
            stack.append((fixed | {free}, banned))
        return None
    finally:
        state.prop_cons = saved


def _repair_under(state, base, cons):
    saved = state.prop_cons
    state.prop_cons = cons
    try:
        return _repair(state, base, set(), set(state.removed))
    finally:
        state.prop_cons = saved


def check_feasibility(bip: BipProblem, state: SolverState | None = None) -> FeasibilityResult:
    """Decide whether any selection satisfies all hard constraints.

    On infeasibility the report names a greedily-minimal subset of user
    constraints whose removal restores feasibility.
    """
    state = state or SolverState(bip)
    witness = _find_witness(state, state.prop_cons)
    if witness is not None:
        return FeasibilityResult(True, tuple(sorted(state.ids[ci] for ci in witness)), [])

    builtin = [dc for dc in state.prop_cons if dc.origin.startswith("builtin-clustered")]
    user = [dc for dc in state.prop_cons if not dc.origin.startswith("builtin-clustered")]
    removed: list[_DualCons] = []
    remaining = list(user)
    while _find_witness(state, remaining + builtin) is None:
        single = None
        for c in remaining:
            rest = [d for d in remaining if d is not c]
            if _find_witness(state, rest + builtin) is not None:
                single = c
                break
        if single is not None:
            removed.append(single)
            remaining.remove(single)
            break
        if not remaining:
            break
        removed.append(remaining.pop(0))
    for c in list(removed):
        if _find_witness(state, remaining + [c] + builtin) is not None:
            remaining.append(c)
            removed.remove(c)
    report = [c.origin for c in removed]
    return FeasibilityResult(False, None, report)


# --- public relaxation handle ---

class RelaxedBound:
    """Admissible lower-bounding procedure derived from the problem's relaxation."""

    def __init__(self, state: SolverState):
        self.state = state
        self.link_mult: dict = {}
        self.cons_mult = [0.0] * len(state.dual_cons)

    def bound(self, fixed_in=(), fixed_out=(), steps: int = 0,
              upper_bound: float | None = None) -> float:
        fin = {self.state.index[a] for a in fixed_in}
        fout = {self.state.index[a] for a in fixed_out} | self.state.removed
        value, _sets, _choices, _rc = _subgradient(
            self.state, fin, fout, self.link_mult, self.cons_mult, upper_bound, steps
        )
        return value


def relax(bip: BipProblem) -> RelaxedBound:
    return RelaxedBound(SolverState(bip))


# --- branch and bound ---

@dataclass
class _Node:
    nid: int
    fixed_in: frozenset[int]
    banned: frozenset[int]
    bound: float
    link_mult: dict
    cons_mult: list[float]


class _Incumbent:
    def __init__(self):
        self.objective = INF
        self.ids: tuple[str, ...] | None = None
        self.set: frozenset[int] = frozenset()

    def offer(self, objective: float, ids: tuple[str, ...], int_set: frozenset[int]) -> bool:
        if self.ids is None or objective < self.objective - VALUE_TOL:
            self.objective, self.ids, self.set = objective, ids, int_set
            return True
        if abs(objective - self.objective) <= VALUE_TOL and ids < self.ids:
            self.objective, self.ids, self.set = objective, ids, int_set
            return True
        return False


def solve(bip: BipProblem, options: SolverOptions | None = None,
          state: SolverState | None = None,
          explore_only: list[str] | None = None) -> Solution:
    """Branch-and-bound solve.

    ``explore_only`` restricts the search to subtrees that select at least one
    of the named candidates; the caller must guarantee (and seed via the
    incumbent hint) that the complementary subspace cannot beat the incumbent.
    Used by add-only incremental re-solves, where the previous exact solve
    certifies every configuration without the new candidates.
    """
    opts = options or SolverOptions()
    start = time.perf_counter()
    if state is None:
        state = SolverState(bip)
    elif state.bip is not bip:
        state.rebind(bip)

    feas = check_feasibility(bip, state)
    if not feas.feasible:
        raise InfeasibleProblem(
            "hard constraints admit no index configuration", report=feas.report
        )

    incumbent = _Incumbent()
    offered: set[frozenset[int]] = set()

    def try_selection(int_set: set[int]) -> bool:
        key = frozenset(int_set)
        if key in offered:
            return False
        offered.add(key)
        if not _selection_feasible(state, int_set):
            return False
        ids = tuple(sorted(state.ids[ci] for ci in int_set))
        objective = bipmodel.config_objective(bip, ids)
        return incumbent.offer(objective, ids, key)

    root_fixed: set[int] = set()
    root_banned: set[int] = set(state.removed)
    if not _propagate(state, root_fixed, root_banned):
        raise InfeasibleProblem("hard constraints admit no index configuration", report=[])

    # seed the incumbent: previous solution, feasibility witness, greedy build
    # (skipped when a hinted incumbent is already in place)
    hinted = False
    if state.incumbent_hint is not None:
        hint = {state.index[aid] for aid in state.incumbent_hint if aid in state.index}
        hinted = try_selection(hint - state.removed)
    try_selection({state.index[aid] for aid in feas.witness})
    if not hinted:
        greedy = _greedy_selection(state, root_fixed, root_banned)
        if greedy is not None:
            try_selection(greedy)

    # inherited multipliers were tuned for a different problem; fall back to a
    # zero start whenever that already bounds at least as well, and shorten
    # the root climb when the inherited start is already converged
    root_steps = opts.root_subgradient_steps
    if root_steps is None:
        root_steps = 4 * opts.max_subgradient_steps
    if state.link_mult or any(state.cons_mult):
        inherited, _s, _c, _r = _evaluate_dual(
            state, root_fixed, root_banned, state.link_mult, state.cons_mult
        )
        zero_cons = [0.0] * len(state.cons_mult)
        fresh_bound, _s, _c, _r = _evaluate_dual(
            state, root_fixed, root_banned, {}, zero_cons
        )
        if fresh_bound >= inherited:
            state.link_mult = {}
            state.cons_mult = zero_cons
        elif opts.root_subgradient_steps is None:
            root_steps = opts.max_subgradient_steps

    node_counter = itertools.count()
    frontier: list[tuple[float, int, _Node]] = []
    root_nid = -1
    if explore_only is None:
        root = _Node(next(node_counter), frozenset(root_fixed), frozenset(root_banned),
                     -INF, state.link_mult, state.cons_mult)
        root_nid = root.nid
        frontier.append((-INF, root.nid, root))
    else:
        # one subtree per named candidate, each forcing it into the selection
        for aid in sorted(explore_only):
            ci = state.index.get(aid)
            if ci is None or ci in state.removed:
                continue
            fixed = set(root_fixed) | {ci}
            banned = set(root_banned)
            if not _propagate(state, fixed, banned):
                continue
            node = _Node(next(node_counter), frozenset(fixed), frozenset(banned),
                         -INF, state.link_mult, state.cons_mult)
            heapq.heappush(frontier, (-INF, node.nid, node))
    nodes_explored = 0
    last_emit: tuple[float, float] | None = None
    status = SolveStatus.OPTIMAL
    global_lb = -INF

    def emit(force=False):
        nonlocal last_emit
        if opts.progress is None or incumbent.ids is None:
            return
        lb = min(global_lb, incumbent.objective)
        gap = max(0.0, compute_gap(incumbent.objective, lb))
        key = (incumbent.objective, lb)
        if not force and last_emit == key:
            return
        last_emit = key
        opts.progress(ProgressRecord(
            elapsed_ms=(time.perf_counter() - start) * 1000.0,
            incumbent=incumbent.objective,
            lower_bound=lb,
            gap=gap,
            nodes_explored=nodes_explored,
        ))

    def process(node: _Node):
        link = {k: dict(v) for k, v in node.link_mult.items()}
        cons = list(node.cons_mult)
        ub = incumbent.objective if incumbent.ids is not None else None
        steps = root_steps if node.nid == root_nid else opts.max_subgradient_steps
        bound, primal_sets, _choices, rc_adj = _subgradient(
            state, set(node.fixed_in), set(node.banned), link, cons, ub, steps,
        )
        # ties are pruned (standard rule): anything strictly better than the
        # incumbent beyond float accumulation noise is never cut off
        return node, max(node.bound, bound), bound, rc_adj, link, cons, primal_sets

    executor = ThreadPoolExecutor(max_workers=opts.threads) if opts.threads > 1 else None
    try:
        while frontier:
            if opts.stop_event is not None and opts.stop_event.is_set():
                status = SolveStatus.TIME_LIMIT
                break
            if opts.time_limit is not None and time.perf_counter() - start > opts.time_limit:
                status = SolveStatus.TIME_LIMIT
                break
            if opts.max_nodes is not None and nodes_explored >= opts.max_nodes:
                status = SolveStatus.TIME_LIMIT
                break

            batch = []
            while frontier and len(batch) < opts.node_batch:
                key, _nid, node = heapq.heappop(frontier)
                if incumbent.ids is not None and key >= incumbent.objective:
                    continue
                batch.append(node)
            if not batch:
                if frontier:
                    continue
                break

            if executor is not None:
                results = list(executor.map(process, batch))
            else:
                results = [process(node) for node in batch]
            results.sort(key=lambda r: r[0].nid)

            for node, bound, eval_safe, rc_adj, link, cons, primal_sets in results:
                nodes_explored += 1
                if node.nid == root_nid:
                    # keep the root's improved multipliers for future warm starts
                    state.link_mult = link
                    state.cons_mult = cons
                if opts.node_observer is not None:
                    opts.node_observer(
                        tuple(sorted(state.ids[ci] for ci in node.fixed_in)),
                        tuple(sorted(state.ids[ci] for ci in node.banned if ci not in state.removed)),
                        bound,
                    )
                for pset in primal_sets:
                    repaired = _repair(state, set(pset), set(node.fixed_in), set(node.banned))
                    if repaired is not None:
                        try_selection(repaired)
                try_selection(set(node.fixed_in))
                if incumbent.ids is not None and bound >= incumbent.objective:
                    continue
                fixed = set(node.fixed_in)
                banned = set(node.banned)
                if incumbent.ids is not None:
                    # reduced-cost fixing: candidates whose dual reduced cost
                    # alone pushes the bound past the incumbent are decided
                    ub_val = incumbent.objective
                    for ci in state.nonclustered:
                        if ci in fixed or ci in banned:
                            continue
                        rc = state.base_w[ci] + rc_adj.get(ci, 0.0)
                        if rc >= 0.0:
                            if eval_safe + rc >= ub_val:
                                banned.add(ci)
                        elif eval_safe - rc >= ub_val:
                            fixed.add(ci)
                    if (fixed != set(node.fixed_in) or banned != set(node.banned)) and \
                            not _propagate(state, fixed, banned):
                        continue
                branch = next(
                    (ci for ci in state.branch_order
                     if ci not in fixed and ci not in banned),
                    None,
                )
                if branch is None:
                    try_selection(set(fixed))
                    continue
                for include in (True, False):
                    cfixed = set(fixed)
                    cbanned = set(banned)
                    (cfixed if include else cbanned).add(branch)
                    if not _propagate(state, cfixed, cbanned):
                        continue
                    child = _Node(next(node_counter), frozenset(cfixed), frozenset(cbanned),
                                  bound, link, cons)
                    heapq.heappush(frontier, (bound, child.nid, child))

            global_lb = min((key for key, _n, _node in frontier), default=incumbent.objective)
            emit()
            if incumbent.ids is not None and global_lb >= incumbent.objective:
                frontier.clear()  # nothing left can improve on the incumbent
                break
            if (
                opts.gap_threshold > 0.0
                and incumbent.ids is not None
                and compute_gap(incumbent.objective, min(global_lb, incumbent.objective)) <= opts.gap_threshold
            ):
                status = SolveStatus.GAP_REACHED
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=False)

    if incumbent.ids is None:
        raise InfeasibleProblem("no feasible configuration encountered", report=[])

    elapsed_ms = (time.perf_counter() - start) * 1000.0
    if status is SolveStatus.OPTIMAL or not frontier:
        status = SolveStatus.OPTIMAL
        lower = incumbent.objective
        gap = 0.0
    else:
        lower = min(global_lb, incumbent.objective)
        gap = max(0.0, compute_gap(incumbent.objective, lower))

    state.incumbent_hint = incumbent.ids
    state.last_exact = status is SolveStatus.OPTIMAL
    solution = Solution(
        status=status,
        objective=incumbent.objective,
        lower_bound=lower,
        gap=gap,
        selected=incumbent.ids,
        nodes_explored=nodes_explored,
        elapsed_ms=elapsed_ms,
        plan_choices=state.config_plan_choices(incumbent.ids),
    )
    if opts.progress is not None:
        opts.progress(ProgressRecord(
            elapsed_ms=elapsed_ms,
            incumbent=solution.objective,
            lower_bound=solution.lower_bound,
            gap=solution.gap,
            nodes_explored=nodes_explored,
        ))
    logger.debug(
        "solve finished: status=%s objective=%s nodes=%d", status.value,
        solution.objective, nodes_explored,
    )
    return solution


def _greedy_selection(state: SolverState, fixed_in: set[int], banned: set[int]):
    """Initial incumbent: repeatedly add the candidate with the best net
    benefit-to-size ratio while staying feasible."""
    order = sorted(
        (ci for ci in range(len(state.cand))
         if ci not in banned and ci not in state.removed),
        key=lambda ci: (-(state.benefit.get(ci, 0.0) - state.base_w[ci]) / max(state.sizes[ci], 1.0),
                        state.ids[ci]),
    )
    selected = set(fixed_in)
    for ci in order:
        if ci in selected:
            continue
        if state.benefit.get(ci, 0.0) - state.base_w[ci] <= 0.0:
            break
        tentative = selected | {ci}
        ok = True
        for dc in state.prop_cons:
            if dc.block_index is not None or dc.kind == "ge":
                continue
            lhs = sum(coef for c, coef in dc.zc if c in tentative)
            if dc.kind == "le" and lhs > dc.rhs + 1e-9:
                ok = False
                break
            if dc.kind == "eq" and lhs > dc.rhs + 1e-9:
                ok = False
                break
        if ok:
            selected = tentative
    return _repair(state, selected, fixed_in, banned)


def resolve_delta(state: SolverState, delta: BipDelta,
                  options: SolverOptions | None = None) -> Solution:
    """Re-solve after a problem delta, warm-starting from the existing state.

    Pure candidate additions after an exact solve only need to search the
    subtrees that actually select a new candidate: every configuration without
    them is already covered by the previous optimality certificate.
    """
    add_only = (
        state.last_exact
        and state.incumbent_hint is not None
        and not delta.remove_candidates
        and not delta.add_constraints
        and not delta.remove_constraints
        and not delta.weight_changes
    )
    existing = set(state.ids) - {state.ids[ci] for ci in state.removed}
    new_ids = [a.id for a in delta.add_candidates if a.id not in existing]
    new_bip = bipmodel.apply_delta(state.bip, delta)
    state.rebind(new_bip)
    if add_only and not new_ids:
        # nothing changed: the previous certificate stands
        return solve(new_bip, options, state=state, explore_only=[])
    return solve(new_bip, options, state=state)
