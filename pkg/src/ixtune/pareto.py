"""Pareto-front exploration over soft constraints via recursive scalarization.

The trade-off axes are total workload cost plus one violation value per soft
constraint. The sweep starts at the unit weight vectors (each axis minimized
alone), then recursively solves at the weight vector orthogonal to the chord
between neighbouring points, refining wherever a new point sits further than
``epsilon`` from the current front (distances measured after per-axis
normalization by the extreme-point ranges). Every solve is exact and reuses
the previous solver state, so later points are much cheaper than the first.

Only supported (convex-hull) trade-off points are reachable by weighted-sum
scalarization; unsupported Pareto points are a documented limitation of the
method, not of this implementation.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace

from . import bipmodel, solver
from .bipmodel import BipProblem, SoftTerm
from .errors import NoSoftConstraints
from .solver import SolverOptions, SolverState

_DEDUP_TOL = 1e-9


@dataclass(frozen=True)
class ParetoPoint:
    lambdas: tuple[float, ...]
    objectives: tuple[float, ...]  # (workload cost, one violation per soft term)
    indexes: tuple[str, ...]
    solve_ms: float
    nodes: int

    def to_dict(self) -> dict:
        return {
            "lambda": list(self.lambdas),
            "objectives": list(self.objectives),
            "indexes": list(self.indexes),
            "solve_ms": self.solve_ms,
        }


def chord(
    bip: BipProblem,
    soft_terms: list[SoftTerm],
    epsilon: float,
    max_points: int = 32,
    options: SolverOptions | None = None,
    state: SolverState | None = None,
    reuse_state: bool = True,
) -> list[ParetoPoint]:
    """``reuse_state=False`` re-solves every weight vector from scratch; it
    exists as the naive baseline that the warm-started sweep is measured
    against."""
    if not soft_terms:
        raise NoSoftConstraints("pareto exploration needs at least one soft constraint")
    if epsilon <= 0:
        raise NoSoftConstraints(f"plane-distance threshold must be positive, got {epsilon}")

    dims = len(soft_terms) + 1
    base_opts = options or SolverOptions()
    opts = replace(base_opts, gap_threshold=0.0, progress=None)
    # after the first solve the state carries converged structures, so later
    # sweep points get by with the ordinary per-node step budget at the root
    warm_opts = replace(opts, root_subgradient_steps=opts.max_subgradient_steps)

    points: list[ParetoPoint] = []
    seen: list[tuple[float, ...]] = []
    shared_state = state
    solved_once = False
    # exact optimum values per solved weight vector; the scalarized optimum is
    # concave in the weights, so interpolating these bounds any probe for free
    value_facts: list[tuple[tuple[float, ...], float]] = []

    def solve_at(lambdas: tuple[float, ...]) -> ParetoPoint:
        nonlocal shared_state, solved_once
        scal = bipmodel.scalarize(bip, soft_terms, lambdas)
        t0 = time.perf_counter()
        if not reuse_state:
            sol = solver.solve(scal, opts)
        else:
            if shared_state is None:
                shared_state = SolverState(scal)
            elif points:
                # the best already-known configuration for these weights is a
                # ready-made incumbent; tie-reduced sets stay feasible
                best = min(
                    points,
                    key=lambda p: sum(l * f for l, f in zip(lambdas, p.objectives)),
                )
                shared_state.incumbent_hint = best.indexes
            sol = solver.solve(scal, warm_opts if solved_once else opts, state=shared_state)
        solved_once = True
        selected = _reduce_ties(bip, soft_terms, lambdas, sol.selected)
        elapsed = (time.perf_counter() - t0) * 1000.0
        vector = objective_vector(bip, soft_terms, selected)
        value_facts.append((lambdas, sum(l * f for l, f in zip(lambdas, vector))))
        return ParetoPoint(lambdas, vector, selected, elapsed, sol.nodes_explored)

    def interpolated_lower_bound(lam: tuple[float, ...]) -> float:
        """Best concavity bound on the optimum at ``lam`` from solved facts."""
        best = -math.inf
        for (la, va), (lb, vb) in itertools.combinations(value_facts, 2):
            denom = la[0] - lb[0]
            if abs(denom) < 1e-15:
                continue
            t = (lam[0] - lb[0]) / denom
            if not 0.0 <= t <= 1.0:
                continue
            best = max(best, t * va + (1.0 - t) * vb)
        return best

    def add(point: ParetoPoint) -> bool:
        for v in seen:
            if all(abs(a - b) <= _DEDUP_TOL * (1.0 + abs(a)) for a, b in zip(v, point.objectives)):
                return False
        seen.append(point.objectives)
        points.append(point)
        return True

    for j in range(dims):
        lam = tuple(1.0 if d == j else 0.0 for d in range(dims))
        add(solve_at(lam))
        if len(points) >= max_points:
            break

    if dims == 2 and len(points) >= 2 and len(points) < max_points:
        ranges = _axis_ranges([p.objectives for p in points])
        ordered = sorted(points, key=lambda p: p.objectives[0])
        lo, hi = ordered[0], ordered[-1]

        def norm(v):
            return tuple((x - 0.0) / r for x, r in zip(v, ranges))

        def refine(a: ParetoPoint, b: ParetoPoint, depth: int):
            nonlocal shared_state
            if len(points) >= max_points or depth > 16:
                return
            na, nb = norm(a.objectives), norm(b.objectives)
            chord_len = math.hypot(nb[0] - na[0], nb[1] - na[1])
            if chord_len <= _DEDUP_TOL:
                return
            # weight vector orthogonal to the chord, positive components
            w0 = na[1] - nb[1]
            w1 = nb[0] - na[0]
            if w0 <= 0 or w1 <= 0:
                return
            raw = (w0 / ranges[0], w1 / ranges[1])
            total = raw[0] + raw[1]
            lam = (raw[0] / total, raw[1] / total)
            # free certificate: concavity of the optimum-value function over
            # the solved weight vectors often proves that nothing lies more
            # than epsilon below this chord, ending the recursion solve-free
            chord_value = lam[0] * a.objectives[0] + lam[1] * a.objectives[1]
            lower = interpolated_lower_bound(lam)
            if total * (chord_value - lower) / chord_len < epsilon:
                return
            s = solve_at(lam)
            ns = norm(s.objectives)
            dist = abs((nb[0] - na[0]) * (na[1] - ns[1]) - (na[0] - ns[0]) * (nb[1] - na[1])) / chord_len
            if dist < epsilon or not add(s):
                return
            refine(a, s, depth + 1)
            refine(s, b, depth + 1)

        refine(lo, hi, 0)
    elif dims > 2 and len(points) == dims and len(points) < max_points:
        _refine_facets(points, seen, add, solve_at, epsilon, max_points, dims)

    front = _non_dominated(points)
    front.sort(key=lambda p: p.objectives)
    return front


def objective_vector(bip: BipProblem, soft_terms, selected_ids) -> tuple[float, ...]:
    cost = bipmodel.config_objective(bip, selected_ids)
    violations = tuple(bipmodel.soft_violation(bip, t, selected_ids) for t in soft_terms)
    return (cost,) + violations


def _reduce_ties(bip: BipProblem, soft_terms, lambdas, selected) -> tuple[str, ...]:
    """Replace a scalarized optimum by an equal-value representative that is
    not weakly dominated: weight vectors with zero components (the extremes)
    leave the unweighted axes unconstrained, so among tied optima we greedily
    apply drops and single swaps that improve the full objective vector."""
    current = set(selected)
    value = _scalar_value(bip, soft_terms, lambdas, current)
    vector = objective_vector(bip, soft_terms, tuple(sorted(current)))
    tol = 1e-9 * (1.0 + abs(value))
    by_table: dict[str, list] = {}
    for cand in bip.candidates:
        by_table.setdefault(cand.table, []).append(cand)
    index = {a.id: a for a in bip.candidates}

    improved = True
    while improved:
        improved = False
        for aid in sorted(current):
            candidates = [None] + [
                b.id for b in by_table.get(index[aid].table, []) if b.id not in current
            ]
            for replacement in candidates:
                trial = set(current)
                trial.discard(aid)
                if replacement is not None:
                    trial.add(replacement)
                ids = tuple(sorted(trial))
                if not all(
                    bipmodel.constraint_satisfied(bip, lc, ids) for lc in bip.constraints
                ):
                    continue
                trial_value = _scalar_value(bip, soft_terms, lambdas, trial)
                if trial_value > value + tol:
                    continue
                trial_vector = objective_vector(bip, soft_terms, ids)
                better = all(a <= b + 1e-9 for a, b in zip(trial_vector, vector)) and any(
                    a < b - 1e-9 for a, b in zip(trial_vector, vector)
                )
                if better:
                    current = trial
                    value = trial_value
                    vector = trial_vector
                    improved = True
                    break
            if improved:
                break
    return tuple(sorted(current))


def _scalar_value(bip: BipProblem, soft_terms, lambdas, selected) -> float:
    vec = objective_vector(bip, soft_terms, tuple(sorted(selected)))
    return sum(l * f for l, f in zip(lambdas, vec))


def _axis_ranges(vectors) -> tuple[float, ...]:
    dims = len(vectors[0])
    out = []
    for d in range(dims):
        values = [v[d] for v in vectors]
        span = max(values) - min(values)
        out.append(span if span > 0 else 1.0)
    return tuple(out)


def _refine_facets(points, seen, add, solve_at, epsilon, max_points, dims):
    """Simplex-facet generalization: recurse on the facet spanned by the
    current extreme points, weighting by the facet normal."""
    ranges = _axis_ranges([p.objectives for p in points])

    def norm(v):
        return tuple(x / r for x, r in zip(v, ranges))

    def facet_normal(vertices):
        base = norm(vertices[0].objectives)
        rows = [
            [norm(v.objectives)[d] - base[d] for d in range(dims)]
            for v in vertices[1:]
        ]
        rows.append([1.0] * dims)
        rhs = [0.0] * (dims - 1) + [1.0]
        w = _solve_linear(rows, rhs)
        if w is None or any(not math.isfinite(x) for x in w):
            return None
        w = [max(0.0, x) for x in w]
        total = sum(w)
        return None if total <= 0 else tuple(x / total for x in w)

    def refine(vertices, depth):
        if len(points) >= max_points or depth > 8:
            return
        wn = facet_normal(vertices)
        if wn is None:
            return
        raw = [wn[d] / ranges[d] for d in range(dims)]
        total = sum(raw)
        lam = tuple(x / total for x in raw)
        s = solve_at(lam)
        base = norm(vertices[0].objectives)
        ns = norm(s.objectives)
        dist = abs(sum(wn[d] * (ns[d] - base[d]) for d in range(dims))) / math.sqrt(
            sum(x * x for x in wn)
        )
        if dist < epsilon or not add(s):
            return
        for i in range(len(vertices)):
            sub = list(vertices)
            sub[i] = s
            refine(sub, depth + 1)

    refine(list(points), 0)


def _solve_linear(rows, rhs):
    n = len(rhs)
    a = [list(r) + [rhs[i]] for i, r in enumerate(rows)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
        if abs(a[pivot][col]) < 1e-12:
            return None
        a[col], a[pivot] = a[pivot], a[col]
        for r in range(n):
            if r != col:
                f = a[r][col] / a[col][col]
                for c in range(col, n + 1):
                    a[r][c] -= f * a[col][c]
    return [a[i][n] / a[i][i] for i in range(n)]


def _non_dominated(points: list[ParetoPoint]) -> list[ParetoPoint]:
    out = []
    for p in points:
        dominated = False
        for q in points:
            if q is p:
                continue
            if all(a <= b for a, b in zip(q.objectives, p.objectives)) and any(
                a < b for a, b in zip(q.objectives, p.objectives)
            ):
                dominated = True
                break
        if not dominated:
            out.append(p)
    # distinct objective vectors only
    uniq = []
    for p in out:
        if not any(p.objectives == q.objectives for q in uniq):
            uniq.append(p)
    return uniq
