import itertools

import pytest

from ixtune import bipmodel, synth
from ixtune.advisor import build_problem
from ixtune.bipmodel import parse_constraints
from ixtune.bruteforce import (
    OracleContext,
    assignment_cost,
    assignment_from_config,
    assignment_structurally_feasible,
    enumerate_optimal,
    pareto_exact,
)
from ixtune.candgen import CandidateSet
from ixtune.catalog import make_candidate
from ixtune.errors import TooManyCandidates
from ixtune.queryparse import parse_workload


def _candidate_set(cands):
    s = CandidateSet()
    for a in cands:
        s.add(a, "test")
    return s


def _setup(f1, text, cands, constraint_text=""):
    w = parse_workload(text, f1)
    problem = build_problem(f1, w, _candidate_set(cands), constraint_text)
    ctx = OracleContext(f1, w, problem.basecosts, problem.plan_cache)
    return w, problem, ctx


Q1 = "Q1 | 1.0 | SELECT c2 FROM T1 WHERE c1 = 5"


def test_oracle_reference_instance(f1, a1, a2):
    w, problem, ctx = _setup(f1, Q1, [a1, a2])
    result = enumerate_optimal(w, [a1, a2], [], f1, ctx=ctx)
    assert result.feasible
    assert result.value == pytest.approx(24.0)
    # both {a2} and {a1, a2} achieve 24
    assert tuple(sorted([a2.id])) in result.optima
    assert tuple(sorted([a1.id, a2.id])) in result.optima


def test_oracle_empty_candidates(f1):
    w, problem, ctx = _setup(f1, Q1, [])
    result = enumerate_optimal(w, [], [], f1, ctx=ctx)
    assert result.optima == [()]
    assert result.value == pytest.approx(40.0)


def test_oracle_unsatisfiable_constraints(f1, a1, a2):
    text = "ASSERT COUNT(1) >= 1\nASSERT SUM(SIZE) <= 0"
    w, problem, ctx = _setup(f1, Q1, [a1, a2])
    result = enumerate_optimal(w, [a1, a2], parse_constraints(text), f1, ctx=ctx)
    assert not result.feasible
    assert result.optima == []


def test_oracle_candidate_limit(f1):
    pool = [make_candidate("T1", ["c1"], f1)] * 25
    w, problem, ctx = _setup(f1, Q1, [])
    with pytest.raises(TooManyCandidates):
        enumerate_optimal(w, pool, [], f1, ctx=ctx, limit=20)


def test_clustered_rule_always_enforced(f1):
    c1 = make_candidate("T1", ["c1"], f1, clustered=True)
    c2 = make_candidate("T1", ["c2"], f1, clustered=True)
    w, problem, ctx = _setup(f1, Q1, [c1, c2])
    result = enumerate_optimal(w, [c1, c2], [], f1, ctx=ctx)
    for ids in result.optima:
        assert len(ids) <= 1


# --- embedding configurations into the program ---

def test_assignment_empty_config(f1, a1, a2):
    w, problem, ctx = _setup(f1, Q1, [a1, a2])
    asg = assignment_from_config([], problem.bip)
    assert asg.selected == frozenset()
    assert assignment_structurally_feasible(problem.bip, asg)
    assert assignment_cost(problem.bip, asg) == pytest.approx(40.0)


def test_assignment_picks_minimizing_access(f1, a1, a2):
    w, problem, ctx = _setup(f1, Q1, [a1, a2])
    asg = assignment_from_config([a2], problem.bip)
    assert asg.slot_choice["Q1"]["T1"] == a2.id
    assert assignment_cost(problem.bip, asg) == pytest.approx(24.0)


def test_assignment_equals_workload_cost_on_full_lattice(f1):
    text = "\n".join([
        Q1,
        "Q2 | 2.0 | SELECT T1.c2, T2.d2 FROM T1, T2 WHERE T1.c1 = T2.d1 AND c3 = 2",
        "Q3 | 1.5 | SELECT c1 FROM T1 WHERE c2 > 3 ORDER BY c1",
        "U1 | 1.0 | UPDATE T1 SET c2 = 0 WHERE c1 = 5",
    ])
    pool = [
        make_candidate("T1", ["c1"], f1),
        make_candidate("T1", ["c1"], f1, include_columns=["c2"]),
        make_candidate("T1", ["c2"], f1),
        make_candidate("T2", ["d1"], f1),
        make_candidate("T2", ["d1"], f1, include_columns=["d2"]),
    ]
    w, problem, ctx = _setup(f1, text, pool)
    from ixtune.bruteforce import _CostMemo

    memo = _CostMemo(ctx, pool)
    for r in range(len(pool) + 1):
        for combo in itertools.combinations(pool, r):
            asg = assignment_from_config(list(combo), problem.bip)
            assert assignment_structurally_feasible(problem.bip, asg)
            direct = memo.workload_cost(frozenset(a.id for a in combo))
            embedded = assignment_cost(problem.bip, asg)
            assert embedded == pytest.approx(direct, rel=1e-9)


def test_decoding_solver_optimum_recosts_identically(f1, a1, a2):
    from ixtune.solver import SolverOptions, solve

    w, problem, ctx = _setup(f1, Q1, [a1, a2], "ASSERT SUM(SIZE) <= 250000")
    sol = solve(problem.bip, SolverOptions(gap_threshold=0.0))
    config = [a for a in (a1, a2) if a.id in sol.selected]
    recosted = sum(
        st.weight * ctx.plan_cache.cost(st.query, config) for st in w.statements
    )
    assert recosted == pytest.approx(sol.objective, rel=1e-9)


# --- exact trade-off sets ---

def test_pareto_exact_reference(f1, a1, a2):
    w, problem, ctx = _setup(
        f1, Q1, [a1, a2], "SOFT ASSERT SUM(SIZE) <= 0"
    )
    soft_asts = [ast for ast in problem.asts if ast.soft]
    front = pareto_exact(w, [a1, a2], soft_asts, [], f1, ctx=ctx)
    vectors = [vec for vec, _ids in front]
    assert (40.0, 0.0) in [(v[0], v[1]) for v in vectors]
    assert any(v[0] == pytest.approx(24.0) and v[1] == pytest.approx(200000.0) for v in vectors)


def test_pareto_exact_useless_candidate_never_appears(f1, a2):
    # an index that only adds maintenance cost is never on the front
    text = "\n".join([Q1, "U1 | 5.0 | UPDATE T1 SET c2 = 0 WHERE c1 = 5"])
    dead = make_candidate("T1", ["c3"], f1)
    w, problem, ctx = _setup(f1, text, [a2, dead], "SOFT ASSERT SUM(SIZE) <= 0")
    soft_asts = [ast for ast in problem.asts if ast.soft]
    front = pareto_exact(w, [a2, dead], soft_asts, [], f1, ctx=ctx)
    for _vec, ids in front:
        assert dead.id not in ids


def test_pareto_exact_infeasible_is_empty(f1, a1):
    w, problem, ctx = _setup(f1, Q1, [a1])
    hard = parse_constraints("ASSERT COUNT(1) >= 1\nASSERT SUM(SIZE) <= 0")
    soft = parse_constraints("SOFT ASSERT SUM(SIZE) <= 0")
    front = pareto_exact(w, [a1], soft, hard, f1, ctx=ctx)
    assert front == []
