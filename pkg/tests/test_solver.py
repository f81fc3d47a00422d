import math
import random

import pytest

from ixtune import bipmodel, bruteforce, solver, synth
from ixtune.advisor import build_problem
from ixtune.bipmodel import BipDelta
from ixtune.bruteforce import OracleContext, enumerate_optimal
from ixtune.candgen import CandidateSet
from ixtune.catalog import make_candidate
from ixtune.errors import InfeasibleProblem
from ixtune.queryparse import parse_workload
from ixtune.solver import (
    SolveStatus,
    SolverOptions,
    SolverState,
    check_feasibility,
    relax,
    resolve_delta,
    solve,
)


def _candidate_set(cands):
    s = CandidateSet()
    for a in cands:
        s.add(a, "test")
    return s


def _problem(f1, text, cands, constraint_text=""):
    w = parse_workload(text, f1)
    return build_problem(f1, w, _candidate_set(cands), constraint_text)


Q1 = "Q1 | 1.0 | SELECT c2 FROM T1 WHERE c1 = 5"


def test_reference_solve_picks_covering_index(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2], "ASSERT SUM(SIZE) <= 250000")
    sol = solve(problem.bip, SolverOptions(gap_threshold=0.0))
    assert sol.status is SolveStatus.OPTIMAL
    assert sol.selected == (a2.id,)
    assert sol.objective == pytest.approx(24.0)
    assert sol.gap == 0.0
    assert sol.lower_bound == sol.objective


def test_budget_below_everything_keeps_scans(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2], "ASSERT SUM(SIZE) <= 100000")
    sol = solve(problem.bip, SolverOptions(gap_threshold=0.0))
    assert sol.selected == ()
    assert sol.objective == pytest.approx(40.0)


def test_update_only_workload_selects_nothing(f1, a1, a2):
    problem = _problem(f1, "U1 | 1.0 | UPDATE T1 SET c2 = 0 WHERE c1 = 5", [a1, a2])
    sol = solve(problem.bip, SolverOptions(gap_threshold=0.0))
    assert sol.selected == ()
    # shell scan (40) plus base row-update cost (100); no index is worth its upkeep
    assert sol.objective == pytest.approx(140.0)


def test_solution_plan_choices(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2])
    sol = solve(problem.bip, SolverOptions(gap_threshold=0.0))
    k, picks = sol.plan_choices["Q1"]
    assert picks["T1"] == a2.id


# --- feasibility ---

def test_feasibility_structural(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2])
    result = check_feasibility(problem.bip)
    assert result.feasible


def test_feasibility_generous_budget(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2], "ASSERT SUM(SIZE) <= 999999999")
    assert check_feasibility(problem.bip).feasible


def test_contradictory_constraints_reported(f1, a1, a2):
    text = "ASSERT COUNT(1) >= 1\nASSERT SUM(SIZE) <= 0"
    problem = _problem(f1, Q1, [a1, a2], text)
    result = check_feasibility(problem.bip)
    assert not result.feasible
    assert result.report  # at least one named constraint restores feasibility
    assert all(origin.startswith("c") for origin in result.report)
    with pytest.raises(InfeasibleProblem) as err:
        solve(problem.bip)
    assert err.value.report == result.report


# --- relaxation ---

def test_relaxation_zero_multipliers_is_free_index_bound(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2])
    bound = relax(problem.bip).bound(steps=0)
    assert bound == pytest.approx(24.0)  # every index free: best access wins


def test_relaxation_exact_for_single_query_no_constraints(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2])
    oracle = enumerate_optimal(
        problem.workload, [a1, a2], [], f1,
        ctx=OracleContext(f1, problem.workload, problem.basecosts, problem.plan_cache),
    )
    bound = relax(problem.bip).bound(steps=0)
    assert bound == pytest.approx(oracle.value)


def test_subgradient_improves_bound_under_tight_budget(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2], "ASSERT SUM(SIZE) <= 100000")
    rb = relax(problem.bip)
    at_zero = rb.bound(steps=0)
    after = rb.bound(steps=50, upper_bound=40.0)
    assert after >= at_zero
    assert after > at_zero + 1.0  # climbs well above the free-index bound
    assert after <= 40.0 + 1e-6  # stays admissible (optimum keeps the scan)


# --- oracle agreement on randomized instances ---

def test_exact_solves_match_oracle_on_random_instances():
    for seed in range(1, 21):
        built = synth.build_instance(synth.random_instance(seed))
        row = synth.check_equivalence(built)
        assert row.agree, f"seed {seed}: {row.detail}"


def test_admissible_node_bounds(f1):
    text = "\n".join([
        Q1,
        "Q2 | 2.0 | SELECT T1.c2, T2.d2 FROM T1, T2 WHERE T1.c1 = T2.d1 AND c3 = 2",
        "U1 | 1.0 | UPDATE T1 SET c2 = 0 WHERE c1 = 5",
    ])
    w = parse_workload(text, f1)
    pool = [
        make_candidate("T1", ["c1"], f1),
        make_candidate("T1", ["c1"], f1, include_columns=["c2"]),
        make_candidate("T1", ["c3"], f1),
        make_candidate("T2", ["d1"], f1),
        make_candidate("T2", ["d1"], f1, include_columns=["d2"]),
    ]
    problem = build_problem(
        f1, w, _candidate_set(pool), "ASSERT SUM(SIZE) <= 400000"
    )
    ctx = OracleContext(f1, w, problem.basecosts, problem.plan_cache)
    ordered = sorted(pool, key=lambda a: a.id)
    observed = []
    opts = SolverOptions(gap_threshold=0.0, node_observer=lambda fi, fo, b: observed.append((fi, fo, b)))
    solve(problem.bip, opts)
    assert observed
    memo = bruteforce._CostMemo(ctx, ordered)
    for fixed_ids, banned_ids, bound in observed:
        best = math.inf
        fixed = set(fixed_ids)
        banned = set(banned_ids)
        for mask in range(1 << len(ordered)):
            config = [ordered[i] for i in range(len(ordered)) if mask >> i & 1]
            ids = {a.id for a in config}
            if not fixed <= ids or ids & banned:
                continue
            if not bruteforce.configuration_feasible(config, problem.asts, ctx):
                continue
            best = min(best, memo.workload_cost(frozenset(ids)))
        assert bound <= best + 1e-6


def test_anytime_progress_is_monotone():
    built = synth.build_instance(
        synth.random_instance(101, max_statements=8, constraint_kind="budget")
    )
    events = []
    solve(built.problem.bip, SolverOptions(gap_threshold=0.0, progress=events.append))
    assert events
    for prev, cur in zip(events, events[1:]):
        assert cur.incumbent <= prev.incumbent + 1e-9
        assert cur.lower_bound >= prev.lower_bound - 1e-9
    final = events[-1]
    assert final.gap == 0.0


def test_thread_count_does_not_change_objective():
    for seed in (5, 17, 23):
        built = synth.build_instance(synth.random_instance(seed))
        one = solve(built.problem.bip, SolverOptions(gap_threshold=0.0, threads=1),
                    state=SolverState(built.problem.bip))
        eight = solve(built.problem.bip, SolverOptions(gap_threshold=0.0, threads=8),
                      state=SolverState(built.problem.bip))
        assert one.objective == eight.objective
        assert one.selected == eight.selected


def test_stop_event_returns_partial_result_mid_solve():
    import threading

    inst = synth.bench_instance(200, n_tables=6, min_candidates=400, seed=99,
                                budget_fraction=0.25, update_share=0.12)
    built = synth.build_instance(inst)
    stop = threading.Event()
    events = []

    def progress(record):
        events.append(record)
        stop.set()  # ask for termination as soon as the solver reports anything

    sol = solve(built.problem.bip, SolverOptions(
        gap_threshold=0.0, progress=progress, stop_event=stop,
    ))
    assert sol.status in (SolveStatus.TIME_LIMIT, SolveStatus.OPTIMAL)
    assert events
    # the partial result still carries a valid bound and its gap label
    assert sol.lower_bound <= sol.objective
    assert sol.gap >= 0.0
    ids = set(sol.selected)
    assert all(aid in {a.id for a in built.candidates.all()} for aid in ids)


def test_gap_threshold_contract():
    built = synth.build_instance(synth.random_instance(31))
    sol = solve(built.problem.bip, SolverOptions(gap_threshold=0.05))
    assert sol.status in (SolveStatus.OPTIMAL, SolveStatus.GAP_REACHED)
    assert sol.gap <= 0.05 + 1e-12


# --- incremental re-solves ---

def test_identity_delta_preserves_objective(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2], "ASSERT SUM(SIZE) <= 250000")
    state = SolverState(problem.bip)
    first = solve(problem.bip, SolverOptions(gap_threshold=0.0), state=state)
    again = resolve_delta(state, BipDelta(), SolverOptions(gap_threshold=0.0))
    assert again.objective == first.objective
    assert again.selected == first.selected


def test_removing_the_winner_restores_scan_cost(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2])
    state = SolverState(problem.bip)
    first = solve(problem.bip, SolverOptions(gap_threshold=0.0), state=state)
    assert first.objective == pytest.approx(24.0)
    after = resolve_delta(
        state, BipDelta(remove_candidates=[a2.id]), SolverOptions(gap_threshold=0.0)
    )
    assert after.objective == pytest.approx(40.0)
    assert after.selected == ()


def test_budget_tightening_delta_matches_fresh_solve(f1, a1, a2):
    problem = _problem(f1, Q1, [a1, a2], "ASSERT SUM(SIZE) <= 250000")
    state = SolverState(problem.bip)
    solve(problem.bip, SolverOptions(gap_threshold=0.0), state=state)
    tight = bipmodel.LinConstraint(
        z_coeffs=((a1.id, float(a1.size_bytes)), (a2.id, float(a2.size_bytes))),
        cmp="<=", rhs=100000.0, origin="tight",
    )
    warm = resolve_delta(
        state,
        BipDelta(add_constraints=[tight], remove_constraints=["c1"]),
        SolverOptions(gap_threshold=0.0),
    )
    fresh_problem = _problem(f1, Q1, [a1, a2], "ASSERT SUM(SIZE) <= 100000")
    fresh = solve(fresh_problem.bip, SolverOptions(gap_threshold=0.0))
    assert warm.objective == fresh.objective
    assert warm.selected == fresh.selected


def test_random_delta_sequences_match_fresh_solves():
    rng = random.Random(2024)
    checks = 0
    for seed in range(1, 26):
        built = synth.build_instance(synth.random_instance(seed, constraint_kind="budget"))
        bip = built.problem.bip
        state = SolverState(bip)
        solve(bip, SolverOptions(gap_threshold=0.0), state=state)
        pool = built.candidates.all()
        for _step in range(4):
            delta = BipDelta()
            if pool and rng.random() < 0.6:
                victim = rng.choice(pool)
                delta.remove_candidates.append(victim.id)
                pool = [a for a in pool if a.id != victim.id]
            block_ids = [b.query_id for b in bip.blocks]
            if block_ids and rng.random() < 0.5:
                delta.weight_changes[rng.choice(block_ids)] = rng.choice((0.5, 2.0, 10.0))
            warm = resolve_delta(state, delta, SolverOptions(gap_threshold=0.0))
            bip = state.bip
            cold = solve(bip, SolverOptions(gap_threshold=0.0), state=SolverState(bip))
            assert warm.objective == cold.objective, f"seed {seed} step {_step}"
            checks += 1
    assert checks >= 100
