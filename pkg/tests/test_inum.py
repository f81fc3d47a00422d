import itertools
import math
import random

import pytest

from ixtune import whatif
from ixtune.catalog import make_candidate
from ixtune.errors import ForeignCandidate, UnknownTemplate
from ixtune.inum import build_templates, inum_cost
from ixtune.queryparse import parse_workload
from ixtune.whatif import NO_INDEX, whatif_cost


def test_q1_template_cache(f1, q1, a1, a2):
    tps = build_templates(q1, [a1, a2], f1)
    assert len(tps.templates) == 1
    slot = tps.templates[0].slots[0]
    assert slot.access_costs[NO_INDEX] == 40.0
    assert slot.access_costs[a1.id] == 104.0
    assert slot.access_costs[a2.id] == 24.0


def test_gamma_cases(f1, q1, a1, a2):
    tps = build_templates(q1, [a1, a2], f1)
    # table not referenced: zero
    assert tps.gamma(0, "T2", a1.id) == 0.0
    # bare scan on the unordered slot
    assert tps.gamma(0, "T1", NO_INDEX) == 40.0
    with pytest.raises(UnknownTemplate):
        tps.gamma(5, "T1", a1.id)


def test_gamma_order_incompatibility(f1):
    w = parse_workload("Q1 | 1.0 | SELECT c1 FROM T1 WHERE c2 = 7 ORDER BY c1", f1)
    q = w.statements[0].query
    wrong = make_candidate("T1", ["c2", "c1"], f1)
    right = make_candidate("T1", ["c1"], f1)
    tps = build_templates(q, [wrong, right], f1)
    ordered_k = next(
        k for k, t in enumerate(tps.templates)
        if t.slots[0].requirement.required_order == "c1"
    )
    assert tps.gamma(ordered_k, "T1", wrong.id) == math.inf
    assert tps.gamma(ordered_k, "T1", right.id) < math.inf
    # the ordered slot never accepts a bare scan
    assert tps.gamma(ordered_k, "T1", NO_INDEX) == math.inf


def test_inum_cost_examples(f1, q1, a1, a2):
    tps = build_templates(q1, [a1, a2], f1)
    assert inum_cost(tps, []) == 40.0
    assert inum_cost(tps, [a1, a2]) == 24.0


def test_foreign_candidate_rejected(f1, q1, a1):
    tps = build_templates(q1, [a1], f1)
    stranger = make_candidate("T1", ["c3"], f1)
    with pytest.raises(ForeignCandidate):
        inum_cost(tps, [stranger])


def test_order_by_without_index_uses_plain_template(f1):
    w = parse_workload("Q1 | 1.0 | SELECT c1 FROM T1 ORDER BY c1", f1)
    q = w.statements[0].query
    tps = build_templates(q, [], f1)
    plain = tps.templates[0]
    assert inum_cost(tps, []) == plain.internal_cost + plain.slots[0].access_costs[NO_INDEX]


def _random_pool(f1):
    return [
        make_candidate("T1", ["c1"], f1),
        make_candidate("T1", ["c1"], f1, include_columns=["c2"]),
        make_candidate("T1", ["c2"], f1),
        make_candidate("T1", ["c3", "c1"], f1),
        make_candidate("T1", ["c1", "c2"], f1),
        make_candidate("T2", ["d1"], f1),
        make_candidate("T2", ["d1"], f1, include_columns=["d2"]),
        make_candidate("T2", ["d2"], f1),
    ]


_QUERIES = [
    "Q1 | 1.0 | SELECT c2 FROM T1 WHERE c1 = 5",
    "Q2 | 1.0 | SELECT c1 FROM T1 WHERE c2 > 3 ORDER BY c1",
    "Q3 | 1.0 | SELECT T1.c2, T2.d2 FROM T1, T2 WHERE T1.c1 = T2.d1 AND c3 = 2",
    "Q4 | 1.0 | SELECT T1.c2 FROM T1, T2 WHERE T1.c1 = T2.d1 AND d2 = 4 ORDER BY T1.c1",
    "Q5 | 1.0 | SELECT c3 FROM T1 WHERE c1 = 2 AND c2 BETWEEN 1 AND 9 GROUP BY c3",
    "U1 | 1.0 | UPDATE T1 SET c2 = 0 WHERE c1 = 5",
]


def test_exact_equivalence_with_exhaustive_costing(f1):
    """Cached costing must equal the exhaustive what-if minimization bit for bit."""
    w = parse_workload("\n".join(_QUERIES), f1)
    pool = _random_pool(f1)
    rng = random.Random(42)
    checks = 0
    for st in w.read_statements():
        tps = build_templates(st.query, pool, f1)
        for _ in range(40):
            config = [a for a in pool if rng.random() < 0.4]
            assert inum_cost(tps, config) == whatif_cost(st.query, config, f1)
            checks += 1
    assert checks >= 200


def test_separability_matches_joint_enumeration(f1):
    """Per-slot minimization equals brute force over slot cross-products."""
    w = parse_workload(_QUERIES[2], f1)
    q = w.statements[0].query
    pool = _random_pool(f1)
    tps = build_templates(q, pool, f1)
    rng = random.Random(3)
    for _ in range(25):
        config = [a for a in pool if rng.random() < 0.5]
        ids = {a.table: [x.id for x in config if x.table == a.table] for a in config}
        best_joint = math.inf
        for template in tps.templates:
            options = []
            for slot in template.slots:
                opts = []
                if NO_INDEX in slot.access_costs:
                    opts.append(slot.access_costs[NO_INDEX])
                for aid in ids.get(slot.table, []):
                    if aid in slot.access_costs:
                        opts.append(slot.access_costs[aid])
                options.append(opts)
            if any(not o for o in options):
                continue
            for combo in itertools.product(*options):
                acc = 0.0
                for v in combo:
                    acc += v
                acc += template.internal_cost
                best_joint = min(best_joint, acc)
        assert inum_cost(tps, config) == best_joint


def test_inum_cost_monotone(f1, q1):
    pool = _random_pool(f1)
    tps = build_templates(q1, pool, f1)
    rng = random.Random(11)
    for _ in range(40):
        sub = [a for a in pool if rng.random() < 0.4]
        sup = sub + [a for a in pool if a not in sub and rng.random() < 0.5]
        assert inum_cost(tps, sup) <= inum_cost(tps, sub)


def test_costing_never_re_enumerates(f1, q1):
    pool = _random_pool(f1)
    tps = build_templates(q1, pool, f1)
    before = whatif.plan_enumeration_calls
    for _ in range(10):
        inum_cost(tps, pool)
    assert whatif.plan_enumeration_calls == before


def test_extend_matches_fresh_build(f1, q1):
    pool = _random_pool(f1)
    tps = build_templates(q1, pool[:3], f1)
    before = whatif.plan_enumeration_calls
    tps.extend(pool[3:], f1)
    assert whatif.plan_enumeration_calls == before
    fresh = build_templates(q1, pool, f1)
    for t_old, t_new in zip(tps.templates, fresh.templates):
        for s_old, s_new in zip(t_old.slots, t_new.slots):
            assert s_old.access_costs == s_new.access_costs


def test_debug_dump_schema(f1, q1, a1):
    tps = build_templates(q1, [a1], f1)
    doc = tps.to_debug_dict()
    assert doc["query"] == "Q1"
    t = doc["templates"][0]
    assert set(t.keys()) == {"beta", "slots"}
    slot = t["slots"][0]
    assert set(slot.keys()) == {"table", "order", "multiplicity", "gamma"}
    assert slot["gamma"][NO_INDEX] == 40.0
