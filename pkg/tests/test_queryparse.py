import pytest

from ixtune.errors import (
    MultipleTableReference,
    UnknownColumn,
    UnsupportedFeature,
    WorkloadSyntaxError,
)
from ixtune.queryparse import SELECT, UPDATE, parse_workload, workload_to_text


def test_single_select(f1):
    w = parse_workload("Q1 | 1.0 | SELECT c2 FROM T1 WHERE c1 = 5", f1)
    assert len(w.statements) == 1
    st = w.statements[0]
    assert st.weight == 1.0
    assert st.query.kind == SELECT
    assert st.query.eq_predicates == (("T1", "c1", 5),)
    assert st.query.projections == (("T1", "c2"),)


def test_update_decomposes_into_shell(f1):
    w = parse_workload("U1 | 2.0 | UPDATE T1 SET c2 = 0 WHERE c1 = 5", f1)
    st = w.statements[0]
    assert st.weight == 2.0
    assert st.query.kind == UPDATE
    shell = st.query.query_shell
    assert shell.kind == SELECT
    assert shell.referenced_tables == ("T1",)
    assert shell.eq_predicates == (("T1", "c1", 5),)
    # exactly one read statement and one update statement derived
    assert len(w.read_statements()) == 1
    assert len(w.update_statements()) == 1


def test_self_join_rejected(f1):
    with pytest.raises(MultipleTableReference, match="T1"):
        parse_workload("Q1 | 1.0 | SELECT * FROM T1 a, T1 b WHERE a.c1 = b.c1", f1)


def test_join_predicates(f1):
    w = parse_workload("Q1 | 1.0 | SELECT T1.c2 FROM T1, T2 WHERE T1.c1 = T2.d1 AND c3 = 2", f1)
    q = w.statements[0].query
    assert q.referenced_tables == ("T1", "T2")
    assert q.join_predicates == ((("T1", "c1"), ("T2", "d1")),)
    assert q.eq_predicates == (("T1", "c3", 2),)


def test_or_unsupported(f1):
    with pytest.raises(UnsupportedFeature):
        parse_workload("Q1 | 1.0 | SELECT c1 FROM T1 WHERE c1 = 1 OR c2 = 2", f1)


def test_subquery_unsupported(f1):
    with pytest.raises(UnsupportedFeature):
        parse_workload("Q1 | 1.0 | SELECT c1 FROM T1 WHERE c1 = (SELECT c1 FROM T1)", f1)


def test_unknown_column(f1):
    with pytest.raises(UnknownColumn):
        parse_workload("Q1 | 1.0 | SELECT zz FROM T1", f1)


def test_syntax_errors_carry_line(f1):
    with pytest.raises(WorkloadSyntaxError) as err:
        parse_workload("# comment\nQ1 | 1.0 | SELECT c1 FROM\n", f1)
    assert err.value.line == 2


def test_weight_must_be_positive(f1):
    with pytest.raises(WorkloadSyntaxError):
        parse_workload("Q1 | 0 | SELECT c1 FROM T1", f1)


def test_duplicate_ids_rejected(f1):
    text = "Q1 | 1 | SELECT c1 FROM T1\nQ1 | 1 | SELECT c2 FROM T1"
    with pytest.raises(WorkloadSyntaxError):
        parse_workload(text, f1)


def test_order_and_group_by(f1):
    w = parse_workload("Q1 | 1.0 | SELECT c1 FROM T1 WHERE c3 = 1 GROUP BY c1 ORDER BY c1", f1)
    q = w.statements[0].query
    assert q.order_by == ("T1", "c1")
    assert q.group_by == (("T1", "c1"),)


def test_between_counts_as_two_ranges(f1):
    w = parse_workload("Q1 | 1.0 | SELECT c1 FROM T1 WHERE c2 BETWEEN 1 AND 9", f1)
    q = w.statements[0].query
    assert q.range_predicates == (("T1", "c2"), ("T1", "c2"))


def test_star_expands_projections(f1):
    w = parse_workload("Q1 | 1.0 | SELECT * FROM T2", f1)
    q = w.statements[0].query
    assert q.projections == (("T2", "d1"), ("T2", "d2"))


def test_pretty_print_round_trip(f1):
    text = "\n".join([
        "Q1 | 1.0 | SELECT c2 FROM T1 WHERE c1 = 5",
        "Q2 | 2.5 | SELECT T1.c2, T2.d2 FROM T1, T2 WHERE T1.c1 = T2.d1 AND c3 > 4 ORDER BY d1",
        "U1 | 3.0 | UPDATE T1 SET c2 = 1 WHERE c1 = 7",
    ])
    w1 = parse_workload(text, f1)
    w2 = parse_workload(workload_to_text(w1), f1)
    assert w1 == w2


def test_parse_is_deterministic(f1):
    text = "Q1 | 1.0 | SELECT c2, c1 FROM T1 WHERE c1 = 5 AND c2 > 3"
    assert parse_workload(text, f1) == parse_workload(text, f1)
