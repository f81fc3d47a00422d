import pytest

from ixtune.catalog import (
    catalog_to_document,
    estimate_index_size,
    load_catalog,
    make_candidate,
)
from ixtune.errors import (
    DuplicateTable,
    NonPositiveWidth,
    UnknownColumn,
    UnknownColumnInJoinSelectivity,
    UnknownTable,
)


def test_minimal_document_loads():
    cat = load_catalog({
        "tables": [{"name": "T1", "row_count": 10, "columns": [
            {"name": "a", "width": 4, "distinct": 5},
            {"name": "b", "width": 8, "distinct": 2},
            {"name": "c", "width": 4, "distinct": 1},
        ]}],
    })
    assert len(cat.tables) == 1
    assert cat.page_size == 4096


def test_duplicate_table_rejected():
    doc = {"tables": [
        {"name": "T1", "row_count": 1, "columns": [{"name": "a", "width": 4, "distinct": 1}]},
        {"name": "T1", "row_count": 2, "columns": [{"name": "a", "width": 4, "distinct": 1}]},
    ]}
    with pytest.raises(DuplicateTable, match="T1"):
        load_catalog(doc)


def test_join_selectivity_unknown_column_rejected():
    doc = {
        "tables": [{"name": "T1", "row_count": 1, "columns": [{"name": "a", "width": 4, "distinct": 1}]}],
        "join_selectivities": [{"left": "T9.c1", "right": "T1.a", "sel": 0.5}],
    }
    with pytest.raises(UnknownColumnInJoinSelectivity):
        load_catalog(doc)


def test_non_positive_width_rejected():
    doc = {"tables": [{"name": "T1", "row_count": 1,
                       "columns": [{"name": "a", "width": 0, "distinct": 1}]}]}
    with pytest.raises(NonPositiveWidth):
        load_catalog(doc)


def test_index_size_formula(f1):
    assert estimate_index_size("T1", ["c1"], [], f1) == 10000 * (8 + 4) == 120000
    assert estimate_index_size("T1", ["c1"], ["c2"], f1) == 10000 * (8 + 4 + 8) == 200000


def test_index_size_unknown_table(f1):
    with pytest.raises(UnknownTable):
        estimate_index_size("T9", ["c1"], [], f1)
    with pytest.raises(UnknownColumn):
        estimate_index_size("T1", ["zz"], [], f1)


def test_size_monotone_in_columns(f1):
    base = estimate_index_size("T1", ["c1"], [], f1)
    more = estimate_index_size("T1", ["c1"], ["c3"], f1)
    assert more > base


def test_round_trip_document(f1):
    doc = catalog_to_document(f1)
    again = load_catalog(doc)
    assert again == f1
    assert catalog_to_document(again) == doc


def test_candidate_identity_is_structural(f1):
    a = make_candidate("T1", ["c1"], f1, include_columns=["c2"])
    b = make_candidate("T1", ["c1"], f1, include_columns=["c2"])
    c = make_candidate("T1", ["c1"], f1, include_columns=["c2"], clustered=True)
    assert a.id == b.id
    assert a.id != c.id
    assert a.width == 2


def test_default_join_selectivity(f1):
    # no entry for (T1.c2, T2.d2): defaults to 1/max(distincts)
    assert f1.join_selectivity(("T1", "c2"), ("T2", "d2")) == 1.0 / 1000
    assert f1.join_selectivity(("T1", "c1"), ("T2", "d1")) == 0.01
