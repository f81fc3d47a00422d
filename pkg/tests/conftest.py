import pytest

from ixtune.catalog import load_catalog, make_candidate
from ixtune.queryparse import parse_workload

F1_DOC = {
    "page_size": 4096,
    "tables": [
        {
            "name": "T1",
            "row_count": 10000,
            "columns": [
                {"name": "c1", "width": 4, "distinct": 100},
                {"name": "c2", "width": 8, "distinct": 1000},
                {"name": "c3", "width": 4, "distinct": 10},
            ],
        },
        {
            "name": "T2",
            "row_count": 1000,
            "columns": [
                {"name": "d1", "width": 4, "distinct": 100},
                {"name": "d2", "width": 8, "distinct": 50},
            ],
        },
    ],
    "join_selectivities": [{"left": "T1.c1", "right": "T2.d1", "sel": 0.01}],
}


@pytest.fixture
def f1():
    return load_catalog(F1_DOC)


@pytest.fixture
def f1_doc():
    return dict(F1_DOC)


@pytest.fixture
def q1(f1):
    w = parse_workload("Q1 | 1.0 | SELECT c2 FROM T1 WHERE c1 = 5", f1)
    return w.statements[0].query


@pytest.fixture
def a1(f1):
    return make_candidate("T1", ["c1"], f1)


@pytest.fixture
def a2(f1):
    return make_candidate("T1", ["c1"], f1, include_columns=["c2"])
