import json
import threading
import time

import httpx
import pytest
from fastapi.testclient import TestClient

from ixtune.service import create_app

from conftest import F1_DOC

Q1_TEXT = "Q1 | 1.0 | SELECT c2 FROM T1 WHERE c1 = 5\n"


@pytest.fixture
def client():
    app = create_app(state_dir=None)
    with TestClient(app) as c:
        yield c


def _create(client, **kwargs):
    body = {"catalog": F1_DOC, "workload": Q1_TEXT, "constraints": "", "dba_candidates": []}
    body.update(kwargs)
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()


def _collect_events(resp):
    events = []
    for line in resp.iter_lines():
        if line.startswith("data: "):
            events.append(json.loads(line[len("data: "):]))
    return events


def test_create_and_solve_stream(client):
    created = _create(client)
    sid = created["session_id"]
    assert created["stats"]["candidates"] >= 3

    with client.stream("POST", f"/sessions/{sid}/solve", json={"gap": 0.0}) as resp:
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("text/event-stream")
        events = _collect_events(resp)

    progress = [e for e in events if e["type"] == "progress"]
    final = [e for e in events if e["type"] == "recommendation"]
    assert progress and len(final) == 1
    for prev, cur in zip(progress, progress[1:]):
        assert cur["incumbent"] <= prev["incumbent"] + 1e-9
        assert cur["lower_bound"] >= prev["lower_bound"] - 1e-9
    rec = final[0]
    assert rec["objective"] == pytest.approx(24.0)
    assert rec["perf"] == pytest.approx(0.4)

    # final stream record matches the stored recommendation
    stored = client.get(f"/sessions/{sid}/recommendation").json()
    assert stored["objective"] == rec["objective"]


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/recommendation").status_code == 404
    assert client.post("/sessions/nope/solve", json={}).status_code == 404


def test_delta_roundtrip(client):
    sid = _create(client)["session_id"]
    with client.stream("POST", f"/sessions/{sid}/solve", json={"gap": 0.0}) as resp:
        _collect_events(resp)
    resp = client.post(
        f"/sessions/{sid}/delta",
        json={"add_constraints": ["ASSERT SUM(SIZE) <= 100000"]},
    )
    assert resp.status_code == 200
    rec = resp.json()
    assert rec["objective"] == pytest.approx(40.0)
    assert rec["indexes"] == []


def test_delta_unknown_candidate_400(client):
    sid = _create(client)["session_id"]
    resp = client.post(f"/sessions/{sid}/delta", json={"remove_candidates": ["missing"]})
    assert resp.status_code == 400
    body = resp.json()
    assert body["error"] == "UnknownCandidate"
    assert body["module"] == "advisor"


def test_busy_session_409(client):
    sid = _create(client)["session_id"]
    session = client.app.state.registry.get(sid)
    session._busy.acquire()
    try:
        resp = client.post(f"/sessions/{sid}/solve", json={"gap": 0.0})
        assert resp.status_code == 409
    finally:
        session._busy.release()


def test_infeasible_solve_422(client):
    created = _create(
        client, constraints="ASSERT COUNT(1) >= 1\nASSERT SUM(SIZE) <= 0\n"
    )
    sid = created["session_id"]
    with client.stream("POST", f"/sessions/{sid}/solve", json={"gap": 0.0}) as resp:
        events = _collect_events(resp)
    errors = [e for e in events if e["type"] == "error"]
    assert errors and errors[0]["error"] == "InfeasibleProblem"
    assert errors[0]["report"]


def test_pareto_route(client):
    created = _create(client, constraints="SOFT ASSERT SUM(SIZE) <= 0\n")
    sid = created["session_id"]
    resp = client.post(f"/sessions/{sid}/pareto", json={"epsilon": 0.05, "max_points": 8})
    assert resp.status_code == 200
    points = resp.json()
    assert len(points) >= 2
    sizes = sorted(p["objectives"][1] for p in points)
    assert sizes[0] == pytest.approx(0.0)


def test_whatif_route(client):
    sid = _create(client)["session_id"]
    candidates = client.get(f"/sessions/{sid}/candidates").json()
    covering = next(
        c["id"] for c in candidates if c["key"] == ["c1"] and c["include"] == ["c2"]
    )
    resp = client.post(f"/sessions/{sid}/whatif", json={"indexes": [covering]})
    assert resp.status_code == 200
    row = resp.json()["rows"][0]
    assert row["cost_baseline"] == pytest.approx(40.0)
    assert row["cost_whatif"] == pytest.approx(24.0)


def test_stop_route_exists(client):
    sid = _create(client)["session_id"]
    resp = client.post(f"/sessions/{sid}/stop")
    assert resp.status_code == 200
    assert resp.json() == {"stopping": True}


def test_delete_session(client):
    sid = _create(client)["session_id"]
    assert client.delete(f"/sessions/{sid}").status_code == 200
    assert client.get(f"/sessions/{sid}/recommendation").status_code == 404


def test_snapshot_persistence(tmp_path):
    app = create_app(state_dir=str(tmp_path))
    with TestClient(app) as c:
        body = {"catalog": F1_DOC, "workload": Q1_TEXT}
        sid = c.post("/sessions", json=body).json()["session_id"]
    assert (tmp_path / f"{sid}.json").exists()
    # a fresh service instance reloads the session
    app2 = create_app(state_dir=str(tmp_path))
    with TestClient(app2) as c2:
        resp = c2.post(f"/sessions/{sid}/whatif", json={"indexes": []})
        assert resp.status_code == 200
