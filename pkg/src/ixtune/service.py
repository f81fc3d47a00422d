"""HTTP facade over tuning sessions with streamed solver progress.

Sessions live in memory (optionally snapshotted to ``ADVISOR_STATE_DIR``).
Solves stream progress records followed by a final recommendation record as
server-sent events (``data: <json>\\n\\n`` framing). Requests on a session that
is already solving are rejected with 409.
"""

from __future__ import annotations

import json
import os
import queue
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import advisor
from .errors import AdvisorError, InfeasibleProblem, SessionBusy
from .solver import SolverOptions


class CreateSessionBody(BaseModel):
    catalog: dict
    workload: str
    constraints: str = ""
    dba_candidates: list[dict] = Field(default_factory=list)


class SolveBody(BaseModel):
    gap: float = 0.05
    time_limit: float | None = None
    threads: int = 1


class ParetoBody(BaseModel):
    epsilon: float = 0.05
    max_points: int = 16


class WhatifBody(BaseModel):
    indexes: list[str] = Field(default_factory=list)


class _Registry:
    def __init__(self, state_dir: str | None):
        self.sessions: dict[str, advisor.Session] = {}
        self.stops: dict[str, threading.Event] = {}
        self.lock = threading.Lock()
        self.state_dir = Path(state_dir) if state_dir else None
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            for snap in sorted(self.state_dir.glob("*.json")):
                try:
                    session = advisor.import_snapshot(json.loads(snap.read_text()))
                    self.sessions[session.id] = session
                except Exception:  # corrupt snapshots must not block startup
                    continue

    def add(self, session: advisor.Session):
        with self.lock:
            self.sessions[session.id] = session
            self.stops[session.id] = threading.Event()
        self.persist(session)

    def get(self, session_id: str) -> advisor.Session | None:
        return self.sessions.get(session_id)

    def drop(self, session_id: str):
        with self.lock:
            self.sessions.pop(session_id, None)
            self.stops.pop(session_id, None)
        if self.state_dir:
            path = self.state_dir / f"{session_id}.json"
            if path.exists():
                path.unlink()

    def persist(self, session: advisor.Session):
        if self.state_dir:
            path = self.state_dir / f"{session.id}.json"
            path.write_text(json.dumps(advisor.export_snapshot(session)))


def create_app(state_dir: str | None = None, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="index-tuning service")
    registry = _Registry(state_dir or os.environ.get("ADVISOR_STATE_DIR"))
    app.state.registry = registry

    @app.exception_handler(AdvisorError)
    async def advisor_error(request: Request, exc: AdvisorError):
        if isinstance(exc, SessionBusy):
            status = 409
        elif isinstance(exc, InfeasibleProblem):
            status = 422
        else:
            status = 400
        body = {"module": exc.module, "error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, InfeasibleProblem):
            body["report"] = exc.report
        return JSONResponse(status_code=status, content=body)

    def _session_or_404(session_id: str) -> advisor.Session:
        session = registry.get(session_id)
        if session is None:
            raise _NotFound(session_id)
        return session

    class _NotFound(Exception):
        def __init__(self, sid):
            self.sid = sid

    @app.exception_handler(_NotFound)
    async def not_found(request: Request, exc: _NotFound):
        return JSONResponse(status_code=404, content={"error": "unknown session", "session_id": exc.sid})

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        session = advisor.create_session(
            body.catalog, body.workload, body.constraints, body.dba_candidates
        )
        registry.add(session)
        return {"session_id": session.id, "stats": session.stats()}

    @app.post("/sessions/{session_id}/solve")
    def solve(session_id: str, body: SolveBody):
        session = _session_or_404(session_id)
        stop = registry.stops.setdefault(session_id, threading.Event())
        stop.clear()
        events: queue.Queue = queue.Queue()

        def progress(record):
            events.put(("progress", record.to_dict()))

        def run():
            try:
                rec = advisor.recommend(session, SolverOptions(
                    gap_threshold=body.gap,
                    time_limit=body.time_limit,
                    threads=body.threads,
                    progress=progress,
                    stop_event=stop,
                ))
                registry.persist(session)
                events.put(("recommendation", rec.to_dict()))
            except AdvisorError as exc:
                payload = {"error": type(exc).__name__, "module": exc.module, "message": str(exc)}
                if isinstance(exc, InfeasibleProblem):
                    payload["report"] = exc.report
                events.put(("error", payload))
            finally:
                events.put(None)

        # reject concurrent solves up front so the 409 is an HTTP status,
        # not a mid-stream error event
        if session._busy.locked():
            raise SessionBusy(f"session {session.id} is already solving")

        worker = threading.Thread(target=run, daemon=True)
        worker.start()

        def stream():
            while True:
                item = events.get()
                if item is None:
                    break
                kind, payload = item
                yield f"data: {json.dumps({'type': kind, **payload})}\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/stop")
    def stop_solve(session_id: str):
        _session_or_404(session_id)
        stop = registry.stops.setdefault(session_id, threading.Event())
        stop.set()
        return {"stopping": True}

    @app.post("/sessions/{session_id}/delta")
    def delta(session_id: str, body: dict):
        session = _session_or_404(session_id)
        rec = advisor.apply_delta(session, body)
        registry.persist(session)
        return rec.to_dict()

    @app.post("/sessions/{session_id}/pareto")
    def pareto_route(session_id: str, body: ParetoBody):
        session = _session_or_404(session_id)
        points = advisor.run_pareto(session, epsilon=body.epsilon, max_points=body.max_points)
        return [p.to_dict() for p in points]

    @app.get("/sessions/{session_id}/recommendation")
    def recommendation(session_id: str):
        session = _session_or_404(session_id)
        if session.last_recommendation is None:
            return JSONResponse(status_code=404, content={"error": "no recommendation yet"})
        return session.last_recommendation.to_dict()

    @app.post("/sessions/{session_id}/whatif")
    def whatif_route(session_id: str, body: WhatifBody):
        session = _session_or_404(session_id)
        return advisor.whatif_report(session, body.indexes)

    @app.get("/sessions/{session_id}/candidates")
    def candidates(session_id: str):
        session = _session_or_404(session_id)
        out = []
        for a in session.problem.candidates.all():
            out.append({
                "id": a.id,
                "table": a.table,
                "key": list(a.key_columns),
                "include": list(a.include_columns),
                "clustered": a.clustered,
                "size_bytes": a.size_bytes,
                "provenance": session.problem.candidates.provenance.get(a.id, ""),
            })
        return out

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        _session_or_404(session_id)
        registry.drop(session_id)
        return {"deleted": session_id}

    ui_path = ui_dir or os.environ.get("ADVISOR_UI_DIR")
    if ui_path is None:
        default = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui_path = str(default) if default.is_dir() else None
    if ui_path and Path(ui_path).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_path, html=True), name="ui")

    return app
