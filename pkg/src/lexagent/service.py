"""HTTP service: sessions, messages with live tool-progress events, history
with per-turn tool traces, and direct case search for browsing.

Event transport is one server-sent event stream per turn, reconnectable via
Last-Event-ID. Sessions persist as append-only journals (one JSONL file per
session); the case dataset is loaded read-only at startup.
"""

from __future__ import annotations

import datetime as _dt
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse

from .agent import (
    AWAITING_CLARIFICATION,
    SessionState,
    Toolbox,
    resume_with_clarification,
    run_turn,
)
from .domain import CaseStore, QueryVector
from .providers import ChatProvider, ProviderUnavailable
from .search import EmptyQueryVector, database_search

TERMINAL_EVENTS = {"answer_ready", "clarification_needed", "error"}


class StorageUnavailable(Exception):
    pass


@dataclass
class TurnLog:
    turn: int
    events: list[dict] = field(default_factory=list)
    done: bool = False


@dataclass
class ApiSession:
    session_id: str
    created_at: str
    state: SessionState
    turns: list[TurnLog] = field(default_factory=list)
    entries: list[dict] = field(default_factory=list)  # rich history for the UI
    lock: threading.Lock = field(default_factory=threading.Lock)
    condition: threading.Condition = field(default_factory=threading.Condition)
    running: bool = False


class SessionRepository:
    """Append-only journal per session; replayable to rebuild state."""

    def __init__(self, directory: Optional[Path] = None):
        self._directory = Path(directory) if directory else None
        if self._directory:
            self._directory.mkdir(parents=True, exist_ok=True)

    def append(self, session_id: str, record: dict) -> None:
        if not self._directory:
            return
        try:
            with open(self._directory / f"{session_id}.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        except OSError as exc:
            raise StorageUnavailable(str(exc)) from exc

    def load(self, session_id: str) -> Optional[SessionState]:
        if not self._directory:
            return None
        path = self._directory / f"{session_id}.jsonl"
        if not path.exists():
            return None
        from .domain import CaseRecord

        state = SessionState(session_id=session_id)
        for line in path.read_text("utf-8").splitlines():
            record = json.loads(line)
            if record["kind"] == "turn":
                state.chat_history.append({"role": "user", "content": record["user"]})
                state.chat_history.append({"role": "assistant", "content": record["assistant"]})
                state.remember_cases([CaseRecord.from_dict(d) for d in record["cases_added"]])
                state.status = record["status"]
        return state


def create_app(
    toolbox: Toolbox,
    agent_chat: ChatProvider,
    journal_dir: Optional[Path] = None,
) -> FastAPI:
    app = FastAPI(title="lexagent")
    sessions: dict[str, ApiSession] = {}
    repository = SessionRepository(journal_dir)
    app.state.sessions = sessions
    app.state.repository = repository

    def get_session(session_id: str) -> ApiSession:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.post("/sessions", status_code=200)
    def create_session():
        session_id = uuid.uuid4().hex
        session = ApiSession(
            session_id=session_id,
            created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
            state=SessionState(session_id=session_id),
        )
        try:
            repository.append(session_id, {"kind": "created", "at": session.created_at})
        except StorageUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc))
        sessions[session_id] = session
        return {
            "session_id": session_id,
            "created_at": session.created_at,
            "status": session.state.status,
            "turns": 0,
        }

    def _emit(session: ApiSession, log: TurnLog, event: dict) -> None:
        with session.condition:
            event = dict(event, turn=log.turn)
            log.events.append(event)
            if event["event"] in TERMINAL_EVENTS:
                log.done = True
            session.condition.notify_all()

    def _run(session: ApiSession, log: TurnLog, text: str) -> None:
        state = session.state
        cases_before = len(state.session_cases)
        try:
            runner = (
                resume_with_clarification
                if state.status == AWAITING_CLARIFICATION
                else run_turn
            )
            outcome = runner(
                state,
                text,
                toolbox,
                agent_chat,
                on_event=lambda e: _emit(session, log, e),
            )
        except ProviderUnavailable as exc:
            _emit(session, log, {"event": "error", "detail": f"provider unavailable: {exc}"})
            session.entries.append(
                {"role": "assistant", "type": "error", "text": str(exc), "trace": [], "turn": log.turn}
            )
            return
        except Exception as exc:  # surface, never hang the stream
            _emit(session, log, {"event": "error", "detail": str(exc)})
            return
        finally:
            with session.lock:
                session.running = False

        session.entries.append({"role": "user", "text": text, "turn": log.turn})
        cases_added = state.session_cases[cases_before:]
        if outcome.kind == "final":
            payload = outcome.answer.to_dict()
            session.entries.append(
                {
                    "role": "assistant",
                    "type": "answer",
                    "text": payload["text"],
                    "citations": payload["citations"],
                    "followups": payload["followups"],
                    "trace": [s.to_dict() for s in outcome.steps],
                    "turn": log.turn,
                }
            )
            _emit(session, log, {"event": "answer_ready", "detail": json.dumps(payload)})
        else:
            session.entries.append(
                {
                    "role": "assistant",
                    "type": "clarification",
                    "text": outcome.clarification,
                    "citations": [],
                    "followups": [],
                    "trace": [s.to_dict() for s in outcome.steps],
                    "turn": log.turn,
                }
            )
            _emit(
                session,
                log,
                {"event": "clarification_needed", "detail": outcome.clarification},
            )
        assistant_text = (
            outcome.answer.text if outcome.kind == "final" else outcome.clarification
        )
        try:
            repository.append(
                session.session_id,
                {
                    "kind": "turn",
                    "user": text,
                    "assistant": assistant_text,
                    "outcome": outcome.kind,
                    "cases_added": [c.to_dict() for c in cases_added],
                    "status": state.status,
                },
            )
        except StorageUnavailable:
            pass  # the in-memory turn already completed; journaling is best-effort

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: dict):
        session = get_session(session_id)
        text = (body.get("text") or "").strip()
        if not text:
            raise HTTPException(status_code=422, detail="text must be non-empty")
        with session.lock:
            if session.running:
                raise HTTPException(status_code=409, detail="a turn is already running")
            session.running = True
            log = TurnLog(turn=len(session.turns) + 1)
            session.turns.append(log)
        thread = threading.Thread(target=_run, args=(session, log, text), daemon=True)
        thread.start()
        return {"turn": log.turn, "events": f"/sessions/{session_id}/events?turn={log.turn}"}

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, request: Request, turn: Optional[int] = None):
        session = get_session(session_id)
        if not session.turns:
            raise HTTPException(status_code=404, detail="no turns yet")
        index = (turn or len(session.turns)) - 1
        if not 0 <= index < len(session.turns):
            raise HTTPException(status_code=404, detail="unknown turn")
        log = session.turns[index]
        last_id = request.headers.get("Last-Event-ID")
        start = int(last_id) + 1 if last_id and last_id.isdigit() else 0

        def stream():
            position = start
            while True:
                with session.condition:
                    while position >= len(log.events) and not log.done:
                        session.condition.wait(timeout=30)
                    events = log.events[position:]
                    position = len(log.events)
                    finished = log.done
                for offset, event in enumerate(events):
                    event_id = position - len(events) + offset
                    yield (
                        f"id: {event_id}\n"
                        f"event: {event['event']}\n"
                        f"data: {json.dumps(event, ensure_ascii=False)}\n\n"
                    )
                if finished and position >= len(log.events):
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/history")
    def get_history(session_id: str):
        session = get_session(session_id)
        return {
            "session_id": session_id,
            "status": session.state.status,
            "messages": session.entries,
        }

    @app.get("/cases")
    def search_cases(
        case_id: Optional[str] = None,
        case_title: Optional[str] = None,
        jurisdiction: Optional[str] = None,
        violation: Optional[str] = None,
        sector: Optional[str] = None,
        companies: Optional[str] = None,
    ):
        raw = {
            "case_id": case_id,
            "case_title": case_title,
            "jurisdiction": jurisdiction,
            "violation": violation,
            "sector": sector,
            "companies": companies,
        }
        if not any(v for v in raw.values()):
            raise HTTPException(status_code=422, detail="at least one query parameter required")
        vector, dropped = toolbox.vocab.validate_query_vector(raw)
        if vector.is_empty():
            raise HTTPException(
                status_code=422,
                detail=f"no valid query dimensions (dropped: {dropped})",
            )
        try:
            result = database_search(vector, toolbox.case_store, toolbox.embed)
        except EmptyQueryVector:
            raise HTTPException(status_code=422, detail="empty query vector")
        return {"cases": [c.to_dict() for c in result.cases], "dropped_dimensions": dropped}

    return app


def create_store_app(store) -> FastAPI:
    """Server side of the remote vector-store wire contract."""
    app = FastAPI(title="lexagent-store")

    @app.post("/collections/{name}/upsert")
    def upsert(name: str, body: dict):
        store.upsert(
            name, [(e["id"], e["vector"], e["payload"]) for e in body.get("entries", [])]
        )
        return {"ok": True}

    @app.post("/collections/{name}/query")
    def query(name: str, body: dict):
        return {
            "results": store.query(
                name, body["vector"], body["top_k"], body.get("filter") or None
            )
        }

    @app.post("/collections/{name}/count")
    def count(name: str, body: dict):
        return {"count": store.count(name, body.get("filter") or None)}

    @app.post("/collections/{name}/scan")
    def scan(name: str, body: dict):
        return {"results": store.scan(name, body.get("filter") or None)}

    return app
