"""HTTP facade over sessions: create, step, edit, inspect, export, autorun.

All handlers are synchronous (one step is one blocking LLM call) and run in
the server's worker threads; per-session exclusivity comes from the engine's
mutation slot, so a second step request for a busy session fails fast with
409 instead of queueing. Sessions are loaded from disk on demand, cached, and
written through after every successful mutation.

Error mapping: 400 invalid meta; 404 unknown session; 409 step in flight;
422 bad parameters or edits; 502 provider failure (state unchanged).
"""

from __future__ import annotations

import json
import shutil
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Body, FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from .config import EngineSettings
from .engine import (
    EditRecord,
    RecurrenceEngine,
    ReplaceLastContent,
    ReplacePlan,
    ReplaceShortTerm,
    StepRecord,
    consistent_view,
    derive_session_id,
)
from .errors import (
    EmptyTextError,
    EngineError,
    InvalidEditError,
    InvalidMetaError,
    InvalidPlanError,
    ProviderError,
    ScribeError,
    SessionNotFoundError,
    StepInFlightError,
)
from .persistence import (
    AuditEntry,
    export_transcript,
    load_session,
    save_session,
    session_dir,
    session_path,
    store_path,
)
from .providers import Provider, ProviderConfig, make_provider
from .state import Plan, SessionMeta, SessionState

_OVERRIDE_KEYS = ("plan_count", "retrieval_k", "context_budget")


@dataclass(frozen=True)
class ServiceConfig:
    """Everything the service needs: where to bind, store, and generate."""

    data_dir: Path
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    host: str = "127.0.0.1"
    port: int = 8000
    plan_count: int | None = None
    retrieval_k: int | None = None
    context_budget: int | None = None
    step_timeout: float = 120.0  # deploy-level knob; handlers stay synchronous

    @classmethod
    def from_file(cls, path: Path) -> "ServiceConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        provider = ProviderConfig(**doc.get("provider", {}))
        known = {k: doc[k] for k in
                 ("host", "port", "plan_count", "retrieval_k",
                  "context_budget", "step_timeout") if k in doc}
        return cls(data_dir=Path(doc["data_dir"]), provider=provider, **known)

    def engine_settings(self) -> EngineSettings:
        overrides = {k: getattr(self, k) for k in _OVERRIDE_KEYS
                     if getattr(self, k) is not None}
        return EngineSettings().with_overrides(**overrides)


class SessionManager:
    """Disk-backed session registry with an in-process cache.

    Per-session engine settings (creation-time overrides) live only in this
    process; a reloaded session falls back to the service defaults.
    """

    def __init__(self, data_dir: Path, provider: Provider, settings: EngineSettings):
        self.data_dir = Path(data_dir)
        self.provider = provider
        self.settings = settings
        self._cache: dict[str, tuple[SessionState, list[AuditEntry], RecurrenceEngine]] = {}
        self._mutex = threading.Lock()

    def _engine(self, overrides: dict | None = None) -> RecurrenceEngine:
        settings = self.settings.with_overrides(**overrides) if overrides else self.settings
        return RecurrenceEngine(self.provider, settings)

    def create(self, meta: SessionMeta, seed: int,
               overrides: dict | None = None) -> tuple[SessionState, RecurrenceEngine]:
        engine = self._engine(overrides)
        session_id = self._fresh_id(meta, seed)
        try:
            state = engine.init_session(meta, seed,
                                        store_dir=store_path(self.data_dir, session_id),
                                        session_id=session_id)
            audit: list[AuditEntry] = []
            save_session(state, audit, session_path(self.data_dir, session_id))
        except ScribeError:
            shutil.rmtree(session_dir(self.data_dir, session_id), ignore_errors=True)
            raise
        with self._mutex:
            self._cache[session_id] = (state, audit, engine)
        return state, engine

    def _fresh_id(self, meta: SessionMeta, seed: int) -> str:
        base = derive_session_id(meta, seed)
        candidate, n = base, 1
        while session_path(self.data_dir, candidate).exists():
            n += 1
            candidate = f"{base}-{n}"
        return candidate

    def get(self, session_id: str) -> tuple[SessionState, list[AuditEntry], RecurrenceEngine]:
        with self._mutex:
            hit = self._cache.get(session_id)
            if hit is not None:
                return hit
            path = session_path(self.data_dir, session_id)
            if not path.is_file():
                raise SessionNotFoundError(f"no session {session_id}")
            state, audit = load_session(path)
            entry = (state, audit, self._engine())
            self._cache[session_id] = entry
            return entry

    def save(self, state: SessionState, audit: list[AuditEntry]) -> None:
        save_session(state, audit, session_path(self.data_dir, state.id))


# --- response shaping ---

def _plan_doc(p: Plan) -> dict:
    return {"text": p.text, "origin": p.origin}


def _content_doc(c) -> dict:
    return {"text": c.text, "timestep": c.timestep}


def _summary_view(state: SessionState) -> dict:
    return {
        "id": state.id,
        "mode": state.meta.mode,
        "step": state.step,
        "short_term": state.short_term.text,
        "pending_plans": [_plan_doc(p) for p in state.pending_plans],
        "last_content": _content_doc(state.last_content),
    }


def _session_view(state: SessionState) -> dict:
    view = _summary_view(state)
    view.update({
        "meta": {
            "title": state.meta.title,
            "genre": state.meta.genre,
            "background": state.meta.background,
            "mode": state.meta.mode,
            "perspective": state.meta.perspective,
        },
        "transcript": [_content_doc(c) for c in state.transcript],
        "current_plan": (_plan_doc(state.current_plan)
                         if state.current_plan is not None else None),
        "memory_size": len(state.long_term),
    })
    return view


_STATUS_BY_ERROR: tuple[tuple[type, int], ...] = (
    (SessionNotFoundError, 404),
    (StepInFlightError, 409),
    (InvalidMetaError, 400),
    (InvalidEditError, 422),
    (InvalidPlanError, 422),
    (EmptyTextError, 422),
    (EngineError, 502),   # unparseable after retry: the backend failed us
    (ProviderError, 502),
)


def _status_for(exc: ScribeError) -> int:
    for klass, status in _STATUS_BY_ERROR:
        if isinstance(exc, klass):
            return status
    return 500


class _BadRequest(ScribeError):
    """Parameter problems detected in handlers; mapped to 422."""


def create_app(config: ServiceConfig, provider: Provider | None = None) -> FastAPI:
    """Build the application; ``provider`` overrides the configured one (tests)."""
    data_dir = Path(config.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    probe = data_dir / ".writable"
    probe.touch()
    probe.unlink()

    provider = provider if provider is not None else make_provider(config.provider)
    manager = SessionManager(data_dir, provider, config.engine_settings())

    app = FastAPI(title="recurrent-scribe", version="1")
    app.state.manager = manager
    app.state.config = config

    @app.exception_handler(ScribeError)
    def scribe_error(request: Request, exc: ScribeError) -> JSONResponse:
        status = 422 if isinstance(exc, _BadRequest) else _status_for(exc)
        return JSONResponse(status_code=status,
                            content={"detail": str(exc), "error": type(exc).__name__})

    @app.post("/sessions", status_code=201)
    def create_session(body: dict = Body(...)) -> dict:
        meta = _meta_from_body(body)
        seed = body.get("seed", 0)
        if not isinstance(seed, int):
            raise _BadRequest("seed must be an integer")
        overrides = body.get("overrides") or {}
        if not isinstance(overrides, dict) or \
                any(k not in _OVERRIDE_KEYS for k in overrides):
            raise _BadRequest(f"overrides may only set {', '.join(_OVERRIDE_KEYS)}")
        state, _ = manager.create(meta, seed, overrides)
        return _summary_view(state)

    @app.post("/sessions/{session_id}/step")
    def advance(session_id: str, body: dict = Body(...)) -> dict:
        state, audit, engine = manager.get(session_id)
        plan = _plan_from_body(body, state)

        def persist(st: SessionState, record: StepRecord) -> None:
            audit.append(record)
            manager.save(st, audit)

        state, _ = engine.step(state, plan, on_record=persist)
        with consistent_view(state.id):
            view = _summary_view(state)
        view["content"] = view["last_content"]
        return view

    @app.patch("/sessions/{session_id}")
    def edit(session_id: str, body: dict = Body(...)) -> dict:
        state, audit, engine = manager.get(session_id)
        edit_cmd = _edit_from_body(body)

        def persist(st: SessionState, record: EditRecord) -> None:
            audit.append(record)
            manager.save(st, audit)

        state, _ = engine.apply_edit(state, edit_cmd, on_record=persist)
        with consistent_view(state.id):
            return _session_view(state)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        state, _, _ = manager.get(session_id)
        with consistent_view(state.id):
            return _session_view(state)

    @app.get("/sessions/{session_id}/memory")
    def get_memory(session_id: str, query: str = "", k: int = 3) -> dict:
        state, _, _ = manager.get(session_id)
        if k < 1:
            raise _BadRequest(f"k must be >= 1, got {k}")
        if not query.strip():
            raise _BadRequest("query must be non-empty")
        embedding = provider.embed(query)
        with consistent_view(state.id):
            scored = state.long_term.retrieve_scored(embedding, k)
        return {"entries": [{"timestep": e.timestep, "text": e.content_text,
                             "similarity": score} for e, score in scored]}

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, format: str = "plain") -> Response:
        state, _, _ = manager.get(session_id)
        if format not in ("plain", "markdown"):
            raise _BadRequest(f"unknown export format {format!r}")
        with consistent_view(state.id):
            text = export_transcript(state, format)
        media = "text/markdown" if format == "markdown" else "text/plain"
        return PlainTextResponse(text, media_type=media)

    @app.post("/sessions/{session_id}/autorun")
    def autorun(session_id: str, body: dict = Body(...)) -> dict:
        state, audit, engine = manager.get(session_id)
        n_steps = body.get("n_steps")
        if not isinstance(n_steps, int) or n_steps < 0:
            raise _BadRequest("n_steps must be a non-negative integer")
        start_step = state.step

        def persist(st: SessionState, record: StepRecord) -> None:
            audit.append(record)
            manager.save(st, audit)

        state, report = engine.run_autonomous(state, n_steps, on_record=persist)
        return {
            "id": state.id,
            "start_step": start_step,
            "end_step": state.step,
            "requested": report.requested,
            "completed": report.completed,
            "failed_step": report.failed_step,
            "error": report.error,
        }

    return app


def _meta_from_body(body: dict) -> SessionMeta:
    for key in ("title", "genre", "background"):
        if not isinstance(body.get(key), str) or not body[key].strip():
            raise InvalidMetaError(f"meta field {key!r} must be a non-empty string")
    try:
        return SessionMeta(
            title=body["title"],
            genre=body["genre"],
            background=body["background"],
            mode=body.get("mode", "writer"),
            perspective=body.get("perspective", ""),
            initial_short_term=body.get("initial_short_term"),
            initial_plan=body.get("initial_plan"),
        )
    except (TypeError, ValueError) as e:
        raise InvalidMetaError(str(e)) from e


def _plan_from_body(body: dict, state: SessionState) -> Plan:
    index = body.get("plan_index")
    text = body.get("plan_text")
    if (index is None) == (text is None):
        raise _BadRequest("provide exactly one of plan_index or plan_text")
    if text is not None:
        if not isinstance(text, str) or not text.strip():
            raise _BadRequest("plan_text must be a non-empty string")
        return Plan(text, origin="human")
    if not isinstance(index, int) or isinstance(index, bool):
        raise _BadRequest("plan_index must be an integer")
    if not 0 <= index < len(state.pending_plans):
        raise _BadRequest(
            f"plan_index {index} out of range for {len(state.pending_plans)} plans")
    return state.pending_plans[index]


def _edit_from_body(body: dict):
    kind = body.get("kind")
    text = body.get("text")
    if not isinstance(text, str):
        raise InvalidEditError("edit text must be a string")
    if kind == "replace_short_term":
        return ReplaceShortTerm(text)
    if kind == "replace_plan":
        index = body.get("index")
        if not isinstance(index, int) or isinstance(index, bool):
            raise InvalidEditError("replace_plan needs an integer index")
        return ReplacePlan(index, text)
    if kind == "replace_last_content":
        return ReplaceLastContent(text)
    raise InvalidEditError(f"unknown edit kind {kind!r}")
