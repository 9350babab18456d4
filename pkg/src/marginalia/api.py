"""HTTP/JSON surface over the session store and pipelines.

Request bodies are validated by hand so every failure maps onto the one
error shape: ``{"code", "message", "detail"}`` with code one of
bad_request, not_found, feature_disabled, provider_error, conflict.
Every success response carries the session's current ``head_version_id``
so clients can detect staleness; edits are optimistically checked against
the submitted base version and conflict with 409 instead of losing updates.
"""

from __future__ import annotations

import threading
import time
from typing import Callable, Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .document import Edit, Span
from .errors import (
    FeatureDisabled,
    InvalidEdit,
    InvalidEncoding,
    MarginaliaError,
    OverlappingEdits,
    ProviderError,
    SchemaError,
    SessionNotFound,
    SpanOutOfBounds,
    StorageFailure,
    ThreadNotFound,
    VersionMismatch,
)
from .llm import LLMClient, ProviderConfig
from .metrics import compute_metrics
from .store import EVENT_KINDS, PASTE_SOURCES, Event, SessionConfig, SessionStore
from .threads import Orchestrator


class ApiError(MarginaliaError):
    def __init__(self, code: str, message: str, status: int, detail: str = ""):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status
        self.detail = detail

    def response(self) -> JSONResponse:
        return JSONResponse(
            status_code=self.status,
            content={"code": self.code, "message": self.message, "detail": self.detail},
        )


def _bad_request(message: str, detail: str = "") -> ApiError:
    return ApiError("bad_request", message, 400, detail)


_DOMAIN_STATUS = [
    ((SessionNotFound, ThreadNotFound), "not_found", 404),
    ((FeatureDisabled,), "feature_disabled", 403),
    ((VersionMismatch,), "conflict", 409),
    ((ProviderError, SchemaError), "provider_error", 502),
    ((SpanOutOfBounds, OverlappingEdits, InvalidEdit, InvalidEncoding), "bad_request", 400),
    ((StorageFailure,), "provider_error", 502),
]


def _to_api_error(exc: Exception) -> ApiError:
    for types, code, status in _DOMAIN_STATUS:
        if isinstance(exc, types):
            return ApiError(code, str(exc), status)
    return ApiError("bad_request", str(exc), 400)


class SessionRegistry:
    """Loaded sessions plus their per-session write locks."""

    def __init__(self, store: SessionStore, client_factory: Callable[[], LLMClient],
                 clock: Callable[[], float]):
        self.store = store
        self.clock = clock
        self._client_factory = client_factory
        self._orchestrators: dict = {}
        self._locks: dict = {}
        self._registry_lock = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def create(self, text: str, config: SessionConfig) -> Orchestrator:
        session = self.store.open_session(text, config)
        orch = Orchestrator(self.store, session, self._client_factory(), clock=self.clock)
        with self._registry_lock:
            self._orchestrators[session.session_id] = orch
        return orch

    def get(self, session_id: str) -> Orchestrator:
        with self._registry_lock:
            orch = self._orchestrators.get(session_id)
        if orch is None:
            session = self.store.load_session(session_id)
            orch = Orchestrator(self.store, session, self._client_factory(), clock=self.clock)
            with self._registry_lock:
                self._orchestrators[session_id] = orch
        return orch


async def _json_body(request: Request) -> dict:
    try:
        data = await request.json()
    except Exception as exc:
        raise _bad_request("request body must be valid JSON", str(exc)) from exc
    if not isinstance(data, dict):
        raise _bad_request("request body must be a JSON object")
    return data


def _parse_config(data: object) -> SessionConfig:
    if data is None:
        return SessionConfig()
    if not isinstance(data, dict):
        raise _bad_request("config must be an object")
    unknown = set(data) - {"study_mode", "snapshot_interval_s", "refine_enabled"}
    if unknown:
        raise _bad_request(f"unknown config fields: {sorted(unknown)}")
    try:
        return SessionConfig.from_json(data)
    except (TypeError, ValueError) as exc:
        raise _bad_request("invalid config", str(exc)) from exc


def _parse_span(data: object) -> Span:
    if not isinstance(data, dict) or "start" not in data or "end" not in data:
        raise _bad_request("span must be an object with start and end")
    try:
        return Span(int(data["start"]), int(data["end"]))
    except (TypeError, ValueError, SpanOutOfBounds) as exc:
        raise _bad_request("invalid span", str(exc)) from exc


def _parse_edits(data: object) -> list:
    if not isinstance(data, list):
        raise _bad_request("edits must be an array")
    edits = []
    for i, item in enumerate(data):
        if not isinstance(item, dict):
            raise _bad_request(f"edit {i} must be an object")
        kind = item.get("kind")
        if kind not in ("insert", "delete", "replace"):
            raise _bad_request(f"edit {i}: unknown kind {kind!r}")
        span = _parse_span(item.get("at"))
        new_text = item.get("new_text", "")
        if not isinstance(new_text, str):
            raise _bad_request(f"edit {i}: new_text must be a string")
        try:
            edits.append(Edit(kind, span, new_text))
        except InvalidEdit as exc:
            raise _bad_request(f"edit {i}: {exc}") from exc
    return edits


def _thread_payload(thread) -> dict:
    return thread.to_json()


def _session_view(orch: Orchestrator) -> dict:
    session = orch.session
    head = session.head
    return {
        "session_id": session.session_id,
        "head_version_id": head.version_id,
        "text": head.text,
        "config": session.config.to_json(),
        "threads": [_thread_payload(t) for t in session.threads_sorted()],
    }


def create_app(store_root, provider: Optional[ProviderConfig] = None,
               auth_token: Optional[str] = None,
               clock: Callable[[], float] = time.time) -> FastAPI:
    provider = provider or ProviderConfig()
    store = SessionStore(store_root, clock=clock)
    registry = SessionRegistry(store, lambda: LLMClient(provider), clock)

    app = FastAPI(title="marginalia", docs_url=None, redoc_url=None)
    app.state.registry = registry
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return exc.response()

    @app.exception_handler(MarginaliaError)
    async def _domain_error(request: Request, exc: MarginaliaError):
        return _to_api_error(exc).response()

    def _check_auth(request: Request) -> None:
        if auth_token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {auth_token}":
            raise ApiError("bad_request", "missing or invalid bearer token", 401)

    def _locked(session_id: str):
        return registry.lock(session_id)

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        _check_auth(request)
        body = await _json_body(request)
        text = body.get("text")
        if not isinstance(text, str):
            raise _bad_request("text must be a string")
        config = _parse_config(body.get("config"))
        orch = registry.create(text, config)
        return {
            "session_id": orch.session.session_id,
            "version_id": orch.session.head.version_id,
            "head_version_id": orch.session.head.version_id,
        }

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str, request: Request):
        _check_auth(request)
        orch = registry.get(session_id)
        return _session_view(orch)

    @app.post("/sessions/{session_id}/edits")
    async def post_edits(session_id: str, request: Request):
        _check_auth(request)
        body = await _json_body(request)
        if "base_version" not in body:
            raise _bad_request("base_version is required")
        try:
            base_version = int(body["base_version"])
        except (TypeError, ValueError):
            raise _bad_request("base_version must be an integer") from None
        edits = _parse_edits(body.get("edits", []))
        orch = registry.get(session_id)
        with _locked(session_id):
            new, statuses = orch.apply_edits(base_version, edits)
        return {
            "version_id": new.version_id,
            "head_version_id": new.version_id,
            "anchor_statuses": [{"thread_id": t, "status": s} for t, s in statuses],
        }

    @app.post("/sessions/{session_id}/meta-queries")
    async def post_meta_query(session_id: str, request: Request):
        _check_auth(request)
        body = await _json_body(request)
        query = body.get("query")
        if not isinstance(query, str) or not query:
            raise _bad_request("query must be a non-empty string")
        orch = registry.get(session_id)
        with _locked(session_id):
            result = orch.run_meta_query(query)
            payload = result.to_json()
            payload["threads"] = [
                _thread_payload(orch.session.threads[tid]) for tid in result.created_threads
            ]
            payload["head_version_id"] = orch.session.head.version_id
        return payload

    @app.post("/sessions/{session_id}/threads", status_code=201)
    async def post_thread(session_id: str, request: Request):
        _check_auth(request)
        body = await _json_body(request)
        message = body.get("message")
        if not isinstance(message, str) or not message:
            raise _bad_request("message must be a non-empty string")
        orch = registry.get(session_id)
        with _locked(session_id):
            if body.get("span") is not None:
                span = _parse_span(body["span"])
            else:
                text_length = len(orch.session.head.text)
                if text_length == 0:
                    raise _bad_request("cannot open a thread on an empty document")
                span = Span(0, text_length)
            thread = orch.create_user_thread(span, message)
            payload = _thread_payload(thread)
            payload["head_version_id"] = orch.session.head.version_id
        return payload

    async def _post_message(session_id: str, thread_id: str, request: Request):
        _check_auth(request)
        body = await _json_body(request)
        message = body.get("message")
        if not isinstance(message, str) or not message:
            raise _bad_request("message must be a non-empty string")
        orch = registry.get(session_id)
        with _locked(session_id):
            reply = orch.reply_in_thread(thread_id, message)
            thread = orch.session.threads[thread_id]
            return {
                "message": reply.to_json(),
                "thread_state": thread.state,
                "anchor_status": thread.anchor.status,
                "head_version_id": orch.session.head.version_id,
            }

    @app.post("/sessions/{session_id}/threads/{thread_id}/messages", status_code=201)
    async def post_message(session_id: str, thread_id: str, request: Request):
        return await _post_message(session_id, thread_id, request)

    @app.post("/threads/{thread_id}/messages", status_code=201)
    async def post_message_global(thread_id: str, request: Request):
        # thread ids are globally unique: "<session_id>.t<n>"
        if ".t" not in thread_id:
            raise ThreadNotFound(f"no thread {thread_id!r}")
        session_id = thread_id.rsplit(".t", 1)[0]
        return await _post_message(session_id, thread_id, request)

    @app.get("/sessions/{session_id}/metrics")
    async def get_metrics(session_id: str, request: Request):
        _check_auth(request)
        orch = registry.get(session_id)
        session = orch.session
        initial = session.versions[min(session.versions)].text
        final = session.head.text
        payload = compute_metrics(session.events, initial, final).to_json()
        payload["head_version_id"] = session.head.version_id
        return payload

    @app.post("/sessions/{session_id}/events", status_code=201)
    async def post_event(session_id: str, request: Request):
        _check_auth(request)
        body = await _json_body(request)
        kind = body.get("kind")
        if kind not in ("copy", "paste", "snapshot"):
            raise _bad_request("kind must be copy, paste, or snapshot")
        payload = body.get("payload") or {}
        if not isinstance(payload, dict):
            raise _bad_request("payload must be an object")
        orch = registry.get(session_id)
        with _locked(session_id):
            session = orch.session
            if kind == "snapshot":
                text = payload.get("text", session.head.text)
                if not isinstance(text, str):
                    raise _bad_request("snapshot text must be a string")
                before = session.head.version_id
                event = registry.store.record_snapshot(session, text)
                if session.head.version_id != before:
                    orch.refresh_anchors()
            else:
                if "text" not in payload or not isinstance(payload["text"], str):
                    raise _bad_request(f"{kind} payload needs a text field")
                source = payload.get("source", "external")
                if source not in PASTE_SOURCES:
                    raise _bad_request(f"source must be one of {PASTE_SOURCES}")
                event = Event(kind, clock(), {"text": payload["text"], "source": source})
                registry.store.commit_event(session, event)
            return {
                "recorded": True,
                "kind": event.kind,
                "head_version_id": session.head.version_id,
            }

    @app.get("/sessions/{session_id}/events")
    async def get_events(session_id: str, request: Request, kind: Optional[str] = None):
        _check_auth(request)
        if kind is not None and kind not in EVENT_KINDS:
            raise _bad_request(f"kind must be one of {EVENT_KINDS}")
        orch = registry.get(session_id)
        events = registry.store.query(orch.session, "events", kind=kind)
        return {
            "events": [e.to_json() for e in events],
            "head_version_id": orch.session.head.version_id,
        }

    @app.get("/sessions/{session_id}/history")
    async def get_history(session_id: str, request: Request):
        _check_auth(request)
        orch = registry.get(session_id)
        versions = registry.store.query(orch.session, "history")
        return {
            "versions": [
                {
                    "version_id": v.version_id,
                    "parent_id": v.parent_id,
                    "created_at": v.created_at,
                    "length": len(v.text),
                }
                for v in versions
            ],
            "head_version_id": orch.session.head.version_id,
        }

    return app
