"""Persistent session state: version lineage, threads, and the event log.

Layout, one directory per session:

    <root>/<session_id>/
        session.json      mutable header (config, cached version pointer)
        versions.ndjson   append-only lineage records pointing at text blobs
        blobs/<sha256>    deduplicated version texts
        events.ndjson     append-only instrumentation/event log
        threads.json      current thread states (rewritten atomically)
        lock              advisory single-writer lock

Events are never mutated; snapshots of unchanged text record an event but
mint no new version.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from .diffing import compute_changes
from .document import DocumentVersion, SegmentationConfig, apply_edits, ingest
from .errors import SessionNotFound, StorageFailure, VersionMismatch

EVENT_KINDS = ("copy", "paste", "snapshot", "query", "reply", "edit")
PASTE_SOURCES = ("document", "feedback-pane", "external")


@dataclass(frozen=True)
class SessionConfig:
    study_mode: bool = False
    snapshot_interval_s: float = 10.0
    refine_enabled: bool = True

    def to_json(self) -> dict:
        return {
            "study_mode": self.study_mode,
            "snapshot_interval_s": self.snapshot_interval_s,
            "refine_enabled": self.refine_enabled,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SessionConfig":
        known = {f: data[f] for f in ("study_mode", "snapshot_interval_s", "refine_enabled")
                 if f in data}
        return cls(**known)


@dataclass(frozen=True)
class Event:
    kind: str
    timestamp: float
    payload: dict

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "timestamp": self.timestamp, "payload": self.payload}

    @classmethod
    def from_json(cls, data: dict) -> "Event":
        return cls(data["kind"], float(data["timestamp"]), data.get("payload", {}))


@dataclass
class Session:
    """In-memory view of one session; mutated only through its store."""

    session_id: str
    config: SessionConfig
    versions: dict = field(default_factory=dict)  # version_id -> DocumentVersion
    threads: dict = field(default_factory=dict)   # thread_id -> CommentThread
    events: list = field(default_factory=list)
    cached_version_id: int = 0

    @property
    def head(self) -> DocumentVersion:
        return self.versions[max(self.versions)]

    def version(self, version_id: int) -> DocumentVersion:
        try:
            return self.versions[version_id]
        except KeyError:
            raise VersionMismatch(f"version {version_id} not in session lineage") from None

    def threads_sorted(self) -> list:
        return [self.threads[k] for k in sorted(self.threads, key=_thread_sort_key)]


def _thread_sort_key(thread_id: str):
    tail = thread_id.rsplit(".t", 1)
    if len(tail) == 2 and tail[1].isdigit():
        return (tail[0], int(tail[1]))
    return (thread_id, 0)


def _blob_name(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class SessionStore:
    """Disk-backed store; one writer per session, any number of readers."""

    def __init__(self, root, clock: Callable[[], float] = time.time):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self._locks: dict = {}

    # -- session lifecycle ---------------------------------------------------

    def new_session_id(self) -> str:
        existing = [p.name for p in self.root.iterdir() if p.is_dir()]
        numbers = [int(name[1:]) for name in existing if name.startswith("s") and name[1:].isdigit()]
        return f"s{max(numbers, default=0) + 1}"

    def open_session(self, document_text: str, config: Optional[SessionConfig] = None,
                     session_id: Optional[str] = None,
                     segmentation: SegmentationConfig = SegmentationConfig()) -> Session:
        config = config or SessionConfig()
        sid = session_id or self.new_session_id()
        sdir = self.root / sid
        if sdir.exists():
            raise StorageFailure(f"session directory {sdir} already exists")
        version0 = ingest(document_text, segmentation, created_at=self.clock())
        try:
            (sdir / "blobs").mkdir(parents=True)
            self._acquire_lock(sid)
            session = Session(session_id=sid, config=config)
            session.versions[0] = version0
            self._write_session_header(session)
            self._append_version_record(sid, version0)
            self._write_threads(session)
        except OSError as exc:
            raise StorageFailure(f"could not initialize session {sid}: {exc}") from exc
        return session

    def load_session(self, session_id: str, writer: bool = True) -> Session:
        from .threads import CommentThread  # local import to avoid a cycle

        sdir = self.root / session_id
        if not sdir.is_dir():
            raise SessionNotFound(f"no session {session_id!r} under {self.root}")
        if writer:
            self._acquire_lock(session_id)
        try:
            header = json.loads((sdir / "session.json").read_text("utf-8"))
            session = Session(
                session_id=session_id,
                config=SessionConfig.from_json(header.get("config", {})),
                cached_version_id=int(header.get("cached_version_id", 0)),
            )
            seg = SegmentationConfig()
            for line in _read_ndjson(sdir / "versions.ndjson"):
                text = (sdir / "blobs" / line["blob"]).read_text("utf-8")
                session.versions[int(line["version_id"])] = DocumentVersion(
                    version_id=int(line["version_id"]),
                    text=text,
                    parent_id=line.get("parent_id"),
                    created_at=float(line.get("created_at", 0.0)),
                    config=seg,
                )
            for line in _read_ndjson(sdir / "events.ndjson"):
                session.events.append(Event.from_json(line))
            threads_file = sdir / "threads.json"
            if threads_file.exists():
                data = json.loads(threads_file.read_text("utf-8"))
                for tdata in data.get("threads", []):
                    thread = CommentThread.from_json(tdata)
                    session.threads[thread.thread_id] = thread
        except (OSError, ValueError, KeyError) as exc:
            raise StorageFailure(f"could not load session {session_id}: {exc}") from exc
        return session

    def close(self, session: Session) -> None:
        self._release_lock(session.session_id)

    def list_sessions(self) -> list:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    # -- commits ---------------------------------------------------------------

    def commit(self, session: Session, item) -> Session:
        """Durably append a version, thread, or event to the session."""
        from .threads import CommentThread

        if isinstance(item, DocumentVersion):
            self.commit_version(session, item)
        elif isinstance(item, CommentThread):
            self.commit_thread(session, item)
        elif isinstance(item, Event):
            self.commit_event(session, item)
        else:
            raise TypeError(f"cannot commit {type(item).__name__}")
        return session

    def commit_version(self, session: Session, version: DocumentVersion) -> None:
        head = session.head
        if version.parent_id != head.version_id or version.version_id != head.version_id + 1:
            raise VersionMismatch(
                f"version {version.version_id} (parent {version.parent_id}) does not "
                f"extend head {head.version_id}"
            )
        session.versions[version.version_id] = version
        self._append_version_record(session.session_id, version)

    def commit_thread(self, session: Session, thread) -> None:
        session.threads[thread.thread_id] = thread
        self._write_threads(session)

    def commit_event(self, session: Session, event: Event) -> None:
        session.events.append(event)
        self._append_ndjson(self.root / session.session_id / "events.ndjson", event.to_json())

    def set_cached_version(self, session: Session, version_id: int) -> None:
        session.version(version_id)  # validates lineage membership
        session.cached_version_id = version_id
        self._write_session_header(session)

    def record_snapshot(self, session: Session, text: str) -> Event:
        """Record a periodic snapshot; identical text mints no new version."""
        head = session.head
        if text != head.text:
            edits = compute_changes(head, ingest(text, head.config)).as_edits()
            new = apply_edits(head, edits, created_at=self.clock())
            self.commit_version(session, new)
            head = new
        event = Event("snapshot", self.clock(), {"version_id": head.version_id})
        self.commit_event(session, event)
        return event

    # -- queries ---------------------------------------------------------------

    def query(self, session: Session, what: str, **filters) -> list:
        if what == "history":
            return [session.versions[k] for k in sorted(session.versions)]
        if what == "threads":
            threads = session.threads_sorted()
            state = filters.get("state")
            if state:
                threads = [t for t in threads if t.state == state]
            return threads
        if what == "events":
            events = list(session.events)
            kind = filters.get("kind")
            if kind:
                events = [e for e in events if e.kind == kind]
            return events
        raise ValueError(f"unknown query {what!r}")

    def state_fingerprint(self, session: Session, include_timestamps: bool = False) -> str:
        """Hash of the durable session state; timestamps excluded by default
        so replayed request logs can be compared run to run."""
        versions = [
            {"version_id": v.version_id, "parent_id": v.parent_id, "text": v.text}
            for v in self.query(session, "history")
        ]
        threads = []
        for t in session.threads_sorted():
            data = t.to_json()
            if not include_timestamps:
                for m in data["messages"]:
                    m.pop("timestamp", None)
            threads.append(data)
        events = []
        for e in session.events:
            data = e.to_json()
            if not include_timestamps:
                data.pop("timestamp", None)
            events.append(data)
        blob = json.dumps(
            {
                "config": session.config.to_json(),
                "cached_version_id": session.cached_version_id,
                "versions": versions,
                "threads": threads,
                "events": events,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # -- plumbing ----------------------------------------------------------------

    def _acquire_lock(self, session_id: str) -> None:
        if session_id in self._locks:
            return
        lock_path = self.root / session_id / "lock"
        lock_path.parent.mkdir(parents=True, exist_ok=True)
        fh = open(lock_path, "w")
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            fh.close()
            raise StorageFailure(f"session {session_id} is locked by another writer") from exc
        self._locks[session_id] = fh

    def _release_lock(self, session_id: str) -> None:
        fh = self._locks.pop(session_id, None)
        if fh is not None:
            try:
                fcntl.flock(fh, fcntl.LOCK_UN)
            finally:
                fh.close()

    def _write_session_header(self, session: Session) -> None:
        path = self.root / session.session_id / "session.json"
        _atomic_write(path, json.dumps(
            {
                "session_id": session.session_id,
                "config": session.config.to_json(),
                "cached_version_id": session.cached_version_id,
            },
            indent=2,
            sort_keys=True,
            ensure_ascii=False,
        ))

    def _append_version_record(self, session_id: str, version: DocumentVersion) -> None:
        sdir = self.root / session_id
        blob = _blob_name(version.text)
        blob_path = sdir / "blobs" / blob
        if not blob_path.exists():
            _atomic_write(blob_path, version.text)
        self._append_ndjson(sdir / "versions.ndjson", {
            "version_id": version.version_id,
            "parent_id": version.parent_id,
            "blob": blob,
            "created_at": version.created_at,
        })

    def _write_threads(self, session: Session) -> None:
        path = self.root / session.session_id / "threads.json"
        data = {"threads": [t.to_json() for t in session.threads_sorted()]}
        _atomic_write(path, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False))

    def _append_ndjson(self, path: Path, record: dict) -> None:
        try:
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(f"append to {path} failed: {exc}") from exc


def _read_ndjson(path: Path) -> Iterable[dict]:
    if not path.exists():
        return
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(content, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageFailure(f"write to {path} failed: {exc}") from exc
