"""Command-line front end: batch annotation, edit-script replay, metrics.

Exit codes: 0 success, 1 usage errors surfaced by argparse, 2 pipeline or
invariant failure (provider/schema errors, fidelity violations), 3
unreadable or malformed input files.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from .document import Edit
from .errors import MarginaliaError, ProviderError, SchemaError, StorageFailure
from .llm import LLMClient, ProviderConfig
from .metrics import compute_metrics
from .store import Event, SessionConfig, SessionStore
from .threads import Orchestrator

EXIT_OK = 0
EXIT_PIPELINE = 2
EXIT_INPUT = 3


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise _InputError(f"cannot read {path}: {exc}") from exc


class _InputError(Exception):
    pass


def _json_dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write_output(path: str | None, content: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(content)
    else:
        Path(path).write_bytes(content.encode("utf-8"))


# ---------------------------------------------------------------------------
# annotate

def _annotate_payload(result, session) -> dict:
    threads = []
    for tid in result.created_threads:
        thread = session.threads[tid]
        threads.append({
            "thread_id": thread.thread_id,
            "span": thread.anchor.span.to_json(),
            "anchor_text": thread.anchor.anchor_text,
            "acw": thread.anchor.acw.to_json(),
            "status": thread.anchor.status,
            "comment": thread.messages[0].text,
        })
    return {
        "query_id": result.query_id,
        "raw_proposal_count": result.raw_proposal_count,
        "threads": threads,
        "rejected": [r.to_json() for r in result.rejected],
    }


def _render_annotated(text: str, payload: dict) -> str:
    """Markdown rendering: numbered inline markers plus footnoted comments."""
    markers = sorted(
        ((t["span"]["end"], i + 1) for i, t in enumerate(payload["threads"])),
        reverse=True,
    )
    out = text
    for position, number in markers:
        out = out[:position] + f"[^c{number}]" + out[position:]
    notes = ["", "---", ""]
    for i, t in enumerate(payload["threads"]):
        notes.append(f"[^c{i + 1}]: ({t['status']}, {t['acw']['level']} window) {t['comment']}")
    if not payload["threads"]:
        notes.append("(no comments)")
    return out + "\n".join(notes) + "\n"


def cmd_annotate(args) -> int:
    text = _read_text(args.doc)
    if args.mock:
        provider = ProviderConfig(mock_mode=True, mock_script=args.mock)
    else:
        provider = ProviderConfig()
    if args.session:
        return _annotate_run(SessionStore(args.session), text, provider, args)
    with tempfile.TemporaryDirectory() as tmp:
        return _annotate_run(SessionStore(tmp), text, provider, args)


def _annotate_run(store, text, provider, args) -> int:
    session = store.open_session(text, SessionConfig(), session_id="s1")
    orch = Orchestrator(store, session, LLMClient(provider))
    try:
        result = orch.run_meta_query(args.query)
    except (ProviderError, SchemaError) as exc:
        print(f"annotation failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    payload = _annotate_payload(result, session)
    _write_output(args.out, _json_dumps(payload))
    if args.render:
        _write_output(args.render, _render_annotated(session.head.text, payload))
    store.close(session)
    return EXIT_OK


# ---------------------------------------------------------------------------
# replay

def _load_script(path: str) -> list:
    raw = _read_text(path)
    try:
        data = json.loads(raw)
        if not isinstance(data, list):
            raise ValueError("script must be a JSON array of edit batches")
        batches = []
        for batch in data:
            if not isinstance(batch, list):
                raise ValueError("each batch must be an array of edits")
            batches.append([Edit.from_json(e) for e in batch])
        return batches
    except (ValueError, KeyError, TypeError) as exc:
        raise _InputError(f"malformed edit script {path}: {exc}") from exc


def check_anchor_fidelity(session) -> list:
    """Threads whose live anchor text no longer matches the document."""
    violations = []
    head = session.head
    for thread in session.threads_sorted():
        anchor = thread.anchor
        if anchor.status == "orphaned" or anchor.span is None:
            continue
        if head.text[anchor.span.start : anchor.span.end] != anchor.anchor_text:
            violations.append(thread.thread_id)
    return violations


def _open_session_dir(path: str):
    """Accept either a store root holding one session or a session directory."""
    p = Path(path)
    if (p / "session.json").is_file():
        store = SessionStore(p.parent)
        return store, store.load_session(p.name)
    store = SessionStore(p)
    sessions = store.list_sessions()
    if len(sessions) != 1:
        raise _InputError(f"{path} must contain exactly one session, found {sessions}")
    return store, store.load_session(sessions[0])


def cmd_replay(args) -> int:
    try:
        store, session = _open_session_dir(args.session)
    except (MarginaliaError, OSError) as exc:
        print(f"cannot open session: {exc}", file=sys.stderr)
        return EXIT_INPUT
    batches = _load_script(args.script)
    orch = Orchestrator(store, session, LLMClient(ProviderConfig(mock_mode=True)))

    before = {t.thread_id: t.anchor.status for t in session.threads_sorted()}
    failed = False
    for i, batch in enumerate(batches, start=1):
        new, statuses = orch.apply_edits(session.head.version_id, batch)
        transitions = []
        for tid, status in statuses:
            old = before.get(tid, "intact")
            marker = f"{old}->{status}" if old != status else status
            transitions.append(f"{tid} {marker}")
            before[tid] = status
        print(f"batch {i} -> version {new.version_id}: " + (", ".join(transitions) or "no threads"))
        violations = check_anchor_fidelity(session)
        if violations:
            print(f"fidelity violation in batch {i}: {violations}", file=sys.stderr)
            failed = True
    if not batches:
        for tid, status in ((t.thread_id, t.anchor.status) for t in session.threads_sorted()):
            print(f"{tid} {status}")
    store.close(session)
    return EXIT_PIPELINE if failed else EXIT_OK


# ---------------------------------------------------------------------------
# metrics

def _load_events(path: str) -> list:
    raw = _read_text(path)
    events = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            events.append(Event.from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise _InputError(f"{path}:{lineno}: malformed event: {exc}") from exc
    return events


def cmd_metrics(args) -> int:
    events = _load_events(args.events)
    initial = _read_text(args.initial)
    final = _read_text(args.final)
    metrics = compute_metrics(events, initial, final)
    rows = [
        ("copy/paste actions", str(metrics.copy_paste_actions)),
        ("mean words pasted", f"{metrics.mean_words_pasted:.2f}"),
        ("percent changed", f"{metrics.percent_document_changed:.4f}"),
    ]
    for source, count in sorted(metrics.source_breakdown.items()):
        rows.append((f"pastes from {source}", str(count)))
    width = max(len(r[0]) for r in rows)
    for label, value in rows:
        print(f"{label.ljust(width)}  {value}")
    _write_output(args.out, _json_dumps(metrics.to_json()))
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve

def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    provider = ProviderConfig()
    if args.config:
        data = json.loads(_read_text(args.config))
        provider = ProviderConfig.from_json(data.get("provider", {}))
        args.host = data.get("host", args.host)
        args.port = int(data.get("port", args.port))
    if args.mock:
        provider = ProviderConfig(mock_mode=True, mock_script=args.mock)
    app = create_app(args.root, provider=provider)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="marginalia",
                                     description="anchored commenting engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="run a document-wide query and emit anchored comments")
    p.add_argument("--doc", required=True, help="input text/markdown file")
    p.add_argument("--query", required=True, help="review instruction")
    p.add_argument("--mock", help="mock provider script (JSON)")
    p.add_argument("--out", help="write result JSON here (default stdout)")
    p.add_argument("--render", help="write annotated markdown here")
    p.add_argument("--session", help="persist the session to this directory")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("replay", help="apply an edit script and report anchor transitions")
    p.add_argument("--session", required=True, help="session store directory")
    p.add_argument("--script", required=True, help="JSON array of edit batches")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("metrics", help="compute revision metrics from an event log")
    p.add_argument("--events", required=True, help="newline-delimited JSON event log")
    p.add_argument("--initial", required=True, help="initial document text file")
    p.add_argument("--final", required=True, help="final document text file")
    p.add_argument("--out", help="write metrics JSON here (default stdout)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--root", required=True, help="session store root directory")
    p.add_argument("--config", help="JSON config file (host, port, provider)")
    p.add_argument("--mock", help="mock provider script (JSON)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except StorageFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except MarginaliaError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
