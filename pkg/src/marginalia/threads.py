"""End-to-end pipelines: document-wide queries into anchored comment
threads, user-initiated threads, update-aware replies, and anchor refresh.

A meta-query is atomic: the provider call, validation, and anchor
resolution all happen before anything is committed, so a failure leaves
zero new threads. The cached comparison version only advances on success.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .anchoring import (
    Anchor,
    AnchorProposal,
    ContextWindow,
    Rejection,
    expand_acw,
    reanchor,
    resolve_proposal,
)
from .diffing import ChangeSet, LocalizedChange, compute_changes, localize
from .document import DocumentVersion, Span, apply_edits
from .errors import (
    FeatureDisabled,
    ProviderError,
    SchemaError,
    ThreadNotFound,
)
from .llm import (
    LLMClient,
    append_schema_complaint,
    build_meta_prompt,
    build_refine_prompt,
    build_thread_prompt,
    parse_proposal_object,
    parse_proposals,
    parse_reply_decision,
)
from .normalization import normalize
from .store import Event, Session, SessionStore


@dataclass
class Message:
    author: str  # user | ai
    text: str
    at_version_id: int
    timestamp: float
    action: Optional[str] = None  # reply decision, ai messages only

    def to_json(self) -> dict:
        data = {
            "author": self.author,
            "text": self.text,
            "at_version_id": self.at_version_id,
            "timestamp": self.timestamp,
        }
        if self.action is not None:
            data["action"] = self.action
        return data

    @classmethod
    def from_json(cls, data: dict) -> "Message":
        return cls(
            data["author"],
            data["text"],
            int(data["at_version_id"]),
            float(data["timestamp"]),
            data.get("action"),
        )


@dataclass
class CommentThread:
    thread_id: str
    anchor: Anchor
    origin: dict  # {"kind": "meta_query", "query_id": ...} | {"kind": "user_initiated"}
    messages: list = field(default_factory=list)
    state: str = "open"  # open | resolved | orphaned
    # coordinates of the context the last AI turn saw; replies localize
    # document changes against these
    context_version_id: int = 0
    context_acw_span: Optional[Span] = None

    def to_json(self) -> dict:
        return {
            "thread_id": self.thread_id,
            "anchor": self.anchor.to_json(),
            "origin": self.origin,
            "messages": [m.to_json() for m in self.messages],
            "state": self.state,
            "context_version_id": self.context_version_id,
            "context_acw_span": self.context_acw_span.to_json() if self.context_acw_span else None,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CommentThread":
        return cls(
            thread_id=data["thread_id"],
            anchor=Anchor.from_json(data["anchor"]),
            origin=data["origin"],
            messages=[Message.from_json(m) for m in data["messages"]],
            state=data["state"],
            context_version_id=int(data.get("context_version_id", 0)),
            context_acw_span=(
                Span.from_json(data["context_acw_span"]) if data.get("context_acw_span") else None
            ),
        )


@dataclass
class MetaQueryResult:
    query_id: str
    created_threads: list
    rejected: list
    raw_proposal_count: int

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "created_threads": list(self.created_threads),
            "rejected": [r.to_json() for r in self.rejected],
            "raw_proposal_count": self.raw_proposal_count,
        }


class Orchestrator:
    """Single-writer pipeline driver for one session."""

    def __init__(self, store: SessionStore, session: Session, client: LLMClient,
                 clock: Callable[[], float] = time.time):
        self.store = store
        self.session = session
        self.client = client
        self.clock = clock

    # -- id helpers --------------------------------------------------------

    def _next_thread_id(self, offset: int = 0) -> str:
        numbers = [
            int(tid.rsplit(".t", 1)[1])
            for tid in self.session.threads
            if ".t" in tid and tid.rsplit(".t", 1)[1].isdigit()
        ]
        return f"{self.session.session_id}.t{max(numbers, default=0) + 1 + offset}"

    def _next_query_id(self) -> str:
        count = sum(1 for e in self.session.events if e.kind == "query")
        return f"q{count + 1}"

    def _next_anchor_id(self, offset: int = 0) -> str:
        count = len(self.session.threads)
        return f"a{count + 1 + offset}"

    # -- meta-commentary -----------------------------------------------------

    def run_meta_query(self, query: str) -> MetaQueryResult:
        """Document-wide query -> one anchored thread per grounded proposal."""
        session = self.session
        head = session.head
        previous = session.version(session.cached_version_id)
        cs = compute_changes(previous, head)
        open_threads = [t for t in session.threads_sorted() if t.state != "resolved"]

        prompt = build_meta_prompt(query, head, cs, open_threads)
        proposals = self._complete_validated(prompt, parse_proposals)

        query_id = self._next_query_id()
        accepted: list[tuple[Anchor, str]] = []
        rejected: list[Rejection] = []
        seen: set = set()
        for proposal in proposals:
            result = resolve_proposal(head, proposal, self._next_anchor_id(len(accepted)))
            if isinstance(result, Rejection):
                rejected.append(result)
                continue
            key = (result.span.start, result.span.end, normalize(proposal.comment))
            if key in seen:
                continue
            seen.add(key)
            comment = proposal.comment
            if result.acw.level != "exact" and session.config.refine_enabled:
                comment = self._refine_comment(proposal, result.acw, head)
            accepted.append((result, comment))

        created: list[CommentThread] = []
        for i, (anchor, comment) in enumerate(accepted):
            thread = CommentThread(
                thread_id=self._next_thread_id(i),
                anchor=anchor,
                origin={"kind": "meta_query", "query_id": query_id},
                messages=[Message("ai", comment, head.version_id, self.clock())],
                state="open",
                context_version_id=head.version_id,
                context_acw_span=anchor.acw.span,
            )
            created.append(thread)

        # all resolution succeeded; only now touch the store
        for thread in created:
            self.store.commit_thread(self.session, thread)
        self.store.commit_event(self.session, Event("query", self.clock(), {
            "query_id": query_id,
            "query": query,
            "created_threads": [t.thread_id for t in created],
            "rejected": [r.to_json() for r in rejected],
            "raw_proposal_count": len(proposals),
        }))
        self.store.set_cached_version(self.session, head.version_id)
        return MetaQueryResult(
            query_id=query_id,
            created_threads=[t.thread_id for t in created],
            rejected=rejected,
            raw_proposal_count=len(proposals),
        )

    def _refine_comment(self, proposal: AnchorProposal, acw: ContextWindow,
                        version: DocumentVersion) -> str:
        """At most one restatement round; any failure keeps the original."""
        try:
            raw = self.client.complete(build_refine_prompt(proposal, acw, version))
            return parse_proposal_object(raw).comment
        except (ProviderError, SchemaError):
            return proposal.comment

    def _complete_validated(self, prompt, parser):
        """complete() + strict parse, with one schema-complaint re-ask."""
        raw = self.client.complete(prompt)
        try:
            return parser(raw)
        except SchemaError as first:
            raw = self.client.complete(append_schema_complaint(prompt, first))
            return parser(raw)

    # -- user threads -----------------------------------------------------------

    def create_user_thread(self, span: Span, message: str) -> CommentThread:
        session = self.session
        if session.config.study_mode:
            raise FeatureDisabled("user-initiated threads are disabled in study mode")
        head = session.head
        head.check_span(span)
        anchor = Anchor(
            anchor_id=self._next_anchor_id(),
            version_id=head.version_id,
            span=span,
            anchor_text=head.slice(span),
            acw=expand_acw(head, span),
            status="intact",
        )
        thread = CommentThread(
            thread_id=self._next_thread_id(),
            anchor=anchor,
            origin={"kind": "user_initiated"},
            messages=[],
            state="open",
            context_version_id=head.version_id,
            context_acw_span=anchor.acw.span,
        )
        self._generate_reply(thread, message)
        self.store.commit_thread(session, thread)
        self.store.commit_event(session, Event("reply", self.clock(), {
            "thread_id": thread.thread_id,
            "action": thread.messages[-1].action,
        }))
        return thread

    def reply_in_thread(self, thread_id: str, message: str) -> Message:
        session = self.session
        if session.config.study_mode:
            raise FeatureDisabled("thread conversations are disabled in study mode")
        thread = session.threads.get(thread_id)
        if thread is None:
            raise ThreadNotFound(f"no thread {thread_id!r}")
        reply = self._generate_reply(thread, message)
        self.store.commit_thread(session, thread)
        self.store.commit_event(session, Event("reply", self.clock(), {
            "thread_id": thread.thread_id,
            "action": reply.action,
        }))
        return reply

    def _generate_reply(self, thread: CommentThread, message: str) -> Message:
        """Append the user message, build the dual-context prompt, post the
        AI decision. On failure the user message is rolled back so nothing
        half-finished is ever committed."""
        session = self.session
        head = session.head

        base_version = session.version(thread.context_version_id)
        base_window = thread.context_acw_span or Span(0, len(base_version.text))
        cs = compute_changes(base_version, head)
        lc = localize(cs, base_window, old_length=len(base_version.text))

        if thread.anchor.status != "orphaned" and thread.anchor.version_id != head.version_id:
            anchor_cs = compute_changes(session.version(thread.anchor.version_id), head)
            thread.anchor = reanchor(thread.anchor, anchor_cs, head)
            if thread.anchor.status == "orphaned":
                thread.state = "orphaned"

        prompt_window = expand_acw(head, lc.affected_span)
        thread.messages.append(Message("user", message, head.version_id, self.clock()))
        try:
            prompt = build_thread_prompt(thread, prompt_window, head, lc)
            decision = self._complete_validated(prompt, parse_reply_decision)
        except Exception:
            thread.messages.pop()
            raise
        reply = Message("ai", decision.reply_text, head.version_id, self.clock(),
                        action=decision.action)
        thread.messages.append(reply)
        thread.context_version_id = head.version_id
        thread.context_acw_span = prompt_window.span
        return reply

    # -- anchor maintenance ---------------------------------------------------

    def refresh_anchors(self) -> list[tuple[str, str]]:
        """Rebind every thread's anchor to the current head; returns statuses."""
        session = self.session
        head = session.head
        changesets: dict = {}
        statuses = []
        dirty = False
        for thread in session.threads_sorted():
            anchor = thread.anchor
            if anchor.version_id != head.version_id:
                cs = changesets.get(anchor.version_id)
                if cs is None:
                    cs = compute_changes(session.version(anchor.version_id), head)
                    changesets[anchor.version_id] = cs
                thread.anchor = reanchor(anchor, cs, head)
                if thread.anchor.status == "orphaned" and thread.state != "orphaned":
                    thread.state = "orphaned"
                dirty = True
            statuses.append((thread.thread_id, thread.anchor.status))
        if dirty:
            for thread in session.threads_sorted():
                self.store.commit_thread(session, thread)
        return statuses

    def apply_edits(self, base_version_id: int, edits: list) -> tuple[DocumentVersion, list]:
        """Optimistically-checked edit application plus anchor refresh."""
        session = self.session
        head = session.head
        if base_version_id != head.version_id:
            from .errors import VersionMismatch

            raise VersionMismatch(
                f"edits target version {base_version_id} but head is {head.version_id}"
            )
        new = apply_edits(head, edits, created_at=self.clock())
        self.store.commit_version(session, new)
        self.store.commit_event(session, Event("edit", self.clock(), {
            "base_version": base_version_id,
            "version_id": new.version_id,
            "edits": [e.to_json() for e in edits],
        }))
        statuses = self.refresh_anchors()
        return new, statuses
