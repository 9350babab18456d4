"""Prompt assembly, strict structured-output parsing, and completion providers.

Prompts are built from versioned template files (hash-pinned by tests) plus
ordered, labelled context blocks, so identical inputs always render to
byte-identical payloads. The mock provider replays a scripted response list
keyed by a stable hash of the prompt, which keeps every pipeline test and
the CLI golden files fully deterministic.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Optional

from .anchoring import Anchor, AnchorProposal, ContextWindow
from .diffing import ChangeSet, LocalizedChange
from .document import DocumentVersion
from .errors import (
    MockScriptExhausted,
    ProviderRefusal,
    ProviderTimeout,
    SchemaError,
)

REPLY_ACTIONS = ("affirm", "retract", "update", "acknowledge")

NO_CHANGES_TEXT = "no changes since last query"
ANCHOR_UNCHANGED_TEXT = "anchor unchanged"
ANCHOR_DELETED_TEXT = (
    "the anchored text was deleted from the document; you may retract the "
    "earlier feedback if it no longer applies"
)
FIRST_OCCURRENCE_NOTE = (
    "note: the anchor text is not unique anywhere in the document and is "
    "bound to its first occurrence"
)


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("marginalia.templates").joinpath(name).read_text("utf-8")


def template_digest(name: str) -> str:
    return hashlib.sha256(load_template(name).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ContextBlock:
    label: str
    content: str


@dataclass(frozen=True)
class Prompt:
    system_text: str
    user_text: str
    context_blocks: tuple

    @property
    def block_labels(self) -> tuple:
        return tuple(b.label for b in self.context_blocks)

    def block(self, label: str) -> ContextBlock:
        for b in self.context_blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def render_user(self) -> str:
        parts = [self.user_text]
        for b in self.context_blocks:
            parts.append(f"[[{b.label}]]\n{b.content}\n[[/{b.label}]]")
        return "\n\n".join(parts)


def prompt_key(prompt: Prompt) -> str:
    """Stable hash of the user text and block labels; mock-script match key."""
    h = hashlib.sha256()
    h.update(prompt.user_text.encode("utf-8"))
    for label in prompt.block_labels:
        h.update(b"\x00")
        h.update(label.encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    timeout_s: float = 60.0
    max_retries: int = 2
    mock_mode: bool = False
    mock_script: Optional[str] = None
    api_key_env: str = "MARGINALIA_API_KEY"

    @classmethod
    def from_json(cls, data: dict) -> "ProviderConfig":
        known = {f: data[f] for f in (
            "endpoint", "model", "timeout_s", "max_retries", "mock_mode",
            "mock_script", "api_key_env") if f in data}
        return cls(**known)


@dataclass(frozen=True)
class ReplyDecision:
    action: str
    reply_text: str


# ---------------------------------------------------------------------------
# prompt builders

def _render_changes(cs: ChangeSet) -> str:
    if cs.is_empty:
        return NO_CHANGES_TEXT
    lines = []
    for ch in cs.changes:
        lines.append(
            f"{ch.kind} [{ch.old_span.start},{ch.old_span.end}) "
            f"{ch.old_text!r} -> {ch.new_text!r}"
        )
    return "\n".join(lines)


def _render_threads(threads: list) -> str:
    if not threads:
        return "none"
    lines = []
    for t in threads:
        lines.append(f"- thread {t.thread_id} [{t.anchor.status}] on {t.anchor.anchor_text!r}:")
        for m in t.messages:
            lines.append(f"    {m.author}: {m.text}")
    return "\n".join(lines)


def _render_window(acw: ContextWindow) -> str:
    lines = [f"level: {acw.level}"]
    if acw.ambiguity_flag:
        lines.append(FIRST_OCCURRENCE_NOTE)
    lines.append(acw.text)
    return "\n".join(lines)


def build_meta_prompt(query: str, version: DocumentVersion, cs: ChangeSet,
                      open_comments: list) -> Prompt:
    """Document-wide review prompt; response schema is an array of proposals."""
    blocks = (
        ContextBlock("document", version.text),
        ContextBlock("changes", _render_changes(cs)),
        ContextBlock("prior-comments", _render_threads(open_comments)),
    )
    return Prompt(load_template("meta_system.txt"), query, blocks)


def build_refine_prompt(proposal: AnchorProposal, acw: ContextWindow,
                        version: DocumentVersion) -> Prompt:
    """Single-proposal restatement against a widened window."""
    if acw.level == "exact":
        raise ValueError("refinement requires a widened context window")
    user = (
        f"Original comment: {proposal.comment}\n"
        f"Anchor text: {proposal.anchor_text!r}\n"
        "Restate the comment for the context window below."
    )
    blocks = (
        ContextBlock("acw", _render_window(acw)),
        ContextBlock("document", version.text),
    )
    return Prompt(load_template("refine_system.txt"), user, blocks)


def build_thread_prompt(thread, acw: ContextWindow, version: DocumentVersion,
                        lc: LocalizedChange) -> Prompt:
    """Reply prompt carrying the change summary plus the fixed context trio:
    recomputed window, full document, ordered thread history. The last
    message of the thread is the pending user message and becomes the user
    text; everything before it is history."""
    if not thread.messages:
        raise ValueError("thread has no messages")
    pending = thread.messages[-1]
    history = thread.messages[:-1]

    anchor: Anchor = thread.anchor
    if anchor.status == "orphaned":
        changes_text = ANCHOR_DELETED_TEXT
        if lc.summary:
            changes_text += "\n" + "\n".join(
                f"{ch.kind} [{ch.old_span.start},{ch.old_span.end}) "
                f"{ch.old_text!r} -> {ch.new_text!r}"
                for ch in lc.summary
            )
    elif not lc.summary:
        changes_text = ANCHOR_UNCHANGED_TEXT
    else:
        lines = [f"changes {lc.anchor_overlap} the anchored context:"]
        for ch in lc.summary:
            lines.append(
                f"{ch.kind} [{ch.old_span.start},{ch.old_span.end}) "
                f"{ch.old_text!r} -> {ch.new_text!r}"
            )
        changes_text = "\n".join(lines)

    history_lines = [f"{m.author}: {m.text}" for m in history] or ["(no earlier messages)"]
    blocks = (
        ContextBlock("changes", changes_text),
        ContextBlock("acw", _render_window(acw)),
        ContextBlock("document", version.text),
        ContextBlock("thread-history", "\n".join(history_lines)),
    )
    return Prompt(load_template("thread_system.txt"), pending.text, blocks)


def append_schema_complaint(prompt: Prompt, error: SchemaError) -> Prompt:
    """One re-ask: same prompt with the validation failure appended."""
    note = (
        f"\n\nYour previous reply was rejected: {error.reason} "
        f"(item {error.position}). Reply again following the schema exactly."
    )
    return replace(prompt, user_text=prompt.user_text + note)


# ---------------------------------------------------------------------------
# strict structured-output parsing

def _strip_fence(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```") and text.endswith("```") and len(text) >= 6:
        body = text[3:-3]
        first_nl = body.find("\n")
        if first_nl >= 0 and body[:first_nl].strip().isalnum():
            body = body[first_nl + 1 :]  # drop a language tag line
        elif first_nl >= 0 and body[:first_nl].strip() == "":
            body = body[first_nl + 1 :]
        return body.strip()
    return text


def _load_json(raw: str) -> object:
    try:
        return json.loads(_strip_fence(raw))
    except RecursionError:
        raise SchemaError("JSON nesting too deep") from None
    except ValueError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None


def _validate_proposal(item: object, position: int) -> AnchorProposal:
    if not isinstance(item, dict):
        raise SchemaError("proposal must be an object", position)
    unknown = set(item) - {"anchor_text", "acw_text", "comment"}
    if unknown:
        raise SchemaError(f"unknown fields: {sorted(unknown)}", position)
    anchor_text = item.get("anchor_text")
    if not isinstance(anchor_text, str) or not anchor_text:
        raise SchemaError("anchor_text must be a non-empty string", position)
    comment = item.get("comment")
    if not isinstance(comment, str) or not comment:
        raise SchemaError("comment must be a non-empty string", position)
    acw_text = item.get("acw_text")
    if "acw_text" in item and (not isinstance(acw_text, str) or not acw_text):
        raise SchemaError("acw_text must be a non-empty string when present", position)
    return AnchorProposal(anchor_text=anchor_text, comment=comment, acw_text=acw_text)


def parse_proposals(raw: str) -> list[AnchorProposal]:
    """Validate a whole proposal batch; any defect fails the batch."""
    data = _load_json(raw)
    if not isinstance(data, list):
        raise SchemaError("top level must be a JSON array")
    return [_validate_proposal(item, i) for i, item in enumerate(data)]


def parse_proposal_object(raw: str) -> AnchorProposal:
    """Validate a single proposal object (refinement responses)."""
    data = _load_json(raw)
    if isinstance(data, list):
        raise SchemaError("expected a single JSON object, got an array")
    return _validate_proposal(data, 0)


def parse_reply_decision(raw: str) -> ReplyDecision:
    data = _load_json(raw)
    if not isinstance(data, dict):
        raise SchemaError("reply must be a JSON object")
    unknown = set(data) - {"action", "reply_text"}
    if unknown:
        raise SchemaError(f"unknown fields: {sorted(unknown)}")
    action = data.get("action")
    if action not in REPLY_ACTIONS:
        raise SchemaError(f"action must be one of {REPLY_ACTIONS}")
    reply_text = data.get("reply_text")
    if not isinstance(reply_text, str) or not reply_text:
        raise SchemaError("reply_text must be a non-empty string")
    return ReplyDecision(action=action, reply_text=reply_text)


# ---------------------------------------------------------------------------
# providers

class MockScript:
    """Scripted responses: ordered entries ``{"match": hash-or-*, "response": str}``.

    Each completion consumes the first unconsumed entry whose match equals
    the prompt key (or ``*``); running out raises MockScriptExhausted.
    """

    def __init__(self, entries: list):
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict) or "response" not in entry:
                raise ValueError(f"mock script entry {i} needs a 'response' field")
        self.entries = [dict(match=e.get("match", "*"), response=e["response"]) for e in entries]
        self.consumed = [False] * len(self.entries)

    @classmethod
    def load(cls, path: str) -> "MockScript":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def next_response(self, key: str) -> str:
        for i, entry in enumerate(self.entries):
            if self.consumed[i]:
                continue
            if entry["match"] == "*" or entry["match"] == key:
                self.consumed[i] = True
                return entry["response"]
        raise MockScriptExhausted(f"no scripted response left for prompt {key[:12]}…")


class LLMClient:
    """Completion provider behind a single ``complete(prompt)`` call.

    In mock mode no network is touched; otherwise an HTTP chat-completion
    request is made with a timeout and bounded retries. A live response
    whose body cannot be parsed is surfaced raw so downstream validation
    rejects it rather than this layer guessing.
    """

    def __init__(self, config: ProviderConfig, transport=None):
        self.config = config
        self._transport = transport  # test hook for the HTTP client
        self._mock: Optional[MockScript] = None
        if config.mock_mode:
            if config.mock_script:
                self._mock = MockScript.load(config.mock_script)
            else:
                self._mock = MockScript([])

    def use_script(self, script: MockScript) -> None:
        self._mock = script

    def complete(self, prompt: Prompt) -> str:
        if self.config.mock_mode:
            return self._mock.next_response(prompt_key(prompt))
        return self._complete_http(prompt)

    def _complete_http(self, prompt: Prompt) -> str:
        import httpx

        payload = {
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.render_user()},
            ],
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        last_error: Optional[Exception] = None
        for attempt in range(self.config.max_retries + 1):
            try:
                with httpx.Client(transport=self._transport,
                                  timeout=self.config.timeout_s) as client:
                    response = client.post(self.config.endpoint, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                raise ProviderTimeout(f"completion timed out after {self.config.timeout_s}s") from exc
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = ProviderRefusal(f"provider returned {response.status_code}")
                continue
            if response.status_code >= 400:
                raise ProviderRefusal(
                    f"provider returned {response.status_code}: {response.text[:500]}"
                )
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                return response.text
        raise ProviderRefusal(f"provider unreachable after retries: {last_error}")


def complete(prompt: Prompt, config: ProviderConfig) -> str:
    """One-shot completion; prefer a long-lived LLMClient for mock scripts."""
    return LLMClient(config).complete(prompt)
