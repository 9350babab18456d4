"""Differential analysis between document versions.

Texts are tokenized into alternating word / whitespace runs so the token
sequence concatenates back to the exact text. A shortest-edit-script
(Myers) diff over those tokens is coalesced into insert/delete/replace
runs; the token edit count of the result is minimal.

Span remapping (``map_span``) and change localization (``localize``) are
interval algebra over a ChangeSet. Conventions:

- an insertion exactly at a span's start goes *before* the span (anchors
  name existing text, they do not absorb future text)
- an insertion exactly at a span's end goes *after* it
- any partial overlap marks a span ``modified``; only full coverage by
  deletions/replacements makes it ``deleted``
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .document import DocumentVersion, Edit, Span
from .errors import SpanOutOfBounds

_TOKEN_RE = re.compile(r"\s+|\S+")


def tokenize(text: str) -> list[str]:
    """Split into word and whitespace runs; ``''.join`` restores the text."""
    return _TOKEN_RE.findall(text)


def _token_starts(tokens: list[str]) -> list[int]:
    starts = [0]
    for tok in tokens:
        starts.append(starts[-1] + len(tok))
    return starts


def _myers_hunks(a: list, b: list) -> list[tuple[int, int, int, int]]:
    """Minimal edit script as hunks ``(a_lo, a_hi, b_lo, b_hi)`` in order.

    Each hunk replaces ``a[a_lo:a_hi]`` with ``b[b_lo:b_hi]``; at least one
    side is non-empty and consecutive hunks are separated by matches.
    """
    # strip common prefix/suffix first; it dominates the cost on similar texts
    n, m = len(a), len(b)
    pre = 0
    while pre < n and pre < m and a[pre] == b[pre]:
        pre += 1
    suf = 0
    while suf < n - pre and suf < m - pre and a[n - 1 - suf] == b[m - 1 - suf]:
        suf += 1
    core_a = a[pre : n - suf]
    core_b = b[pre : m - suf]
    hunks = [
        (alo + pre, ahi + pre, blo + pre, bhi + pre)
        for alo, ahi, blo, bhi in _myers_core(core_a, core_b)
    ]
    return hunks


def _myers_core(a: list, b: list) -> list[tuple[int, int, int, int]]:
    n, m = len(a), len(b)
    if n == 0 and m == 0:
        return []
    if n == 0:
        return [(0, 0, 0, m)]
    if m == 0:
        return [(0, n, 0, 0)]

    # forward Myers with a saved V per step for backtracking
    v = {1: 0}
    trace = []
    found = False
    for d in range(n + m + 1):
        vd = {}
        for k in range(-d, d + 1, 2):
            if k == -d or (k != d and v.get(k - 1, -1) < v.get(k + 1, -1)):
                x = v[k + 1]
            else:
                x = v[k - 1] + 1
            y = x - k
            while x < n and y < m and a[x] == b[y]:
                x += 1
                y += 1
            vd[k] = x
            if x >= n and y >= m:
                found = True
                break
        trace.append(vd)
        v = vd
        if found:
            break

    # backtrack into unit operations, then group into hunks
    x, y = n, m
    ops = []  # reversed list of ("del"|"ins", a_index, b_index)
    for d in range(len(trace) - 1, 0, -1):
        pv = trace[d - 1]
        k = x - y
        if k == -d or (k != d and pv.get(k - 1, -1) < pv.get(k + 1, -1)):
            pk = k + 1
        else:
            pk = k - 1
        px = pv[pk]
        py = px - pk
        while x > px and y > py:  # snake
            x -= 1
            y -= 1
        if x == px:  # came from an insertion of b[py]
            y -= 1
            ops.append(("ins", x, y))
        else:  # deletion of a[px]
            x -= 1
            ops.append(("del", x, y))
    ops.reverse()

    hunks = []
    for op, ai, bi in ops:
        if op == "del":
            lo, hi, blo, bhi = ai, ai + 1, bi, bi
        else:
            lo, hi, blo, bhi = ai, ai, bi, bi + 1
        if hunks and hunks[-1][1] == lo and hunks[-1][3] == blo:
            prev = hunks[-1]
            hunks[-1] = (prev[0], hi, prev[2], bhi)
        else:
            hunks.append((lo, hi, blo, bhi))
    return hunks


@dataclass(frozen=True)
class Change:
    kind: str  # insert | delete | replace
    old_span: Span
    new_span: Span
    old_text: str
    new_text: str

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "old_span": self.old_span.to_json(),
            "new_span": self.new_span.to_json(),
            "old_text": self.old_text,
            "new_text": self.new_text,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Change":
        return cls(
            data["kind"],
            Span.from_json(data["old_span"]),
            Span.from_json(data["new_span"]),
            data["old_text"],
            data["new_text"],
        )


@dataclass(frozen=True)
class ChangeSet:
    old_version_id: int
    new_version_id: int
    changes: tuple

    @property
    def is_empty(self) -> bool:
        return not self.changes

    def replay(self, old_text: str) -> str:
        parts = []
        cursor = 0
        for ch in self.changes:
            parts.append(old_text[cursor : ch.old_span.start])
            parts.append(ch.new_text)
            cursor = ch.old_span.end
        parts.append(old_text[cursor:])
        return "".join(parts)

    def as_edits(self) -> list:
        return [Edit(ch.kind, ch.old_span, ch.new_text) for ch in self.changes]

    def edit_token_count(self) -> int:
        """Inserted plus deleted tokens; minimal by construction."""
        total = 0
        for ch in self.changes:
            total += len(tokenize(ch.old_text)) + len(tokenize(ch.new_text))
        return total

    def to_json(self) -> dict:
        return {
            "old_version_id": self.old_version_id,
            "new_version_id": self.new_version_id,
            "changes": [ch.to_json() for ch in self.changes],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ChangeSet":
        return cls(
            int(data["old_version_id"]),
            int(data["new_version_id"]),
            tuple(Change.from_json(c) for c in data["changes"]),
        )


@dataclass(frozen=True)
class SpanMapping:
    status: str  # intact | shifted | modified | deleted
    new_span: Optional[Span]


@dataclass(frozen=True)
class LocalizedChange:
    anchor_overlap: str  # inside | overlapping | adjacent | distant
    affected_span: Span
    summary: tuple  # Changes touching or abutting the window


def compute_changes(old: DocumentVersion, new: DocumentVersion) -> ChangeSet:
    """Minimal token-level diff between two versions, coalesced into runs."""
    a = tokenize(old.text)
    b = tokenize(new.text)
    a_starts = _token_starts(a)
    b_starts = _token_starts(b)
    changes = []
    for alo, ahi, blo, bhi in _myers_hunks(a, b):
        old_span = Span(a_starts[alo], a_starts[ahi])
        new_span = Span(b_starts[blo], b_starts[bhi])
        old_text = old.text[old_span.start : old_span.end]
        new_text = new.text[new_span.start : new_span.end]
        if alo == ahi:
            kind = "insert"
        elif blo == bhi:
            kind = "delete"
        else:
            kind = "replace"
        changes.append(Change(kind, old_span, new_span, old_text, new_text))
    return ChangeSet(old.version_id, new.version_id, tuple(changes))


def _delta(ch: Change) -> int:
    return len(ch.new_span) - len(ch.old_span)


def _map_left(p: int, changes: tuple) -> int:
    """New position of ``p`` as a left edge (insertions at ``p`` go before)."""
    off = 0
    for ch in changes:
        os_, oe = ch.old_span.start, ch.old_span.end
        if oe < p or (oe == p and (oe > os_ or os_ == p)):
            off += _delta(ch)
        elif os_ <= p < oe:
            return ch.new_span.start
        else:
            break
    return p + off


def _map_right(p: int, changes: tuple) -> int:
    """New position of ``p`` as an exclusive right edge (insertions at ``p`` go after)."""
    off = 0
    for ch in changes:
        os_, oe = ch.old_span.start, ch.old_span.end
        if oe <= p and not (os_ == oe == p):
            off += _delta(ch)
        elif os_ <= p - 1 < oe:
            return ch.new_span.end
        else:
            break
    return p + off


def _touches(ch: Change, span: Span) -> bool:
    os_, oe = ch.old_span.start, ch.old_span.end
    if os_ == oe:  # insertion: only strictly inside counts
        return span.start < os_ < span.end
    return os_ < span.end and oe > span.start


def map_span(span: Span, cs: ChangeSet, old_length: Optional[int] = None) -> SpanMapping:
    """Locate ``span`` after the changes, classifying its fate."""
    if old_length is not None and span.end > old_length:
        raise SpanOutOfBounds(f"span [{span.start}, {span.end}) exceeds length {old_length}")
    touching = [ch for ch in cs.changes if _touches(ch, span)]
    if not touching:
        off = 0
        for ch in cs.changes:
            os_, oe = ch.old_span.start, ch.old_span.end
            if oe < span.start or (oe == span.start and (oe > os_ or os_ == span.start)):
                off += _delta(ch)
        status = "intact" if off == 0 else "shifted"
        return SpanMapping(status, Span(span.start + off, span.end + off))

    removed = 0
    for ch in touching:
        if ch.old_span.start == ch.old_span.end:
            continue  # insertion removes nothing
        lo = max(ch.old_span.start, span.start)
        hi = min(ch.old_span.end, span.end)
        removed += max(0, hi - lo)
    if removed >= len(span):
        return SpanMapping("deleted", None)
    return SpanMapping("modified", Span(_map_left(span.start, cs.changes),
                                        _map_right(span.end, cs.changes)))


def _abuts(ch: Change, span: Span) -> bool:
    os_, oe = ch.old_span.start, ch.old_span.end
    return oe == span.start or os_ == span.end


def localize(cs: ChangeSet, anchor_window: Span, old_length: Optional[int] = None) -> LocalizedChange:
    """Classify the changes relative to an anchor's context window.

    ``inside`` means every overlapping change lies within the window,
    ``overlapping`` that some change crosses its boundary, ``adjacent`` that
    changes only abut it, ``distant`` that nothing comes near. The affected
    span is the hull, in new coordinates, of the window's image and every
    summarized change.
    """
    if old_length is not None and anchor_window.end > old_length:
        raise SpanOutOfBounds(
            f"span [{anchor_window.start}, {anchor_window.end}) exceeds length {old_length}"
        )
    overlapping = [ch for ch in cs.changes if _touches(ch, anchor_window)]
    abutting = [ch for ch in cs.changes if not _touches(ch, anchor_window) and _abuts(ch, anchor_window)]

    crossing = [
        ch for ch in overlapping
        if ch.old_span.start < anchor_window.start or ch.old_span.end > anchor_window.end
    ]
    if crossing:
        overlap = "overlapping"
    elif overlapping:
        overlap = "inside"
    elif abutting:
        overlap = "adjacent"
    else:
        overlap = "distant"

    image = Span(_map_left(anchor_window.start, cs.changes),
                 _map_right(anchor_window.end, cs.changes))
    if image.end < image.start:  # degenerate empty window next to an insertion
        image = Span(image.end, image.end)
    affected = image
    summary = tuple(sorted(overlapping + abutting, key=lambda ch: ch.old_span.start))
    for ch in summary:
        affected = affected.hull(ch.new_span)
    return LocalizedChange(overlap, affected, summary)
