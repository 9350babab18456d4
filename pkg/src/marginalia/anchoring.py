"""Anchor resolution and maintenance.

An anchor binds a comment to a verbatim span of one document version. Its
context window is the smallest hierarchical unit (the span itself, its
sentence, paragraph, section, or the whole document) whose normalized text
occurs exactly once in the normalized document, so the location stays
identifiable even when the raw span text is repeated elsewhere.

Occurrence counting is non-overlapping, left to right, over the normalized
text; spans returned always refer to the original text via the
normalization offset map.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, replace
from typing import Optional, Union

from .diffing import ChangeSet, map_span
from .document import DocumentVersion, Span, window_at
from .errors import VersionMismatch
from .normalization import normalize, normalize_with_map

WINDOW_LEVELS = ("exact", "sentence", "paragraph", "section", "document")

_STATUS_RANK = {"intact": 0, "shifted": 1, "modified": 2, "orphaned": 3}

_norm_cache: "weakref.WeakKeyDictionary[DocumentVersion, tuple]" = weakref.WeakKeyDictionary()


def _normalized_doc(version: DocumentVersion) -> tuple[str, list[tuple[int, int]]]:
    cached = _norm_cache.get(version)
    if cached is None:
        cached = normalize_with_map(version.text)
        _norm_cache[version] = cached
    return cached


@dataclass(frozen=True)
class ContextWindow:
    """Disambiguating window around an anchor (level, span, verbatim text).

    ``ambiguity_flag`` is set when even the whole document fails to pin the
    anchor down (its text repeats and every enclosing unit repeats with it);
    callers then live with a first-occurrence binding.
    """

    level: str
    span: Span
    text: str
    ambiguity_flag: bool = False

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "span": self.span.to_json(),
            "text": self.text,
            "ambiguity_flag": self.ambiguity_flag,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ContextWindow":
        return cls(
            data["level"],
            Span.from_json(data["span"]),
            data["text"],
            bool(data.get("ambiguity_flag", False)),
        )


@dataclass(frozen=True)
class AnchorProposal:
    """One model-suggested comment: verbatim anchor text, optional window text."""

    anchor_text: str
    comment: str
    acw_text: Optional[str] = None

    def to_json(self) -> dict:
        data = {"anchor_text": self.anchor_text, "comment": self.comment}
        if self.acw_text is not None:
            data["acw_text"] = self.acw_text
        return data


@dataclass(frozen=True)
class Rejection:
    """A proposal that could not be grounded in the document."""

    reason: str  # hallucinated | ambiguous-unresolved
    proposal: AnchorProposal
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "reason": self.reason,
            "anchor_text": self.proposal.anchor_text,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class Anchor:
    anchor_id: str
    version_id: int
    span: Optional[Span]
    anchor_text: str
    acw: Optional[ContextWindow]
    status: str = "intact"  # intact | shifted | modified | orphaned

    def to_json(self) -> dict:
        return {
            "anchor_id": self.anchor_id,
            "version_id": self.version_id,
            "span": self.span.to_json() if self.span else None,
            "anchor_text": self.anchor_text,
            "acw": self.acw.to_json() if self.acw else None,
            "status": self.status,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Anchor":
        return cls(
            data["anchor_id"],
            int(data["version_id"]),
            Span.from_json(data["span"]) if data.get("span") else None,
            data["anchor_text"],
            ContextWindow.from_json(data["acw"]) if data.get("acw") else None,
            data["status"],
        )


def find_occurrences(version: DocumentVersion, needle: str) -> list[Span]:
    """All non-overlapping spans whose normalized slice equals the needle's.

    Spans refer to the original text; an empty list means not found.
    """
    norm_needle = normalize(needle)
    if not norm_needle:
        return []
    norm_doc, offsets = _normalized_doc(version)
    spans = []
    start = 0
    while True:
        idx = norm_doc.find(norm_needle, start)
        if idx < 0:
            break
        o_start = offsets[idx][0]
        o_end = offsets[idx + len(norm_needle) - 1][1]
        # a boundary can fall inside a case-fold expansion (one source char,
        # several normalized chars); such a slice does not renormalize to the
        # needle and is not a real occurrence
        if normalize(version.text[o_start:o_end]) == norm_needle:
            spans.append(Span(o_start, o_end))
            start = idx + len(norm_needle)
        else:
            start = idx + 1
    return spans


def _occurrence_count(version: DocumentVersion, normalized_needle: str, limit: int = 2) -> int:
    """Non-overlapping verified occurrence count, early-exiting at ``limit``."""
    if not normalized_needle:
        return 0
    norm_doc, offsets = _normalized_doc(version)
    count = 0
    start = 0
    while count < limit:
        idx = norm_doc.find(normalized_needle, start)
        if idx < 0:
            break
        o_start = offsets[idx][0]
        o_end = offsets[idx + len(normalized_needle) - 1][1]
        if normalize(version.text[o_start:o_end]) == normalized_needle:
            count += 1
            start = idx + len(normalized_needle)
        else:
            start = idx + 1
    return count


def expand_acw(version: DocumentVersion, span: Span) -> ContextWindow:
    """Smallest hierarchical window around ``span`` that is unique.

    Levels are tried in order exact, sentence, paragraph, section; a window
    that already covers the whole document is no better than the document
    level, so it escalates. If nothing below the document level is unique
    the whole document is returned with the ambiguity flag set.
    """
    version.check_span(span)
    n = len(version.text)
    index = version.segmentation
    for level in ("exact", "sentence", "paragraph", "section"):
        if level == "exact":
            window = span
        else:
            window = window_at(index, span, level, n)
            if window.start == 0 and window.end == n:
                continue  # equivalent to the document level; keep escalating
        text = version.text[window.start : window.end]
        if _occurrence_count(version, normalize(text)) == 1:
            return ContextWindow(level, window, text)
    return ContextWindow("document", Span(0, n), version.text, ambiguity_flag=True)


def resolve_proposal(version: DocumentVersion, proposal: AnchorProposal,
                     anchor_id: str = "a0") -> Union[Anchor, Rejection]:
    """Ground a proposal in the document or reject it.

    A unique anchor text binds directly. A repeated one binds only when the
    provided window text identifies exactly one enclosing match; the first
    occurrence inside that window wins. Anything unlocatable is rejected as
    hallucinated, anything unresolvably repeated as ambiguous.
    """
    occurrences = find_occurrences(version, proposal.anchor_text)
    if not occurrences:
        return Rejection("hallucinated", proposal,
                         "anchor text not found in document after normalization")
    if len(occurrences) == 1:
        return _make_anchor(version, occurrences[0], anchor_id)

    if proposal.acw_text:
        windows = find_occurrences(version, proposal.acw_text)
        containing = [w for w in windows if any(w.contains(o) for o in occurrences)]
        if len(containing) == 1:
            window = containing[0]
            inside = [o for o in occurrences if window.contains(o)]
            return _make_anchor(version, inside[0], anchor_id)
        detail = (
            f"window text matched {len(containing)} candidate locations"
            if windows else "window text not found in document"
        )
        return Rejection("ambiguous-unresolved", proposal, detail)
    return Rejection(
        "ambiguous-unresolved", proposal,
        f"anchor text occurs {len(occurrences)} times and no window text was given",
    )


def _make_anchor(version: DocumentVersion, span: Span, anchor_id: str) -> Anchor:
    return Anchor(
        anchor_id=anchor_id,
        version_id=version.version_id,
        span=span,
        anchor_text=version.text[span.start : span.end],
        acw=expand_acw(version, span),
        status="intact",
    )


def _ratchet(previous: str, hop: str) -> str:
    """Status relative to the original binding only ever degrades."""
    return hop if _STATUS_RANK[hop] > _STATUS_RANK[previous] else previous


def reanchor(anchor: Anchor, cs: ChangeSet, new: DocumentVersion) -> Anchor:
    """Rebind an anchor onto ``new`` across the changes in ``cs``.

    Surviving anchors get their window recomputed on the new version; a
    fully deleted or replaced anchor is orphaned (span and window cleared,
    last-known text retained for display).
    """
    if anchor.version_id != cs.old_version_id:
        raise VersionMismatch(
            f"anchor is bound to version {anchor.version_id}, changes start at {cs.old_version_id}"
        )
    if new.version_id != cs.new_version_id:
        raise VersionMismatch(
            f"changes end at version {cs.new_version_id}, got document version {new.version_id}"
        )
    if anchor.status == "orphaned" or anchor.span is None:
        return replace(anchor, version_id=new.version_id, status="orphaned")

    mapping = map_span(anchor.span, cs)
    if mapping.status == "deleted":
        return replace(anchor, version_id=new.version_id, span=None, acw=None, status="orphaned")

    span = mapping.new_span
    if mapping.status == "modified":
        text = new.text[span.start : span.end]
    else:
        text = anchor.anchor_text  # mapping guarantees the slice is unchanged
    return Anchor(
        anchor_id=anchor.anchor_id,
        version_id=new.version_id,
        span=span,
        anchor_text=text,
        acw=expand_acw(new, span),
        status=_ratchet(anchor.status, mapping.status),
    )
