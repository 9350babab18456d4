"""Immutable document versions with hierarchical segmentation.

Offsets throughout the package are Unicode scalar-value indices into the
document string (half-open, 0-based), never bytes. Segmentation is
deliberately naive and fully specified here:

- word: maximal run of non-whitespace characters
- sentence: ends at a run of sentence terminators (``. ! ?``) followed by
  whitespace or the end of its paragraph; no abbreviation handling
- paragraph: maximal run of non-blank lines; a heading line always forms a
  paragraph of its own so paragraphs never straddle section boundaries
- section: from one heading line (leading ``#`` at line start) to the next;
  a document without headings is a single section
"""

from __future__ import annotations

import re
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

from .errors import InvalidEdit, InvalidEncoding, OverlappingEdits, SpanOutOfBounds

LEVELS = ("word", "sentence", "paragraph", "section", "document")

_WORD_RE = re.compile(r"\S+")


@dataclass(frozen=True, order=True)
class Span:
    """Half-open character range ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise SpanOutOfBounds(f"malformed span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def contains(self, other: "Span") -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: "Span") -> bool:
        """True when the interiors intersect.

        An empty span counts as overlapping only when it lies strictly
        inside ``other``; two spans that merely abut do not overlap.
        """
        if self.start == self.end:
            return other.start < self.start < other.end
        if other.start == other.end:
            return self.start < other.start < self.end
        return self.start < other.end and other.start < self.end

    def hull(self, other: "Span") -> "Span":
        return Span(min(self.start, other.start), max(self.end, other.end))

    def to_json(self) -> dict:
        return {"start": self.start, "end": self.end}

    @classmethod
    def from_json(cls, data: dict) -> "Span":
        return cls(int(data["start"]), int(data["end"]))


@dataclass(frozen=True)
class Edit:
    """A single splice against a specific source version.

    ``insert`` requires an empty span, ``delete`` an empty replacement.
    """

    kind: str  # insert | delete | replace
    at: Span
    new_text: str = ""

    def __post_init__(self):
        if self.kind not in ("insert", "delete", "replace"):
            raise InvalidEdit(f"unknown edit kind {self.kind!r}")
        if self.kind == "insert" and len(self.at) != 0:
            raise InvalidEdit("insert edits must use an empty span")
        if self.kind == "delete" and self.new_text:
            raise InvalidEdit("delete edits must not carry replacement text")

    def to_json(self) -> dict:
        return {"kind": self.kind, "at": self.at.to_json(), "new_text": self.new_text}

    @classmethod
    def from_json(cls, data: dict) -> "Edit":
        return cls(data["kind"], Span.from_json(data["at"]), data.get("new_text", ""))


@dataclass(frozen=True)
class SegmentationConfig:
    sentence_terminators: str = ".!?"
    heading_prefix: str = "#"


@dataclass(frozen=True)
class SegmentationIndex:
    """Sorted, disjoint spans for each hierarchy level.

    Every word lies inside exactly one sentence, every sentence inside one
    paragraph, every paragraph inside one section.
    """

    words: tuple
    sentences: tuple
    paragraphs: tuple
    sections: tuple

    def at_level(self, level: str) -> tuple:
        if level not in ("word", "sentence", "paragraph", "section"):
            raise ValueError(f"no span list for level {level!r}")
        return getattr(self, level + "s")


def _line_spans(text: str) -> Iterable[Span]:
    start = 0
    while start <= len(text) - 1:
        nl = text.find("\n", start)
        if nl < 0:
            yield Span(start, len(text))
            return
        yield Span(start, nl)
        start = nl + 1
    if text.endswith("\n") or text == "":
        return


def _segment_sentences(text: str, pstart: int, pend: int, terminators: str) -> list:
    sentences = []
    i = pstart
    while i < pend:
        while i < pend and text[i].isspace():
            i += 1
        if i >= pend:
            break
        j = i
        send = None
        while j < pend:
            if text[j] in terminators:
                k = j
                while k + 1 < pend and text[k + 1] in terminators:
                    k += 1
                if k + 1 >= pend or text[k + 1].isspace():
                    send = k + 1
                    break
                j = k + 1
            else:
                j += 1
        if send is None:
            # unterminated: trim trailing whitespace inside the paragraph
            k = pend
            while k > i and text[k - 1].isspace():
                k -= 1
            send = k
        sentences.append(Span(i, send))
        i = send
    return sentences


def segment(text: str, config: SegmentationConfig = SegmentationConfig()) -> SegmentationIndex:
    if text == "":
        return SegmentationIndex((), (), (), ())

    lines = list(_line_spans(text))
    heading = [text[l.start : l.end].startswith(config.heading_prefix) for l in lines]
    blank = [text[l.start : l.end].strip() == "" for l in lines]

    # paragraphs: blocks of non-blank lines, broken around heading lines
    paragraphs = []
    block_start = None
    for idx, line in enumerate(lines):
        if blank[idx]:
            if block_start is not None:
                paragraphs.append(Span(block_start, lines[idx - 1].end))
                block_start = None
        elif heading[idx]:
            if block_start is not None:
                paragraphs.append(Span(block_start, lines[idx - 1].end))
                block_start = None
            paragraphs.append(Span(line.start, line.end))
        else:
            if block_start is None:
                block_start = line.start
    if block_start is not None:
        paragraphs.append(Span(block_start, lines[-1].end))

    # sections: heading line start to the next heading line start
    heads = [lines[i].start for i in range(len(lines)) if heading[i]]
    if not heads:
        sections = [Span(0, len(text))]
    else:
        sections = []
        if heads[0] > 0:
            sections.append(Span(0, heads[0]))
        for i, h in enumerate(heads):
            end = heads[i + 1] if i + 1 < len(heads) else len(text)
            sections.append(Span(h, end))

    sentences = []
    for p in paragraphs:
        sentences.extend(_segment_sentences(text, p.start, p.end, config.sentence_terminators))

    words = [Span(m.start(), m.end()) for m in _WORD_RE.finditer(text)]

    return SegmentationIndex(tuple(words), tuple(sentences), tuple(paragraphs), tuple(sections))


@dataclass(frozen=True)
class DocumentVersion:
    """Immutable snapshot of the document text.

    ``version_id`` is the ordering authority; ``created_at`` is informational
    wall-clock time only.
    """

    version_id: int
    text: str
    parent_id: Optional[int] = None
    created_at: float = 0.0
    config: SegmentationConfig = field(default=SegmentationConfig(), compare=False)

    @cached_property
    def segmentation(self) -> SegmentationIndex:
        return segment(self.text, self.config)

    def slice(self, span: Span) -> str:
        self.check_span(span)
        return self.text[span.start : span.end]

    def check_span(self, span: Span) -> None:
        if span.end > len(self.text):
            raise SpanOutOfBounds(
                f"span [{span.start}, {span.end}) exceeds document length {len(self.text)}"
            )


def ingest(text: str, config: SegmentationConfig = SegmentationConfig(), *,
           created_at: Optional[float] = None) -> DocumentVersion:
    """Create version 0 of a document from raw text."""
    if not isinstance(text, str):
        raise InvalidEncoding("document text must be a str")
    try:
        text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise InvalidEncoding(f"text is not valid Unicode: {exc}") from exc
    stamp = time.time() if created_at is None else created_at
    return DocumentVersion(version_id=0, text=text, parent_id=None, created_at=stamp, config=config)


def window_at(index: SegmentationIndex, span: Span, level: str, doc_length: int) -> Span:
    """Smallest window at ``level`` fully containing ``span``.

    When ``span`` straddles several units the covering hull of the touched
    units is returned; when it sits entirely in whitespace between units it
    is its own window. The result always contains ``span``.
    """
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    if span.end > doc_length:
        raise SpanOutOfBounds(f"span [{span.start}, {span.end}) exceeds length {doc_length}")
    if level == "document":
        return Span(0, doc_length)

    spans = index.at_level(level)
    starts = [s.start for s in spans]
    # candidates: every unit overlapping the query (scan starts one unit
    # early so abutting left neighbours of empty spans are considered)
    lo = max(0, bisect_right(starts, span.start) - 2)
    hull = span
    touched = False
    for unit in spans[lo:]:
        if unit.start >= span.end and not (span.start == span.end == unit.start):
            break
        if unit.overlaps(span) or (span.start == span.end and unit.start <= span.start <= unit.end):
            # empty query spans adopt the unit they sit in or abut
            if span.start == span.end and not (unit.start <= span.start <= unit.end):
                continue
            hull = hull.hull(unit)
            touched = True
    if not touched and span.start == span.end:
        return span
    return hull


def apply_edits(version: DocumentVersion, edits: list, *,
                created_at: Optional[float] = None) -> DocumentVersion:
    """Apply a sorted, non-overlapping edit batch, producing a child version."""
    text = version.text
    n = len(text)
    prev_end = 0
    parts = []
    cursor = 0
    for edit in edits:
        if edit.at.end > n:
            raise SpanOutOfBounds(
                f"edit span [{edit.at.start}, {edit.at.end}) exceeds document length {n}"
            )
        if edit.at.start < prev_end:
            raise OverlappingEdits(
                f"edit at {edit.at.start} overlaps or precedes previous edit ending at {prev_end}"
            )
        parts.append(text[cursor : edit.at.start])
        parts.append(edit.new_text)
        cursor = edit.at.end
        prev_end = edit.at.end
    parts.append(text[cursor:])
    stamp = time.time() if created_at is None else created_at
    return DocumentVersion(
        version_id=version.version_id + 1,
        text="".join(parts),
        parent_id=version.version_id,
        created_at=stamp,
        config=version.config,
    )
