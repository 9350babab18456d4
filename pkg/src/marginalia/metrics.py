"""Revision metrics computed from the instrumentation event log.

Definitions, stated so third parties can recompute them:

- copy_paste_actions: number of paste events in the log
- words pasted per action: whitespace-token count of each pasted payload
- percent_document_changed: word-token Levenshtein distance between the
  initial and final texts, divided by the larger token count (0 when both
  are empty); bounded to [0, 1] because substitutions cost 1
- source_breakdown: paste counts by clipboard source pane
"""

from __future__ import annotations

from dataclasses import dataclass

from .store import PASTE_SOURCES


@dataclass(frozen=True)
class RevisionMetrics:
    copy_paste_actions: int
    words_per_event: tuple
    mean_words_pasted: float
    percent_document_changed: float
    source_breakdown: dict

    def to_json(self) -> dict:
        return {
            "copy_paste_actions": self.copy_paste_actions,
            "words_pasted_per_action": {
                "mean": self.mean_words_pasted,
                "per_event": list(self.words_per_event),
            },
            "percent_document_changed": self.percent_document_changed,
            "source_breakdown": dict(self.source_breakdown),
        }


def token_edit_distance(a_tokens: list, b_tokens: list) -> int:
    """Unit-cost Levenshtein distance (insert/delete/substitute) over tokens."""
    n, m = len(a_tokens), len(b_tokens)
    if n == 0:
        return m
    if m == 0:
        return n
    previous = list(range(m + 1))
    for i in range(1, n + 1):
        current = [i] + [0] * m
        a_tok = a_tokens[i - 1]
        for j in range(1, m + 1):
            cost = 0 if a_tok == b_tokens[j - 1] else 1
            current[j] = min(
                previous[j] + 1,        # delete
                current[j - 1] + 1,     # insert
                previous[j - 1] + cost  # keep or substitute
            )
        previous = current
    return previous[m]


def percent_changed(initial_text: str, final_text: str) -> float:
    a = initial_text.split()
    b = final_text.split()
    denominator = max(len(a), len(b))
    if denominator == 0:
        return 0.0
    return token_edit_distance(a, b) / denominator


def compute_metrics(events: list, initial_text: str, final_text: str) -> RevisionMetrics:
    pastes = [e for e in events if e.kind == "paste"]
    words = tuple(len(str(e.payload.get("text", "")).split()) for e in pastes)
    mean = sum(words) / len(words) if words else 0.0
    breakdown = {source: 0 for source in PASTE_SOURCES}
    for e in pastes:
        source = e.payload.get("source", "external")
        breakdown[source] = breakdown.get(source, 0) + 1
    return RevisionMetrics(
        copy_paste_actions=len(pastes),
        words_per_event=words,
        mean_words_pasted=mean,
        percent_document_changed=percent_changed(initial_text, final_text),
        source_breakdown=breakdown,
    )
