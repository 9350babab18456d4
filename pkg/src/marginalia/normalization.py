"""Tolerant text normalization for anchor matching.

The rule table (quote/dash folding, stripped punctuation, conditional
hyphen handling) ships as a versioned JSON resource so the exact matching
behaviour is inspectable and pinned by tests. Normalization is:

1. fold curly quotes and dash variants to their ASCII forms
2. case-fold
3. drop punctuation from the strip set; a hyphen survives only between two
   alphanumeric characters (so ``well-known`` keeps its hyphen, a standalone
   dash disappears)
4. collapse whitespace runs to one space and trim the ends

The result is deterministic and idempotent.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def rule_table() -> dict:
    raw = resources.files("marginalia.resources").joinpath("normalization_rules.json").read_text("utf-8")
    table = json.loads(raw)
    table["strip_set"] = frozenset(table["strip"])
    return table


def normalize_with_map(text: str) -> tuple[str, list[tuple[int, int]]]:
    """Normalize ``text`` and map each output character to its source range.

    Entry ``i`` of the map is the half-open original range the ``i``-th
    normalized character came from. Collapsed whitespace maps to the whole
    source run; a case-fold expansion shares its source character.
    """
    table = rule_table()
    fold = table["fold"]
    strip_set = table["strip_set"]
    conditional_hyphen = table["conditional_hyphen"]

    folded = [fold.get(c, c) for c in text]
    n = len(folded)

    out: list[str] = []
    out_map: list[tuple[int, int]] = []
    ws_start = -1  # start of a pending whitespace run, -1 when none
    for i in range(n):
        c = folded[i]
        if c.isspace():
            if ws_start < 0:
                ws_start = i
            continue
        if c in strip_set:
            continue
        if c == "-" and conditional_hyphen:
            prev_alnum = i > 0 and folded[i - 1].isalnum()
            next_alnum = i + 1 < n and folded[i + 1].isalnum()
            if not (prev_alnum and next_alnum):
                continue
        if ws_start >= 0:
            if out:
                out.append(" ")
                out_map.append((ws_start, i))
            ws_start = -1
        for cf in c.casefold():
            out.append(cf)
            out_map.append((i, i + 1))
    return "".join(out), out_map


def normalize(text: str) -> str:
    return normalize_with_map(text)[0]
