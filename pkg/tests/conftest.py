"""Shared fixtures and deterministic generators for the test suite."""

from __future__ import annotations

import json
import random

import pytest

from marginalia.document import Span, ingest
from marginalia.llm import LLMClient, MockScript, ProviderConfig
from marginalia.normalization import normalize
from marginalia.store import SessionStore

VOCAB = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf",
    "hotel", "india", "juliet", "kilo", "lima", "mike", "november",
    "oscar", "papa", "quebec", "romeo", "sierra", "tango", "uniform",
    "victor", "whiskey", "xray", "yankee", "zulu",
]

SEPARATORS = [" ", " ", " ", "  ", "\n"]


def random_sentence(rng: random.Random, n_words=None, vocab=VOCAB) -> str:
    n = n_words or rng.randint(3, 8)
    words = [rng.choice(vocab) for _ in range(n)]
    return " ".join(words).capitalize() + rng.choice([".", ".", ".", "!", "?"])


def random_paragraph(rng: random.Random, n_sentences=None, vocab=VOCAB) -> str:
    n = n_sentences or rng.randint(1, 4)
    return " ".join(random_sentence(rng, vocab=vocab) for _ in range(n))


def random_document(rng: random.Random, n_paragraphs=None, vocab=VOCAB,
                    headings=False) -> str:
    n = n_paragraphs or rng.randint(2, 5)
    blocks = []
    for i in range(n):
        if headings and rng.random() < 0.3:
            blocks.append(f"# {rng.choice(vocab).capitalize()} {i}")
        blocks.append(random_paragraph(rng, vocab=vocab))
    return "\n\n".join(blocks)


def plant_repeats(rng: random.Random, vocab=VOCAB) -> str:
    """Document guaranteed to contain repeated words, often repeated
    sentences, and sometimes whole repeated paragraphs."""
    paragraphs = [random_paragraph(rng, vocab=vocab) for _ in range(rng.randint(2, 4))]
    repeated_word = rng.choice(vocab)
    extra = [
        f"The {repeated_word} stands near the {rng.choice(vocab)}.",
        f"Every {repeated_word} waits for the {rng.choice(vocab)}.",
    ]
    paragraphs.insert(rng.randrange(len(paragraphs) + 1), " ".join(extra))
    if rng.random() < 0.6:  # repeated sentence in two paragraphs
        sentence = random_sentence(rng, vocab=vocab)
        a, b = rng.sample(range(len(paragraphs)), 2) if len(paragraphs) >= 2 else (0, 0)
        paragraphs[a] += " " + sentence
        paragraphs[b] = sentence + " " + paragraphs[b]
    if rng.random() < 0.3:  # fully duplicated paragraph
        paragraphs.append(paragraphs[rng.randrange(len(paragraphs))])
    if rng.random() < 0.3:
        paragraphs.insert(0, f"# {rng.choice(vocab).capitalize()} notes")
    return "\n\n".join(paragraphs)


def random_text(rng: random.Random, max_tokens: int, vocab=VOCAB) -> str:
    n_words = rng.randint(0, max(0, max_tokens // 2))
    parts = []
    for i in range(n_words):
        if i:
            parts.append(rng.choice(SEPARATORS))
        parts.append(rng.choice(vocab))
    return "".join(parts)


def mutate_text(rng: random.Random, text: str, n_ops=None, vocab=VOCAB) -> str:
    """Random splices: word insertions, deletions, and replacements."""
    n = n_ops if n_ops is not None else rng.randint(0, 20)
    for _ in range(n):
        if not text:
            text = rng.choice(vocab)
            continue
        start = rng.randrange(len(text) + 1)
        end = min(len(text), start + rng.randint(0, 12))
        replacement = rng.choice([
            "",
            rng.choice(vocab),
            rng.choice(vocab) + " " + rng.choice(vocab),
            " ",
        ])
        text = text[:start] + replacement + text[end:]
    return text


def mock_client(*responses, entries=None) -> LLMClient:
    """Client replaying the given responses in order (match-any)."""
    script = entries or [{"match": "*", "response": r} for r in responses]
    client = LLMClient(ProviderConfig(mock_mode=True))
    client.use_script(MockScript(script))
    return client


def proposals_json(*items) -> str:
    return json.dumps(list(items))


@pytest.fixture
def store(tmp_path):
    return SessionStore(tmp_path / "store")


@pytest.fixture
def rng():
    return random.Random(0xA11C)


def span_of(text: str, needle: str, occurrence: int = 0) -> Span:
    """Span of the nth verbatim occurrence of ``needle`` in ``text``."""
    start = -1
    for _ in range(occurrence + 1):
        start = text.index(needle, start + 1)
    return Span(start, start + len(needle))


def assert_normalized_equal(a: str, b: str) -> None:
    assert normalize(a) == normalize(b)


def make_version(text: str):
    return ingest(text)
