"""Revision metrics against hand-computed values and a DP oracle."""

import random

from marginalia.metrics import compute_metrics, percent_changed, token_edit_distance
from marginalia.store import Event

from conftest import mutate_text, random_text
from oracles import levenshtein_recursive


def paste(text, source="external", at=1.0):
    return Event("paste", at, {"text": text, "source": source})


class TestTokenEditDistance:
    def test_identity(self):
        assert token_edit_distance(["a", "b"], ["a", "b"]) == 0

    def test_empty_sides(self):
        assert token_edit_distance([], ["a", "b", "c"]) == 3
        assert token_edit_distance(["a"], []) == 1

    def test_substitution_costs_one(self):
        assert token_edit_distance(["a", "b", "c"], ["a", "x", "c"]) == 1

    def test_matches_recursive_oracle(self):
        rng = random.Random(79)
        for _ in range(120):
            a = random_text(rng, 30).split()
            b = mutate_text(rng, " ".join(a), rng.randint(0, 6)).split()
            assert token_edit_distance(a, b) == levenshtein_recursive(a, b)


class TestPercentChanged:
    def test_identical_zero(self):
        assert percent_changed("same words here", "same words here") == 0.0

    def test_empty_both_zero(self):
        assert percent_changed("", "") == 0.0

    def test_total_rewrite_is_one(self):
        assert percent_changed("a b c", "x y z") == 1.0

    def test_bounded(self):
        rng = random.Random(83)
        for _ in range(200):
            a = random_text(rng, 40)
            b = mutate_text(rng, a) if rng.random() < 0.5 else random_text(rng, 40)
            p = percent_changed(a, b)
            assert 0.0 <= p <= 1.0


class TestComputeMetrics:
    def test_empty_log_identical_texts(self):
        metrics = compute_metrics([], "doc text", "doc text")
        assert metrics.copy_paste_actions == 0
        assert metrics.mean_words_pasted == 0.0
        assert metrics.percent_document_changed == 0.0

    def test_single_paste_of_three_words(self):
        metrics = compute_metrics([paste("alpha beta gamma")], "x", "x")
        assert metrics.copy_paste_actions == 1
        assert metrics.mean_words_pasted == 3.0
        assert metrics.words_per_event == (3,)

    def test_mean_matches_hand_computation(self):
        events = [
            paste(" ".join(["w"] * 10), "document"),
            paste(" ".join(["w"] * 20), "feedback-pane"),
            paste(" ".join(["w"] * 30), "feedback-pane"),
            paste(" ".join(["w"] * 40), "external"),
        ]
        metrics = compute_metrics(events, "a", "a")
        assert metrics.copy_paste_actions == 4
        assert metrics.mean_words_pasted == 25.0
        assert metrics.words_per_event == (10, 20, 30, 40)
        assert metrics.source_breakdown == {
            "document": 1, "feedback-pane": 2, "external": 1,
        }

    def test_copies_not_counted_as_pastes(self):
        events = [
            Event("copy", 1.0, {"text": "a b", "source": "document"}),
            paste("a b", "document"),
        ]
        assert compute_metrics(events, "x", "x").copy_paste_actions == 1

    def test_percent_against_independent_oracle(self):
        rng = random.Random(89)
        for _ in range(60):
            initial = random_text(rng, 40)
            final = mutate_text(rng, initial, rng.randint(0, 8))
            metrics = compute_metrics([], initial, final)
            a, b = initial.split(), final.split()
            denominator = max(len(a), len(b))
            expected = levenshtein_recursive(a, b) / denominator if denominator else 0.0
            assert abs(metrics.percent_document_changed - expected) <= 1e-9

    def test_json_shape(self):
        data = compute_metrics([paste("one two")], "a b", "a c").to_json()
        assert set(data) == {
            "copy_paste_actions",
            "words_pasted_per_action",
            "percent_document_changed",
            "source_breakdown",
        }
        assert data["words_pasted_per_action"]["mean"] == 2.0
        assert data["words_pasted_per_action"]["per_event"] == [2]
