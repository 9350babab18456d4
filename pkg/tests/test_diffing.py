"""Diff computation, replay fidelity, span mapping, and localization."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marginalia.diffing import (
    ChangeSet,
    compute_changes,
    localize,
    map_span,
    tokenize,
)
from marginalia.document import Span, ingest
from marginalia.errors import SpanOutOfBounds

from conftest import VOCAB, mutate_text, random_text, span_of
from oracles import CharSimulation, lcs_edit_distance


def diff_texts(old_text: str, new_text: str) -> ChangeSet:
    old = ingest(old_text)
    new = ingest(new_text)
    return ChangeSet(0, 1, compute_changes(old, new.__class__(1, new_text, 0)).changes)


def _changeset(old_text, new_text):
    from marginalia.document import DocumentVersion

    return compute_changes(ingest(old_text), DocumentVersion(1, new_text, 0))


class TestTokenize:
    def test_round_trips_text(self):
        text = "a  b\nthree\t four "
        assert "".join(tokenize(text)) == text

    @settings(max_examples=200, deadline=None)
    @given(st.text(max_size=120))
    def test_round_trips_any_text(self, text):
        assert "".join(tokenize(text)) == text


class TestComputeChanges:
    def test_identical_texts_empty(self):
        cs = _changeset("a b c", "a b c")
        assert cs.is_empty
        assert cs.changes == ()

    def test_single_token_substitution(self):
        cs = _changeset("a b c", "a X c")
        assert len(cs.changes) == 1
        change = cs.changes[0]
        assert change.kind == "replace"
        assert change.old_text == "b"
        assert change.new_text == "X"

    def test_insert_and_delete_kinds(self):
        assert _changeset("a c", "a b c").changes[0].kind == "insert"
        assert _changeset("a b c", "a c").changes[0].kind == "delete"

    def test_changes_sorted_and_disjoint(self):
        rng = random.Random(5)
        for _ in range(100):
            old_text = random_text(rng, 60)
            new_text = mutate_text(rng, old_text)
            cs = _changeset(old_text, new_text)
            for a, b in zip(cs.changes, cs.changes[1:]):
                assert a.old_span.end <= b.old_span.start
                assert a.new_span.end <= b.new_span.start
                assert not (a.old_span.end == b.old_span.start
                            and a.new_span.end == b.new_span.start)

    def test_replay_fidelity_random_pairs(self):
        rng = random.Random(17)
        for _ in range(300):
            old_text = random_text(rng, 200)
            new_text = mutate_text(rng, old_text) if rng.random() < 0.7 else random_text(rng, 200)
            cs = _changeset(old_text, new_text)
            assert cs.replay(old_text) == new_text

    def test_minimality_against_dp_oracle(self):
        rng = random.Random(23)
        for _ in range(120):
            old_text = random_text(rng, 200)
            if rng.random() < 0.5:
                new_text = mutate_text(rng, old_text, rng.randint(0, 10))
            else:
                new_text = random_text(rng, 200)
            cs = _changeset(old_text, new_text)
            expected = lcs_edit_distance(tokenize(old_text), tokenize(new_text))
            assert cs.edit_token_count() == expected, (old_text, new_text)

    def test_as_edits_round_trip(self):
        from marginalia.document import apply_edits

        rng = random.Random(29)
        for _ in range(60):
            old_text = random_text(rng, 80)
            new_text = mutate_text(rng, old_text)
            old = ingest(old_text)
            cs = _changeset(old_text, new_text)
            assert apply_edits(old, cs.as_edits()).text == new_text

    def test_json_round_trip(self):
        cs = _changeset("a b c d", "a X c e")
        assert ChangeSet.from_json(cs.to_json()) == cs
        data = cs.to_json()
        assert set(data) == {"old_version_id", "new_version_id", "changes"}
        assert set(data["changes"][0]) == {"kind", "old_span", "new_span", "old_text", "new_text"}


class TestMapSpan:
    def test_empty_changeset_intact(self):
        cs = _changeset("a b c", "a b c")
        m = map_span(Span(2, 3), cs)
        assert m.status == "intact"
        assert m.new_span == Span(2, 3)

    def test_insertion_before_shifts(self):
        old_text = "bb cc"
        cs = _changeset(old_text, "aa bb cc")
        span = span_of(old_text, "cc")
        m = map_span(span, cs)
        assert m.status == "shifted"
        assert "aa bb cc"[m.new_span.start : m.new_span.end] == "cc"

    def test_insertion_at_start_goes_before(self):
        old_text = "bb cc"
        cs = _changeset(old_text, "xx bb cc")
        span = span_of(old_text, "bb")
        m = map_span(span, cs)
        assert m.status == "shifted"
        assert "xx bb cc"[m.new_span.start : m.new_span.end] == "bb"

    def test_insertion_at_end_not_absorbed(self):
        old_text = "bb cc"
        cs = _changeset(old_text, "bb cc dd")
        span = span_of(old_text, "cc")
        m = map_span(span, cs)
        assert m.status == "intact"
        assert m.new_span == span

    def test_replacement_covering_span_deletes(self):
        old_text = "aa bb cc"
        cs = _changeset(old_text, "aa XX cc")
        m = map_span(span_of(old_text, "bb"), cs)
        assert m.status == "deleted"
        assert m.new_span is None

    def test_partial_overlap_modifies(self):
        old_text = "aa bb cc dd"
        cs = _changeset(old_text, "aa bb XX dd")
        span = span_of(old_text, "bb cc")
        m = map_span(span, cs)
        assert m.status == "modified"
        new_text = "aa bb XX dd"
        assert new_text[m.new_span.start : m.new_span.end] == "bb XX"

    def test_insertion_inside_modifies(self):
        old_text = "aa bb cc"
        cs = _changeset(old_text, "aa bb XX cc")
        span = span_of(old_text, "bb cc")
        m = map_span(span, cs)
        assert m.status == "modified"

    def test_out_of_bounds(self):
        cs = _changeset("abc", "abc")
        with pytest.raises(SpanOutOfBounds):
            map_span(Span(0, 9), cs, old_length=3)

    def test_statuses_match_char_simulation(self):
        rng = random.Random(31)
        checked = 0
        for _ in range(250):
            old_text = random_text(rng, 80)
            if not old_text:
                continue
            new_text = mutate_text(rng, old_text, rng.randint(1, 6))
            cs = _changeset(old_text, new_text)
            sim = CharSimulation(old_text, cs)
            assert sim.new_text == new_text
            for _ in range(8):
                start = rng.randrange(len(old_text))
                end = rng.randint(start + 1, min(len(old_text), start + 12))
                span = Span(start, end)
                expected_status, expected_span = sim.classify(span)
                m = map_span(span, cs, old_length=len(old_text))
                assert m.status == expected_status, (old_text, new_text, span)
                if expected_status in ("intact", "shifted"):
                    assert m.new_span == expected_span
                    assert (
                        new_text[m.new_span.start : m.new_span.end]
                        == old_text[span.start : span.end]
                    )
                checked += 1
        assert checked > 1000

    def test_modified_span_covers_survivors_and_replacements(self):
        rng = random.Random(37)
        for _ in range(150):
            old_text = random_text(rng, 60)
            if not old_text:
                continue
            new_text = mutate_text(rng, old_text, rng.randint(1, 5))
            cs = _changeset(old_text, new_text)
            sim = CharSimulation(old_text, cs)
            for _ in range(6):
                start = rng.randrange(len(old_text))
                end = rng.randint(start + 1, min(len(old_text), start + 15))
                span = Span(start, end)
                m = map_span(span, cs, old_length=len(old_text))
                if m.status != "modified":
                    continue
                surviving = [
                    sim.position_of_old[i]
                    for i in range(span.start, span.end)
                    if i in sim.position_of_old
                ]
                if surviving:
                    assert m.new_span.start <= min(surviving)
                    assert m.new_span.end >= max(surviving) + 1
                for ch in cs.changes:
                    if ch.old_span.overlaps(span) and len(ch.old_span):
                        assert m.new_span.start <= ch.new_span.start
                        assert m.new_span.end >= ch.new_span.end


class TestLocalize:
    OLD = "aa bb cc dd ee ff"

    def test_no_changes_distant(self):
        cs = _changeset(self.OLD, self.OLD)
        window = span_of(self.OLD, "cc dd")
        lc = localize(cs, window)
        assert lc.anchor_overlap == "distant"
        assert lc.affected_span == window
        assert lc.summary == ()

    def test_edit_strictly_inside(self):
        new = "aa bb XX dd ee ff"
        cs = _changeset(self.OLD, new)
        window = span_of(self.OLD, "bb cc dd")
        lc = localize(cs, window)
        assert lc.anchor_overlap == "inside"
        assert len(lc.summary) == 1
        assert lc.affected_span.contains(cs.changes[0].new_span)

    def test_edit_extending_past_window_overlaps(self):
        new = "aa bb QQ ee ff"  # one run replacing "cc dd", crossing the boundary
        cs = _changeset(self.OLD, new)
        assert len(cs.changes) == 1
        window = span_of(self.OLD, "bb cc")
        lc = localize(cs, window)
        assert lc.anchor_overlap == "overlapping"
        # hull covers both the mapped window and the whole change
        assert lc.affected_span.contains(cs.changes[0].new_span)

    def test_adjacent_edit(self):
        old = "aa bb cc"
        new = "aa XX bb cc"  # insertion right at the window start boundary
        cs = _changeset(old, new)
        window = span_of(old, "bb cc")
        lc = localize(cs, window)
        assert lc.anchor_overlap in ("adjacent", "distant")
        # far-away edit really is distant
        cs2 = _changeset("aa bb cc dd ee", "XX bb cc dd ee")
        lc2 = localize(cs2, span_of("aa bb cc dd ee", "dd ee"))
        assert lc2.anchor_overlap == "distant"

    def test_affected_span_is_hull_of_summary(self):
        rng = random.Random(41)
        for _ in range(200):
            old_text = random_text(rng, 60)
            if len(old_text) < 4:
                continue
            new_text = mutate_text(rng, old_text, rng.randint(1, 6))
            cs = _changeset(old_text, new_text)
            start = rng.randrange(len(old_text))
            end = rng.randint(start, min(len(old_text), start + 20))
            lc = localize(cs, Span(start, end), old_length=len(old_text))
            for ch in lc.summary:
                assert lc.affected_span.contains(ch.new_span)
            assert 0 <= lc.affected_span.start <= lc.affected_span.end <= len(new_text)

    def test_monotone_under_window_growth(self):
        rng = random.Random(43)
        rank = {"distant": 0, "adjacent": 1, "inside": 2, "overlapping": 2}
        for _ in range(150):
            old_text = random_text(rng, 50)
            if len(old_text) < 6:
                continue
            new_text = mutate_text(rng, old_text, rng.randint(1, 4))
            cs = _changeset(old_text, new_text)
            start = rng.randrange(len(old_text) - 2)
            end = rng.randint(start + 1, min(len(old_text), start + 8))
            small = localize(cs, Span(start, end), old_length=len(old_text))
            grown = Span(max(0, start - rng.randint(0, 5)),
                         min(len(old_text), end + rng.randint(0, 5)))
            big = localize(cs, grown, old_length=len(old_text))
            # growing the window never downgrades engagement to distant
            if small.anchor_overlap != "distant":
                assert rank[big.anchor_overlap] >= 1 or big.anchor_overlap == "inside"
                assert big.anchor_overlap != "distant"
