"""Orchestrated pipelines: meta-queries, user threads, replies, refresh."""

import json

import pytest

from marginalia.anchoring import AnchorProposal
from marginalia.document import Edit, Span
from marginalia.errors import (
    FeatureDisabled,
    MockScriptExhausted,
    SchemaError,
    ThreadNotFound,
)
from marginalia.llm import LLMClient, MockScript, ProviderConfig
from marginalia.normalization import normalize
from marginalia.store import SessionConfig
from marginalia.threads import Orchestrator

from conftest import mock_client, proposals_json, span_of

DOC = (
    "Learners watch videos more and more each week. Practice still decides progress.\n\n"
    "Forums repeat the same advice more and more often. Skimming replaces careful reading."
)


def make_orchestrator(store, *responses, text=DOC, config=None, entries=None):
    session = store.open_session(text, config or SessionConfig())
    client = mock_client(*responses, entries=entries)
    return Orchestrator(store, session, client), session


def reply_json(action="affirm", text="Still holds."):
    return json.dumps({"action": action, "reply_text": text})


class TestRunMetaQuery:
    def test_empty_proposals_empty_result(self, store):
        orch, session = make_orchestrator(store, "[]")
        result = orch.run_meta_query("anything to improve?")
        assert result.created_threads == []
        assert result.rejected == []
        assert result.raw_proposal_count == 0
        assert session.threads == {}

    def test_three_proposals_one_hallucinated(self, store):
        batch = proposals_json(
            {"anchor_text": "Skimming replaces careful reading.", "comment": "Expand."},
            {"anchor_text": "totally made up words", "comment": "Fake."},
            {"anchor_text": "Practice still decides progress.", "comment": "Strong."},
        )
        orch, session = make_orchestrator(store, batch)
        result = orch.run_meta_query("review")
        assert len(result.created_threads) == 2
        assert len(result.rejected) == 1
        assert result.rejected[0].reason == "hallucinated"
        assert result.raw_proposal_count == 3

    def test_redundancy_query_anchors_redundant_sentence(self, store):
        batch = proposals_json({
            "anchor_text": "Forums repeat the same advice more and more often.",
            "comment": "Tighten this sentence.",
        })
        orch, session = make_orchestrator(store, batch)
        result = orch.run_meta_query("suggest more concise phrasing for redundant sentences")
        thread = session.threads[result.created_threads[0]]
        # the span is the minimal slice whose normalization matches: the
        # stripped trailing period stays outside the anchor
        assert thread.anchor.anchor_text == "Forums repeat the same advice more and more often"
        assert thread.anchor.acw.level == "exact"

    def test_ambiguous_anchor_refined_once(self, store):
        batch = proposals_json({
            "anchor_text": "more and more",
            "acw_text": "Learners watch videos more and more each week.",
            "comment": "Redundant.",
        })
        refined = json.dumps({
            "anchor_text": "more and more",
            "comment": "Redundant within this sentence; use one 'more'.",
        })
        orch, session = make_orchestrator(store, batch, refined)
        result = orch.run_meta_query("tighten")
        thread = session.threads[result.created_threads[0]]
        assert thread.anchor.acw.level == "sentence"
        assert thread.messages[0].text == "Redundant within this sentence; use one 'more'."

    def test_refine_failure_falls_back_to_original_comment(self, store):
        batch = proposals_json({
            "anchor_text": "more and more",
            "acw_text": "Learners watch videos more and more each week.",
            "comment": "Original comment.",
        })
        orch, session = make_orchestrator(store, batch, "not json")
        result = orch.run_meta_query("tighten")
        thread = session.threads[result.created_threads[0]]
        assert thread.messages[0].text == "Original comment."

    def test_refine_disabled_by_config(self, store):
        batch = proposals_json({
            "anchor_text": "more and more",
            "acw_text": "Learners watch videos more and more each week.",
            "comment": "Original comment.",
        })
        orch, session = make_orchestrator(
            store, batch, config=SessionConfig(refine_enabled=False)
        )
        result = orch.run_meta_query("tighten")
        assert session.threads[result.created_threads[0]].messages[0].text == "Original comment."

    def test_malformed_output_one_reask_then_success(self, store):
        good = proposals_json({"anchor_text": "Skimming", "comment": "ok"})
        orch, session = make_orchestrator(store, "garbage {{{", good)
        result = orch.run_meta_query("review")
        assert len(result.created_threads) == 1

    def test_two_schema_failures_discard_batch(self, store):
        orch, session = make_orchestrator(store, "bad", "also bad")
        with pytest.raises(SchemaError):
            orch.run_meta_query("review")
        assert session.threads == {}
        assert session.events == []
        assert session.cached_version_id == 0

    def test_provider_failure_creates_nothing(self, store):
        orch, session = make_orchestrator(store)  # empty script
        with pytest.raises(MockScriptExhausted):
            orch.run_meta_query("review")
        assert session.threads == {}
        assert session.events == []

    def test_duplicate_proposals_create_one_thread(self, store):
        batch = proposals_json(
            {"anchor_text": "Skimming replaces careful reading.", "comment": "Expand, please!"},
            {"anchor_text": "Skimming   replaces careful reading.", "comment": "expand please"},
        )
        orch, session = make_orchestrator(store, batch)
        result = orch.run_meta_query("review")
        assert len(result.created_threads) == 1
        assert result.raw_proposal_count == 2
        assert len(result.created_threads) + len(result.rejected) <= result.raw_proposal_count

    def test_cached_version_advances_only_on_success(self, store):
        orch, session = make_orchestrator(
            store, "[]", proposals_json({"anchor_text": "Skimming", "comment": "c"})
        )
        edit = [Edit("insert", Span(0, 0), "Heading line. ")]
        orch.apply_edits(0, edit)
        assert session.cached_version_id == 0
        orch.run_meta_query("first")
        assert session.cached_version_id == 1

    def test_change_summary_uses_cached_version(self, store):
        batch1 = proposals_json({"anchor_text": "Skimming", "comment": "c"})
        orch, session = make_orchestrator(store, batch1, "[]")
        orch.run_meta_query("first")
        orch.apply_edits(0, [Edit("insert", Span(0, 0), "New intro. ")])
        orch.run_meta_query("second")
        # the second query event records the advanced pointer
        assert session.cached_version_id == session.head.version_id

    def test_query_event_recorded(self, store):
        orch, session = make_orchestrator(store, "[]")
        orch.run_meta_query("the query text")
        events = [e for e in session.events if e.kind == "query"]
        assert len(events) == 1
        assert events[0].payload["query"] == "the query text"
        assert events[0].payload["query_id"] == "q1"

    def test_open_threads_fed_back_to_prompt(self, store):
        batch1 = proposals_json({"anchor_text": "Skimming", "comment": "Expand."})
        entries = [
            {"match": "*", "response": batch1},
            {"match": "*", "response": "[]"},
        ]
        orch, session = make_orchestrator(store, entries=entries)
        orch.run_meta_query("first")
        orch.run_meta_query("second")  # must not crash; prior thread rendered
        assert len(session.threads) == 1


class TestUserThreads:
    def test_create_on_unique_span(self, store):
        orch, session = make_orchestrator(store, reply_json("update", "Consider shortening."))
        span = span_of(DOC, "Practice still decides progress.")
        thread = orch.create_user_thread(span, "Does this sentence land?")
        assert thread.anchor.acw.level == "exact"
        assert [m.author for m in thread.messages] == ["user", "ai"]
        assert thread.messages[1].action == "update"
        assert thread.thread_id in session.threads

    def test_create_on_repeated_word_gets_sentence_window(self, store):
        orch, session = make_orchestrator(store, reply_json())
        span = span_of(DOC, "more")  # four occurrences
        thread = orch.create_user_thread(span, "Too repetitive?")
        assert thread.anchor.acw.level == "sentence"

    def test_study_mode_blocks_creation(self, store):
        orch, session = make_orchestrator(
            store, reply_json(), config=SessionConfig(study_mode=True)
        )
        with pytest.raises(FeatureDisabled):
            orch.create_user_thread(Span(0, 5), "hi")

    def test_study_mode_blocks_replies(self, store):
        orch, session = make_orchestrator(
            store, reply_json(), config=SessionConfig(study_mode=True)
        )
        with pytest.raises(FeatureDisabled):
            orch.reply_in_thread("s1.t1", "hi")

    def test_unknown_thread(self, store):
        orch, _ = make_orchestrator(store)
        with pytest.raises(ThreadNotFound):
            orch.reply_in_thread("s1.t99", "hello?")


class TestReplies:
    def _seeded(self, store, *responses):
        entries = [{"match": "*", "response": r} for r in (
            reply_json("update", "Try tightening it."),
        ) + responses]
        orch, session = make_orchestrator(store, entries=entries)
        span = span_of(DOC, "Learners watch videos more and more each week.")
        thread = orch.create_user_thread(span, "Thoughts on this opener?")
        return orch, session, thread

    def test_no_edits_reply_appends(self, store):
        orch, session, thread = self._seeded(store, reply_json("affirm", "Still fine."))
        message = orch.reply_in_thread(thread.thread_id, "Anything else?")
        assert message.action == "affirm"
        assert len(thread.messages) == 4

    def test_reply_after_anchor_edit_reanchors(self, store):
        orch, session, thread = self._seeded(store, reply_json("acknowledge", "Implemented."))
        # apply the suggested tightening: drop "and more"
        anchor_span = thread.anchor.span
        phrase = span_of(session.head.text, "more and more")
        orch.apply_edits(session.head.version_id, [Edit("replace", phrase, "more")])
        assert session.threads[thread.thread_id].anchor.status == "modified"
        message = orch.reply_in_thread(thread.thread_id, "Is this version better?")
        assert message.action in ("acknowledge", "affirm")
        assert session.threads[thread.thread_id].anchor.version_id == session.head.version_id

    def test_reply_after_anchor_deletion_can_retract(self, store):
        orch, session, thread = self._seeded(store, reply_json("retract", "No longer applies."))
        sentence = span_of(session.head.text, "Learners watch videos more and more each week. ")
        orch.apply_edits(session.head.version_id, [Edit("delete", sentence)])
        assert session.threads[thread.thread_id].state == "orphaned"
        message = orch.reply_in_thread(thread.thread_id, "Where did my comment go?")
        assert message.action == "retract"

    def test_failed_reply_rolls_back_user_message(self, store):
        orch, session, thread = self._seeded(store)  # no scripted reply left
        count = len(thread.messages)
        with pytest.raises(MockScriptExhausted):
            orch.reply_in_thread(thread.thread_id, "hello?")
        assert len(session.threads[thread.thread_id].messages) == count

    def test_reply_event_recorded(self, store):
        orch, session, thread = self._seeded(store, reply_json())
        orch.reply_in_thread(thread.thread_id, "check")
        kinds = [e.kind for e in session.events]
        assert kinds.count("reply") == 2  # creation + this reply


class TestRefreshAnchors:
    def _with_threads(self, store):
        batch = proposals_json(
            {"anchor_text": "Skimming replaces careful reading.", "comment": "Expand."},
            {"anchor_text": "Practice still decides progress.", "comment": "Strong."},
        )
        orch, session = make_orchestrator(store, batch)
        orch.run_meta_query("review")
        return orch, session

    def test_no_edits_all_intact(self, store):
        orch, session = self._with_threads(store)
        statuses = orch.refresh_anchors()
        assert statuses and all(s == "intact" for _, s in statuses)

    def test_deleting_paragraph_orphans_its_thread_only(self, store):
        orch, session = self._with_threads(store)
        text = session.head.text
        second_para = Span(text.index("Forums"), len(text))
        new, statuses = orch.apply_edits(0, [Edit("delete", second_para)])
        by_thread = dict(statuses)
        skimming = next(
            t.thread_id for t in session.threads.values()
            if "Skimming" in t.anchor.anchor_text
        )
        practice = next(
            t.thread_id for t in session.threads.values()
            if "Practice" in t.anchor.anchor_text
        )
        assert by_thread[skimming] == "orphaned"
        assert by_thread[practice] in ("intact", "shifted")
        assert session.threads[skimming].state == "orphaned"
        assert session.threads[practice].state == "open"

    def test_edit_inside_window_marks_modified(self, store):
        orch, session = self._with_threads(store)
        text = session.head.text
        inside = span_of(text, "careful")
        new, statuses = orch.apply_edits(0, [Edit("replace", inside, "close")])
        by_thread = dict(statuses)
        skimming = next(
            t.thread_id for t in session.threads.values()
            if "Skimming" in t.anchor.anchor_text
        )
        assert by_thread[skimming] == "modified"
        anchor = session.threads[skimming].anchor
        assert session.head.text[anchor.span.start : anchor.span.end] == anchor.anchor_text

    def test_stale_base_version_rejected(self, store):
        from marginalia.errors import VersionMismatch

        orch, session = self._with_threads(store)
        orch.apply_edits(0, [])
        with pytest.raises(VersionMismatch):
            orch.apply_edits(0, [])

    def test_no_thread_references_span_outside_document(self, store):
        orch, session = self._with_threads(store)
        text = session.head.text
        orch.apply_edits(0, [Edit("delete", Span(len(text) // 2, len(text)))])
        head_len = len(session.head.text)
        for thread in session.threads.values():
            if thread.anchor.span is not None:
                assert thread.anchor.span.end <= head_len

    def test_statuses_persisted(self, store):
        orch, session = self._with_threads(store)
        text = session.head.text
        orch.apply_edits(0, [Edit("delete", Span(text.index("Forums"), len(text)))])
        store.close(session)
        reloaded = store.load_session(session.session_id)
        states = {t.state for t in reloaded.threads.values()}
        assert "orphaned" in states
