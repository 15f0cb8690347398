from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from recurrent_scribe import (
    Content,
    LengthLimits,
    Plan,
    SessionMeta,
    ShortTermMemory,
    count_sentences,
    count_words,
    split_sentences,
    validate_content,
    validate_plan,
    validate_short_term,
)
from recurrent_scribe.errors import InvalidMetaError


def _words(n: int) -> str:
    return " ".join(f"w{i}" for i in range(n))


def _sentences(n: int) -> str:
    return " ".join(f"Sentence number {i}." for i in range(n))


class TestCounting:
    def test_word_count_is_whitespace_tokens(self):
        assert count_words("one  two\tthree\nfour") == 4
        assert count_words("") == 0
        assert count_words("   ") == 0

    def test_sentences_split_on_terminator_before_whitespace(self):
        assert count_sentences("First. Second! Third?") == 3

    def test_terminator_at_end_of_text_counts(self):
        assert count_sentences("Only one.") == 1

    def test_terminator_inside_token_does_not_split(self):
        # e.g. a version number or decimal: the period is not followed by space
        assert count_sentences("Version 2.5 shipped today.") == 1

    def test_trailing_fragment_without_terminator_counts(self):
        assert count_sentences("Done. And then") == 2

    def test_split_pieces_are_stripped_and_nonempty(self):
        pieces = split_sentences("  A.   B!  ")
        assert pieces == ["A.", "B!"]

    @given(st.integers(min_value=0, max_value=60))
    def test_constructed_sentence_fixtures_count_exactly(self, n):
        assert count_sentences(_sentences(n)) == n


class TestContent:
    def test_word_count_derived_from_text(self):
        c = Content(_words(300), timestep=0)
        assert c.word_count == 300

    def test_negative_timestep_rejected(self):
        with pytest.raises(ValueError):
            Content("x", timestep=-1)

    def test_in_range_content_has_no_violations(self):
        report = validate_content(Content(_words(300), 0), LengthLimits(200, 400))
        assert report.ok

    def test_empty_content_flags_below_minimum(self):
        report = validate_content(Content("", 0), LengthLimits(200, 400))
        assert [v.kind for v in report.violations] == ["below-minimum"]
        assert report.violations[0].observed == 0

    def test_450_words_flags_above_maximum(self):
        report = validate_content(Content(_words(450), 0), LengthLimits(200, 400))
        assert [v.kind for v in report.violations] == ["above-maximum"]
        assert report.violations[0].observed == 450


class TestShortTermMemory:
    def test_15_sentences_pass(self):
        report = validate_short_term(ShortTermMemory(_sentences(15)),
                                     LengthLimits(10, 20))
        assert report.ok

    def test_single_sentence_flags_below_minimum(self):
        report = validate_short_term(ShortTermMemory("Just one."),
                                     LengthLimits(10, 20))
        assert [v.kind for v in report.violations] == ["below-minimum"]

    def test_25_sentences_flag_above_maximum(self):
        report = validate_short_term(ShortTermMemory(_sentences(25)),
                                     LengthLimits(10, 20))
        assert [v.kind for v in report.violations] == ["above-maximum"]
        assert report.violations[0].observed == 25

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            ShortTermMemory("   ")


class TestPlan:
    def test_origin_tags(self):
        assert Plan("Do the thing.").origin == "model"
        assert Plan("Do it.", origin="human").origin == "human"
        with pytest.raises(ValueError):
            Plan("Do it.", origin="alien")

    def test_empty_plan_rejected(self):
        with pytest.raises(ValueError):
            Plan("")

    def test_sentence_count_checked_against_limits(self):
        report = validate_plan(Plan(_sentences(4)), LengthLimits(3, 5))
        assert report.ok
        report = validate_plan(Plan("One."), LengthLimits(3, 5))
        assert not report.ok


class TestSessionMeta:
    def test_writer_defaults_to_third_person(self, writer_meta):
        assert writer_meta.perspective == "third-person"

    def test_fiction_defaults_to_first_person(self, fiction_meta):
        assert fiction_meta.perspective == "first-person"

    def test_fiction_with_third_person_rejected(self):
        with pytest.raises(InvalidMetaError):
            SessionMeta(title="t", genre="g", background="b",
                        mode="fiction", perspective="third-person")

    def test_writer_with_first_person_rejected(self):
        with pytest.raises(InvalidMetaError):
            SessionMeta(title="t", genre="g", background="b",
                        mode="writer", perspective="first-person")

    def test_unknown_mode_rejected(self):
        with pytest.raises(InvalidMetaError):
            SessionMeta(title="t", genre="g", background="b", mode="poetry")


class TestSessionInvariants:
    def test_fresh_session_shape(self, fresh_session):
        state = fresh_session
        assert state.step == 0
        assert len(state.transcript) == 1
        assert len(state.long_term) == 1
        assert [c.timestep for c in state.transcript] == [0]
        state.validate_invariants()

    def test_k_steps_grow_all_counters_together(self, mock_engine, fresh_session):
        state = fresh_session
        for k in range(1, 4):
            plan = mock_engine.select_plan_auto(state)
            state, _ = mock_engine.step(state, plan)
            assert state.step == k
            assert len(state.transcript) == k + 1
            assert len(state.long_term) == k + 1
            assert [c.timestep for c in state.transcript] == list(range(k + 1))
