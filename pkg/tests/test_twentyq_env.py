from __future__ import annotations

import itertools
from collections import Counter

import pytest

from mnemos.errors import ContractViolation
from mnemos.session_engine import BaselineSession
from mnemos.twentyq_env import (
    Corpus,
    FullHistoryContext,
    GuesserView,
    OracleGuesser,
    RandomGuesser,
    Record,
    RollingWindowContext,
    ScriptedGuesser,
    SessionContext,
    SplitMix64,
    attribute_answerer,
    new_game,
    normalize_guess,
    parse_records,
    question_for,
    run_match,
    step,
    validate_corpus,
)


def binary_corpus():
    attrs = ["alive", "big", "blue", "loud"]
    records = []
    for i, bits in enumerate(itertools.product(["yes", "no"], repeat=4)):
        records.append({"text": f"thing{i}", "category": "c", "attributes": dict(zip(attrs, bits))})
    return Corpus.from_records(records)


def test_splitmix_reference_values():
    # published splitmix64 outputs for seed 0
    rng = SplitMix64(0)
    assert rng.next() == 0xE220A8397B1DCDAF
    assert rng.next() == 0x6E789E6AA1B965F4


def test_bundled_corpus_is_valid(corpus):
    assert len(corpus) == 100
    assert validate_corpus(corpus) == []
    assert len({k.category for k in corpus}) == 10


def test_validate_flags_problems():
    bad = Corpus.from_records([
        {"text": "a", "category": "x", "attributes": {"p": "yes"}},
        {"text": "A", "category": "x", "attributes": {"p": "yes", "q": "perhaps"}},
    ])
    problems = validate_corpus(bad)
    assert any("missing" in p for p in problems)
    assert any("invalid" in p for p in problems)
    assert any("duplicate" in p for p in problems)


def test_seeded_keyword_choice_is_stable_and_roughly_uniform(corpus):
    assert new_game(corpus, 7).keyword == new_game(corpus, 7).keyword
    counts = Counter(new_game(corpus, s).keyword.text for s in range(20000))
    assert len(counts) == 100
    assert max(counts.values()) < 300 and min(counts.values()) > 120


def test_step_and_outcomes(corpus):
    state = new_game(corpus, 3)
    attr = corpus.vocabulary[0]
    answer, state = step(state, question_for(attr))
    assert answer == state.keyword.attributes[attr]
    assert state.turn == 2
    assert step(state, "what colour is it?")[0] == "maybe"
    _, state = step(state, "q", guess="The " + state.keyword.text.upper())
    assert state.outcome == "success"
    with pytest.raises(ContractViolation):
        step(state, "again")


def test_failure_after_max_turns(corpus):
    state = new_game(corpus, 1, max_turns=3)
    for _ in range(3):
        step(state, "q", guess="definitely not a keyword")
    assert state.outcome == "failure"
    assert state.turn == 3 and len(state.history) == 3


def test_record_render_parse_round_trip():
    recs = [Record(1, "is it red?", "yes"), Record(2, "is it big?", "no", "whale", False)]
    text = "noise " + " ".join(r.render("g5") for r in recs) + Record(1, "x?", "no").render("g6")
    assert parse_records(text, "g5") == recs
    assert parse_records(text, "g6") == [Record(1, "x?", "no")]


def test_scripted_guesser_solves_binary_corpus_within_five_turns():
    corp = binary_corpus()
    for seed in range(64):
        out = run_match(corp, seed, ScriptedGuesser(corp))
        assert out.success and out.turns_used <= 5


def test_scripted_guesser_with_full_history_always_wins(corpus):
    results = [run_match(corpus, s, ScriptedGuesser(corpus)) for s in range(100)]
    assert all(o.success for o in results)
    assert max(o.turns_used for o in results) <= 20


def test_truncated_context_hurts(corpus):
    full = sum(run_match(corpus, s, ScriptedGuesser(corpus), context_provider=FullHistoryContext()).success
               for s in range(100))
    one = sum(run_match(corpus, s, ScriptedGuesser(corpus), context_provider=RollingWindowContext(1)).success
              for s in range(100))
    assert one < full


def test_guesser_is_a_function_of_context(corpus):
    g = ScriptedGuesser(corpus)
    view = GuesserView("g1", 3, Record(1, question_for(corpus.vocabulary[0]), "yes").render("g1"))
    assert g(view) == g(view)
    # records from another game are ignored
    other = GuesserView("g1", 3, Record(1, question_for(corpus.vocabulary[0]), "yes").render("g2"))
    assert g(other) == g(GuesserView("g1", 3, ""))


def test_contradictory_context_falls_back_to_a_guess(corpus):
    attr = corpus.vocabulary[0]
    ctx = " ".join([Record(1, question_for(attr), "yes").render("g0"),
                    Record(2, question_for(attr), "no").render("g0")])
    question, guess = ScriptedGuesser(corpus)(GuesserView("g0", 3, ctx))
    assert guess is not None


def test_random_guesser_rate_near_twenty_percent(corpus):
    wins = sum(run_match(corpus, s, RandomGuesser(corpus, seed=99)).success for s in range(500))
    assert 0.14 <= wins / 500 <= 0.26


def test_oracle_guesser_wins_first_turn(corpus):
    for seed in range(10):
        kw = new_game(corpus, seed).keyword.text
        out = run_match(corpus, seed, OracleGuesser(kw))
        assert out.success and out.turns_used == 1


def test_agent_exception_is_a_failure_with_diagnostic(corpus):
    def broken(view):
        raise RuntimeError("kaput")
    out = run_match(corpus, 0, broken)
    assert not out.success
    assert "kaput" in out.diagnostic


def test_session_context_with_lookback(corpus):
    session = BaselineSession(k=0)
    provider = SessionContext(session, lookback=1)
    run_match(corpus, 2, ScriptedGuesser(corpus), context_provider=provider)
    qs = session.transcript.queries
    assert qs[0].startswith("[g2#1]")
    assert qs[1].startswith("[g2#1]") and "\n[g2#2]" in qs[1]


def test_answerer_and_guess_normalisation(corpus):
    kw = corpus[0]
    attr = corpus.vocabulary[1]
    assert attribute_answerer(kw, "  IS IT " + attr.upper() + " ") == kw.attributes[attr]
    assert normalize_guess("An  Apple") == "apple"
