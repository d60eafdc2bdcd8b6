"""20 Questions environment, agents and context providers.

A guesser only ever sees a context string. What ends up in that string is
decided by a context provider (full history, a rolling window, or a
memory-augmented session), so the quality of the provider shows up directly
as accuracy.
"""
from __future__ import annotations

import json
import re
import string
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

from .errors import ContractViolation

MAX_TURNS = 20
ANSWERS = ("yes", "no", "maybe")
_ARTICLES = {"a", "an", "the"}
_MASK64 = (1 << 64) - 1


class SplitMix64:
    """splitmix64 generator; identical output on every platform."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next() % n

    def choice(self, seq: Sequence):
        return seq[self.below(len(seq))]


# -- corpus -------------------------------------------------------------------


@dataclass(frozen=True)
class Keyword:
    text: str
    category: str
    attributes: Mapping[str, str]


@dataclass(frozen=True)
class Corpus:
    keywords: tuple[Keyword, ...]
    vocabulary: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.keywords)

    def __iter__(self):
        return iter(self.keywords)

    def __getitem__(self, i) -> Keyword:
        return self.keywords[i]

    @classmethod
    def from_records(cls, records: list[dict]) -> "Corpus":
        keywords = tuple(
            Keyword(r["text"], r["category"], dict(r["attributes"])) for r in records
        )
        vocab: dict[str, None] = {}
        for kw in keywords:
            vocab.update(dict.fromkeys(kw.attributes))
        return cls(keywords, tuple(vocab))

    def to_records(self) -> list[dict]:
        return [
            {"text": k.text, "category": k.category, "attributes": dict(k.attributes)}
            for k in self.keywords
        ]


def load_corpus(path=None) -> Corpus:
    """Load a corpus file; the bundled 100-keyword corpus when ``path`` is None."""
    if path is None:
        text = resources.files("mnemos").joinpath("data/keywords.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return Corpus.from_records(json.loads(text))


def validate_corpus(corpus: Corpus) -> list[str]:
    """Return a list of problems; empty means the corpus is usable."""
    problems = []
    if not len(corpus):
        problems.append("corpus is empty")
    seen_text: dict[str, str] = {}
    seen_sig: dict[tuple, str] = {}
    for kw in corpus:
        missing = set(corpus.vocabulary) - set(kw.attributes)
        if missing:
            problems.append(f"{kw.text}: missing attributes {sorted(missing)}")
        bad = {a: v for a, v in kw.attributes.items() if v not in ANSWERS}
        if bad:
            problems.append(f"{kw.text}: invalid values {bad}")
        norm = normalize_guess(kw.text)
        if norm in seen_text:
            problems.append(f"{kw.text}: duplicate of {seen_text[norm]}")
        seen_text[norm] = kw.text
        sig = tuple(kw.attributes.get(a) for a in corpus.vocabulary)
        if sig in seen_sig:
            problems.append(f"{kw.text}: attributes identical to {seen_sig[sig]}")
        seen_sig[sig] = kw.text
    return problems


# -- questions, answers, guesses --------------------------------------------

_PUNCT = str.maketrans({c: " " for c in string.punctuation if c != "-"})


def question_for(attribute: str) -> str:
    return f"is it {attribute}?"


def normalize_question(question: str) -> str:
    return " ".join(question.lower().translate(_PUNCT).split())


def resolve_attribute(question: str, vocabulary: Sequence[str]) -> str | None:
    """Map a question onto the attribute whose canonical question it matches."""
    norm = normalize_question(question)
    for attribute in vocabulary:
        if normalize_question(question_for(attribute)) == norm:
            return attribute
    return None


def normalize_guess(guess: str) -> str:
    words = guess.lower().strip().split()
    while words and words[0] in _ARTICLES:
        words = words[1:]
    return " ".join(words)


def attribute_answerer(keyword: Keyword, question: str) -> str:
    """Answer from the keyword's attribute table; ``maybe`` if the question is not recognised."""
    attribute = resolve_attribute(question, tuple(keyword.attributes))
    if attribute is None:
        return "maybe"
    return keyword.attributes[attribute]


# -- game state ---------------------------------------------------------------


@dataclass(frozen=True)
class Record:
    turn: int
    question: str
    answer: str
    guess: str | None = None
    correct: bool = False

    def render(self, game: str) -> str:
        text = f"[{game}#{self.turn}] Q: {self.question} A: {self.answer}"
        if self.guess is not None:
            text += f" G: {self.guess} ({'correct' if self.correct else 'wrong'})"
        return text + ";"


_RECORD_RE = re.compile(
    r"\[(?P<game>[^\]#\s]+)#(?P<turn>\d+)\] Q: (?P<q>[^;]*?) A: (?P<a>yes|no|maybe)"
    r"(?: G: (?P<g>[^;]*?) \((?P<ok>correct|wrong)\))?;"
)


def parse_records(context: str, game: str) -> list[Record]:
    """Records of ``game`` visible in ``context``, one per turn, in turn order."""
    found: dict[int, Record] = {}
    for m in _RECORD_RE.finditer(context or ""):
        if m["game"] != game:
            continue
        turn = int(m["turn"])
        found[turn] = Record(turn, m["q"], m["a"], m["g"], m["ok"] == "correct")
    return [found[t] for t in sorted(found)]


@dataclass
class GameState:
    keyword: Keyword
    game: str = "g0"
    turn: int = 1
    history: list[Record] = field(default_factory=list)
    outcome: str = "in-progress"
    max_turns: int = MAX_TURNS

    @property
    def finished(self) -> bool:
        return self.outcome != "in-progress"


def new_game(corpus: Corpus, seed: int, max_turns: int = MAX_TURNS) -> GameState:
    if not len(corpus):
        raise ContractViolation("cannot start a game with an empty corpus")
    keyword = corpus[SplitMix64(seed).below(len(corpus))]
    return GameState(keyword=keyword, game=f"g{seed}", max_turns=max_turns)


def step(state: GameState, question: str, guess: str | None = None,
         answerer: Callable[[Keyword, str], str] = attribute_answerer) -> tuple[str, GameState]:
    """Play one turn: answer ``question``, check ``guess``, advance the turn counter."""
    if state.finished:
        raise ContractViolation(f"game already finished ({state.outcome})")
    answer = answerer(state.keyword, question)
    if answer not in ANSWERS:
        raise ContractViolation(f"answerer returned {answer!r}")
    correct = guess is not None and normalize_guess(guess) == normalize_guess(state.keyword.text)
    state.history.append(Record(state.turn, question, answer, guess, correct))
    if correct:
        state.outcome = "success"
    elif state.turn >= state.max_turns:
        state.outcome = "failure"
    else:
        state.turn += 1
    return answer, state


# -- agents ---------------------------------------------------------------------


@dataclass(frozen=True)
class GuesserView:
    game: str
    turn: int
    context: str
    max_turns: int = MAX_TURNS


class Guesser(Protocol):
    def __call__(self, view: GuesserView) -> tuple[str, str | None]: ...


def candidates_for(corpus: Corpus, records: Sequence[Record]) -> list[Keyword]:
    """Keywords consistent with every visible answer and not already ruled out by a wrong guess."""
    constraints = []
    for r in records:
        attribute = resolve_attribute(r.question, corpus.vocabulary)
        if attribute is not None:
            constraints.append((attribute, r.answer))
    wrong = {normalize_guess(r.guess) for r in records if r.guess is not None and not r.correct}
    return [
        kw for kw in corpus
        if normalize_guess(kw.text) not in wrong
        and all(kw.attributes.get(a) == ans for a, ans in constraints)
    ]


class ScriptedGuesser:
    """Deterministic candidate-elimination guesser.

    Asks the question that minimises the expected number of surviving
    candidates and guesses once a single candidate is left, or on the last
    turn. Everything it knows comes from ``view.context``.
    """

    def __init__(self, corpus: Corpus):
        self.corpus = corpus

    def candidates(self, view: GuesserView) -> list[Keyword]:
        return candidates_for(self.corpus, parse_records(view.context, view.game))

    def _best_question(self, pool: Sequence[Keyword]) -> str | None:
        best, best_cost = None, None
        for attribute in self.corpus.vocabulary:
            groups: dict[str, int] = {}
            for kw in pool:
                value = kw.attributes.get(attribute, "maybe")
                groups[value] = groups.get(value, 0) + 1
            if len(groups) < 2:
                continue
            cost = sum(n * n for n in groups.values())
            if best_cost is None or cost < best_cost:
                best, best_cost = attribute, cost
        return best

    def _fallback(self, records: Sequence[Record]) -> list[Keyword]:
        """Keywords agreeing with the most visible answers (contradictory context)."""
        wrong = {normalize_guess(r.guess) for r in records if r.guess and not r.correct}
        pool = [kw for kw in self.corpus if normalize_guess(kw.text) not in wrong] or list(self.corpus)
        def agreement(kw):
            hits = 0
            for r in records:
                attribute = resolve_attribute(r.question, self.corpus.vocabulary)
                hits += attribute is not None and kw.attributes.get(attribute) == r.answer
            return hits
        top = max(agreement(kw) for kw in pool)
        return [kw for kw in pool if agreement(kw) == top]

    def __call__(self, view: GuesserView) -> tuple[str, str | None]:
        records = parse_records(view.context, view.game)
        pool = candidates_for(self.corpus, records)
        contradictory = not pool
        if contradictory:
            pool = self._fallback(records)
        attribute = self._best_question(pool)
        question = question_for(attribute if attribute else self.corpus.vocabulary[0])
        guess = None
        if contradictory or len(pool) == 1 or attribute is None or view.turn >= view.max_turns:
            guess = pool[0].text
        return question, guess


class RandomGuesser:
    """Random question, random never-repeated guess every turn."""

    def __init__(self, corpus: Corpus, seed: int = 0):
        self.corpus = corpus
        self.seed = seed
        self.reset("g0")

    def reset(self, game: str) -> None:
        self._rng = SplitMix64(hash_game(self.seed, game))
        self._remaining = [kw.text for kw in self.corpus]

    def __call__(self, view: GuesserView) -> tuple[str, str | None]:
        question = question_for(self._rng.choice(self.corpus.vocabulary))
        guess = self._remaining.pop(self._rng.below(len(self._remaining)))
        return question, guess


class OracleGuesser:
    """Knows the keyword; used to check the success path."""

    def __init__(self, keyword_text: str):
        self.keyword_text = keyword_text

    def __call__(self, view: GuesserView) -> tuple[str, str | None]:
        return "is it the answer?", self.keyword_text


def hash_game(seed: int, game: str) -> int:
    h = seed & _MASK64
    for ch in game.encode("utf-8"):
        h = SplitMix64(h ^ ch).next()
    return h


# -- context providers ------------------------------------------------------------


class ContextProvider(Protocol):
    def begin_game(self, game: str) -> None: ...

    def context(self) -> str: ...

    def observe(self, record_text: str) -> None: ...


class FullHistoryContext:
    """Upper bound: every record of the current game."""

    def begin_game(self, game: str) -> None:
        self._records: list[str] = []

    def context(self) -> str:
        return "\n".join(self._records)

    def observe(self, record_text: str) -> None:
        self._records.append(record_text)


class RollingWindowContext:
    """The last ``k`` records only (``k = 0`` sees nothing)."""

    def __init__(self, k: int = 1):
        self.k = k

    def begin_game(self, game: str) -> None:
        self._records: deque[str] = deque(maxlen=self.k)

    def context(self) -> str:
        return "\n".join(self._records)

    def observe(self, record_text: str) -> None:
        if self.k:
            self._records.append(record_text)


class SessionContext:
    """Routes every record through a session; the guesser reads the latest response.

    Each session query is the new record prefixed by the previous ``lookback``
    records of the same game, i.e. the short-term prompt a rolling-window
    baseline would see. The session (memory-augmented or baseline) persists
    across games, so a memory store keeps growing and pruning over a whole
    sequence of matches.
    """

    def __init__(self, session, lookback: int = 0):
        self.session = session
        self.lookback = lookback
        self._last = ""
        self._recent: deque[str] = deque(maxlen=lookback)

    def begin_game(self, game: str) -> None:
        self._last = ""
        self._recent.clear()

    def context(self) -> str:
        return self._last

    def observe(self, record_text: str) -> None:
        query = "\n".join([*self._recent, record_text])
        self._last = self.session.run_turn(query).response
        if self.lookback:
            self._recent.append(record_text)


# -- match ------------------------------------------------------------------------


@dataclass
class GameOutcome:
    seed: int
    keyword: str
    success: bool
    turns_used: int
    records: list[Record]
    diagnostic: str | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "keyword": self.keyword,
            "success": self.success,
            "turns_used": self.turns_used,
            "diagnostic": self.diagnostic,
            "records": [r.__dict__ for r in self.records],
        }


def run_match(corpus: Corpus, seed: int, guesser: Guesser,
              answerer: Callable[[Keyword, str], str] = attribute_answerer,
              context_provider: ContextProvider | None = None,
              max_turns: int = MAX_TURNS) -> GameOutcome:
    """Play one seeded game to completion.

    Any exception raised by an agent or the context provider ends the match
    as a failure, with the error text kept as the diagnostic.
    """
    state = new_game(corpus, seed, max_turns)
    provider = context_provider if context_provider is not None else FullHistoryContext()
    provider.begin_game(state.game)
    if hasattr(guesser, "reset"):
        guesser.reset(state.game)
    diagnostic = None
    while not state.finished:
        try:
            view = GuesserView(state.game, state.turn, provider.context(), max_turns)
            question, guess = guesser(view)
            step(state, question, guess, answerer)
            provider.observe(state.history[-1].render(state.game))
        except Exception as exc:  # agent failure ends the match
            diagnostic = f"{type(exc).__name__}: {exc}"
            state.outcome = "failure"
    return GameOutcome(
        seed=seed,
        keyword=state.keyword.text,
        success=state.outcome == "success",
        turns_used=len(state.history),
        records=list(state.history),
        diagnostic=diagnostic,
    )
