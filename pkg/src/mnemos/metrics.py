"""Evaluation metrics: coherence (CCS), transfer ratio (PTR), accuracy, resource aggregates."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .embedding import Embedder, HashingEmbedder
from .errors import ContractViolation
from .memory_store import cosine_similarity
from .session_engine import Transcript


def _default_embedder() -> Embedder:
    return HashingEmbedder()


def _normalized(v: np.ndarray) -> np.ndarray:
    norm = math.sqrt(float(np.dot(v, v)))
    return v / norm if norm > 0.0 else v


def context_vectors(interactions: Sequence[Sequence[np.ndarray]], window: int | None = None) -> list[np.ndarray]:
    """Aggregated context before each turn.

    ``interactions[i]`` holds the interaction embedding(s) contributed by turn
    ``i``. The context for turn ``i`` is the L2-normalised mean of everything
    contributed by the previous ``window`` turns (all previous turns when
    ``window`` is None); turn 0 gets the zero vector.
    """
    if not interactions:
        return []
    per_turn = np.array([np.sum(turn, axis=0) for turn in interactions])
    counts = np.array([len(turn) for turn in interactions])
    prefix = np.vstack([np.zeros(per_turn.shape[1]), np.cumsum(per_turn, axis=0)])
    prefix_n = np.concatenate([[0], np.cumsum(counts)])
    out = []
    for i in range(len(interactions)):
        lo = 0 if window is None else max(0, i - window)
        n = prefix_n[i] - prefix_n[lo]
        if n:
            out.append(_normalized((prefix[i] - prefix[lo]) / n))
        else:
            out.append(np.zeros(per_turn.shape[1]))
    return out


def coherence_scores(transcript: Transcript, embedder: Embedder | None = None,
                     window: int | None = None) -> list[float]:
    """Per-turn cosine between the response embedding and the prior-turn context."""
    embedder = embedder or _default_embedder()
    inter = [[embedder.embed_interaction(t.query, t.response)] for t in transcript.turns]
    contexts = context_vectors(inter, window)
    return [
        cosine_similarity(embedder.embed(t.response), c)
        for t, c in zip(transcript.turns, contexts)
    ]


def ccs(transcript: Transcript, embedder: Embedder | None = None, window: int | None = None) -> float:
    """Contextual coherence score: mean of :func:`coherence_scores`."""
    if not transcript.turns:
        raise ContractViolation("ccs needs a non-empty transcript")
    return float(np.mean(coherence_scores(transcript, embedder, window)))


def ptr_wins(mem: Transcript, base: Transcript, embedder: Embedder | None = None,
             window: int | None = None) -> list[bool]:
    """Per-turn indicator that the first transcript's response is strictly closer to the shared context.

    Both systems are scored against one context per turn, built from the
    shared queries and *both* systems' earlier responses, so swapping the
    arguments swaps the referee's inputs symmetrically.
    """
    if len(mem.turns) != len(base.turns):
        raise ContractViolation(f"turn counts differ: {len(mem.turns)} vs {len(base.turns)}")
    for i, (a, b) in enumerate(zip(mem.turns, base.turns)):
        if a.query != b.query:
            raise ContractViolation(f"query sequences diverge at turn {i + 1}")
    embedder = embedder or _default_embedder()
    inter = [
        [embedder.embed_interaction(a.query, a.response), embedder.embed_interaction(b.query, b.response)]
        for a, b in zip(mem.turns, base.turns)
    ]
    contexts = context_vectors(inter, window)
    wins = []
    for a, b, c in zip(mem.turns, base.turns, contexts):
        wins.append(cosine_similarity(embedder.embed(a.response), c)
                    > cosine_similarity(embedder.embed(b.response), c))
    return wins


def ptr(mem: Transcript, base: Transcript, embedder: Embedder | None = None,
        window: int | None = None) -> float:
    """Positive transferability ratio, in percent."""
    wins = ptr_wins(mem, base, embedder, window)
    if not wins:
        return 0.0
    return 100.0 * sum(wins) / len(wins)


def accuracy(outcomes) -> float:
    """Percentage of successful games. Accepts GameOutcome objects or booleans."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ContractViolation("accuracy needs at least one outcome")
    wins = sum(bool(getattr(o, "success", o)) for o in outcomes)
    return 100.0 * wins / len(outcomes)


@dataclass(frozen=True)
class MetricReport:
    ccs: float
    ptr_percent: float
    accuracy_percent: float | None
    mean_latency_ms: float
    peak_store_bytes: int
    turn_count: int
    interaction_count: int

    def __post_init__(self):
        if not -1.0 <= self.ccs <= 1.0:
            raise ContractViolation(f"ccs out of range: {self.ccs}")
        if not 0.0 <= self.ptr_percent <= 100.0:
            raise ContractViolation(f"ptr out of range: {self.ptr_percent}")
        if self.accuracy_percent is not None and not 0.0 <= self.accuracy_percent <= 100.0:
            raise ContractViolation(f"accuracy out of range: {self.accuracy_percent}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def aggregate(transcripts: Sequence[Transcript], outcomes=None,
              baselines: Sequence[Transcript] | None = None,
              embedder: Embedder | None = None, window: int | None = None) -> MetricReport:
    """Pool per-turn quantities over ``transcripts`` into one report.

    ``baselines``, when given, pairs element-wise with ``transcripts`` for PTR.
    """
    transcripts = list(transcripts)
    if not transcripts:
        raise ContractViolation("aggregate needs at least one transcript")
    prints = {t.fingerprint for t in transcripts}
    if len(prints) > 1:
        raise ContractViolation(f"transcripts come from different configurations: {sorted(prints)}")
    embedder = embedder or _default_embedder()

    sims: list[float] = []
    for t in transcripts:
        sims.extend(coherence_scores(t, embedder, window))
    turns = [turn for t in transcripts for turn in t.turns]

    wins: list[bool] = []
    if baselines is not None:
        if len(baselines) != len(transcripts):
            raise ContractViolation("baselines must pair one-to-one with transcripts")
        for mem, base in zip(transcripts, baselines):
            wins.extend(ptr_wins(mem, base, embedder, window))

    return MetricReport(
        ccs=float(np.mean(sims)) if sims else 0.0,
        ptr_percent=100.0 * sum(wins) / len(wins) if wins else 0.0,
        accuracy_percent=accuracy(outcomes) if outcomes else None,
        mean_latency_ms=float(np.mean([t.latency_ms for t in turns])) if turns else 0.0,
        peak_store_bytes=max((t.store_bytes for t in turns), default=0),
        turn_count=len(turns),
        interaction_count=len(wins),
    )


TABLE_COLUMNS = ("Model/Arm", "Accuracy (%)", "CCS", "PTR (%)", "Peak Store (bytes)", "Mean Latency (ms)")


def format_table(rows: Sequence[tuple[str, MetricReport]]) -> str:
    """Fixed-column plain-text comparison table."""
    body = []
    for label, r in rows:
        acc = "-" if r.accuracy_percent is None else f"{r.accuracy_percent:.1f}"
        body.append((label, acc, f"{r.ccs:.3f}", f"{r.ptr_percent:.1f}",
                     str(r.peak_store_bytes), f"{r.mean_latency_ms:.2f}"))
    widths = [max(len(c), *(len(row[i]) for row in body)) if body else len(c)
              for i, c in enumerate(TABLE_COLUMNS)]
    def line(cells):
        return " | ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(TABLE_COLUMNS), sep, *(line(r) for r in body)]) + "\n"
