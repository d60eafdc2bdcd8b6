"""Memory-management policies: no pruning, LRU eviction, relevance pruning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .memory_store import _TIE_SLACK, MemorySlot, MemoryStore, cosine_similarity

POLICY_NAMES = ("none", "lru", "relevance")
DEFAULT_WINDOW = 8


@dataclass(frozen=True)
class PolicyKind:
    name: str = "relevance"
    window: int | None = None

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ContractViolation(f"unknown policy {self.name!r}; expected one of {POLICY_NAMES}")
        if self.name == "relevance":
            if self.window is None:
                object.__setattr__(self, "window", DEFAULT_WINDOW)
            if self.window < 1:
                raise ContractViolation("relevance window must be >= 1")

    @classmethod
    def parse(cls, name: str, window: int | None = None) -> "PolicyKind":
        return cls(name, window if name == "relevance" else None)

    def __str__(self) -> str:
        return f"relevance(T={self.window})" if self.name == "relevance" else self.name


NONE = PolicyKind("none")
LRU = PolicyKind("lru")


@dataclass(frozen=True)
class PruneDecision:
    victim_id: int
    reason: str
    score: float

    def to_dict(self) -> dict:
        return {"victim_id": self.victim_id, "reason": self.reason, "score": self.score}


def relevance_score(store: MemoryStore, slot: MemorySlot) -> float:
    """Max cosine between ``slot`` and the queries in the recent window; -1 if the window is empty."""
    return max(
        (cosine_similarity(q, slot.vector) for _, q in store.recent_queries),
        default=-1.0,
    )


def _approx_relevance(store: MemoryStore) -> np.ndarray:
    n = len(store)
    if not store.recent_queries:
        return np.full(n, -1.0)
    rows = np.stack([store._approx_scores(q) for _, q in store.recent_queries])
    return rows.max(axis=0)


def select_victim(store: MemoryStore, kind: PolicyKind, protected_id: int | None) -> PruneDecision | None:
    """Choose the slot to drop from an over-capacity store, never ``protected_id``."""
    if not store.over_capacity:
        raise ContractViolation(
            f"select_victim needs an over-capacity store ({len(store)} slots, capacity {store.capacity})"
        )
    if kind.name == "none":
        return None

    candidates = [s for s in store if s.id != protected_id]
    if not candidates:
        return None

    if kind.name == "lru":
        victim = min(candidates, key=lambda s: (s.last_access, s.id))
        return PruneDecision(victim.id, "lru", float(victim.last_access))

    approx = _approx_relevance(store)
    keep = [row for row, sid in enumerate(store._ids) if sid != protected_id]
    floor = float(approx[keep].min())
    near = [store._ids[row] for row in keep if approx[row] <= floor + _TIE_SLACK]
    scored = [(relevance_score(store, store.get(sid)), store.get(sid)) for sid in near]
    kappa, victim = min(scored, key=lambda ks: (ks[0], ks[1].last_access, ks[1].id))
    return PruneDecision(victim.id, "relevance", kappa)


def manage_memory(store: MemoryStore, kind: PolicyKind, protected_id: int | None) -> list[PruneDecision]:
    """Drop victims until the store is back within capacity; returns the decisions applied."""
    applied = []
    while store.over_capacity:
        decision = select_victim(store, kind, protected_id)
        if decision is None:
            break
        store.remove(decision.victim_id)
        applied.append(decision)
    return applied
