"""Bounded memory store with cosine retrieval and access bookkeeping."""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ._validation import check_positive_int, check_vector
from .errors import ContractViolation, SlotNotFound

# Scores from the vectorised pass within this distance of the best are
# re-scored pairwise so that ties resolve identically to a scalar scan.
_TIE_SLACK = 1e-9

_DUMP_SEPARATORS = (",", ":")


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``; exactly 0.0 if either is all-zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractViolation(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    sim = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, sim))


@dataclass
class MemorySlot:
    id: int
    vector: np.ndarray
    text: str
    created_at: int
    last_access: int


@dataclass(frozen=True)
class RetrievalResult:
    slot_id: int
    score: float
    rank: int = 1


def _floats_json(vector: np.ndarray) -> str:
    return json.dumps(vector.tolist(), separators=_DUMP_SEPARATORS)


class MemoryStore:
    """The memory set plus the ring buffer of recent query embeddings.

    Slots live in id order. A dense row buffer mirrors them so similarity
    scans are a single matrix-vector product; candidate ties coming out of
    that product are then settled with :func:`cosine_similarity` pairwise,
    so results never depend on BLAS blocking.

    Not thread-safe: one writer at a time.
    """

    def __init__(self, dimension: int = 256, capacity: int = 64, window: int = 8, clock: int = 1):
        self.dimension = check_positive_int(dimension, "dimension", minimum=2)
        self.capacity = check_positive_int(capacity, "capacity")
        self.window = check_positive_int(window, "window")
        self.clock = int(clock)
        self.recent_queries: deque[tuple[int, np.ndarray]] = deque(maxlen=self.window)
        self._slots: dict[int, MemorySlot] = {}
        self._next_id = 0
        self._ids: list[int] = []
        self._buf = np.zeros((16, self.dimension))
        self._norms = np.zeros(16)
        # serialized-size bookkeeping, see nbytes
        self._vec_json: dict[int, str] = {}
        self._slot_static_len: dict[int, int] = {}
        self._slots_len = 0
        self._query_lens: deque[int] = deque()
        self._queries_len = 0

    # -- container protocol -------------------------------------------------

    def __len__(self) -> int:
        return len(self._ids)

    def __iter__(self) -> Iterator[MemorySlot]:
        return (self._slots[i] for i in self._ids)

    def __contains__(self, slot_id) -> bool:
        return slot_id in self._slots

    @property
    def slots(self) -> list[MemorySlot]:
        return [self._slots[i] for i in self._ids]

    def get(self, slot_id: int) -> MemorySlot:
        try:
            return self._slots[slot_id]
        except KeyError:
            raise SlotNotFound(slot_id) from None

    @property
    def over_capacity(self) -> bool:
        return len(self) > self.capacity

    # -- mutation -------------------------------------------------------------

    def tick(self) -> int:
        """Advance the logical clock by one turn."""
        self.clock += 1
        return self.clock

    def insert(self, text: str, vector) -> int:
        vec = check_vector(vector, self.dimension).copy()
        slot_id = self._next_id
        self._next_id += 1
        slot = MemorySlot(slot_id, vec, text, self.clock, self.clock)
        self._slots[slot_id] = slot
        n = len(self._ids)
        if n == self._buf.shape[0]:
            self._buf = np.concatenate([self._buf, np.zeros_like(self._buf)])
            self._norms = np.concatenate([self._norms, np.zeros_like(self._norms)])
        self._buf[n] = vec
        self._norms[n] = math.sqrt(float(np.dot(vec, vec)))
        self._ids.append(slot_id)

        self._vec_json[slot_id] = _floats_json(vec)
        frag_len = len(self._slot_fragment(slot))
        self._slot_static_len[slot_id] = frag_len - len(str(slot.last_access))
        self._slots_len += frag_len
        return slot_id

    def remove(self, slot_id: int) -> MemorySlot:
        slot = self.get(slot_id)
        row = self._ids.index(slot_id)
        n = len(self._ids)
        self._buf[row : n - 1] = self._buf[row + 1 : n]
        self._norms[row : n - 1] = self._norms[row + 1 : n]
        del self._ids[row]
        del self._slots[slot_id]
        del self._vec_json[slot_id]
        self._slots_len -= self._slot_static_len.pop(slot_id) + len(str(slot.last_access))
        return slot

    def touch(self, slot_id: int) -> None:
        slot = self.get(slot_id)
        if self.clock > slot.last_access:
            self._slots_len += len(str(self.clock)) - len(str(slot.last_access))
            slot.last_access = self.clock

    def record_query(self, vector) -> None:
        """Push a query embedding into the recent-query window at the current turn.

        A second query in the same turn replaces the first, so turns in the
        window stay strictly increasing.
        """
        vec = check_vector(vector, self.dimension).copy()
        if self.recent_queries and self.recent_queries[-1][0] == self.clock:
            self.recent_queries.pop()
            self._queries_len -= self._query_lens.pop()
        elif len(self.recent_queries) == self.window:
            self._queries_len -= self._query_lens.popleft()
        self.recent_queries.append((self.clock, vec))
        frag_len = len(self._query_fragment(self.clock, vec))
        self._query_lens.append(frag_len)
        self._queries_len += frag_len

    # -- retrieval --------------------------------------------------------------

    def _approx_scores(self, query: np.ndarray) -> np.ndarray:
        n = len(self._ids)
        qn = math.sqrt(float(np.dot(query, query)))
        if qn == 0.0:
            return np.zeros(n)
        norms = self._norms[:n]
        dots = self._buf[:n] @ query
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = np.where(norms > 0.0, dots / (norms * qn), 0.0)
        return scores

    def scores(self, query) -> dict[int, float]:
        """Exact cosine score for every slot, keyed by slot id (read-only)."""
        q = check_vector(query, self.dimension, name="query")
        return {sid: cosine_similarity(q, self._slots[sid].vector) for sid in self._ids}

    def best_match(self, query) -> RetrievalResult | None:
        """Argmax of cosine similarity, smallest id on ties. No side effects."""
        q = check_vector(query, self.dimension, name="query")
        if not self._ids:
            return None
        approx = self._approx_scores(q)
        top = float(approx.max())
        best_id, best_score = None, -math.inf
        for row in np.flatnonzero(approx >= top - _TIE_SLACK):
            sid = self._ids[row]
            score = cosine_similarity(q, self._slots[sid].vector)
            if score > best_score:  # rows are id-ascending, so ">" keeps the smallest id
                best_id, best_score = sid, score
        return RetrievalResult(best_id, best_score, 1)

    def retrieve(self, query) -> RetrievalResult | None:
        """Best-matching slot for ``query``; marks it accessed and records the query."""
        q = check_vector(query, self.dimension, name="query")
        result = self.best_match(q)
        if result is not None:
            self.touch(result.slot_id)
        self.record_query(q)
        return result

    def retrieve_top_k(self, query, k: int) -> list[RetrievalResult]:
        """Read-only probe: ``min(k, len(store))`` results, score descending then id ascending."""
        k = check_positive_int(k, "k")
        ranked = sorted(self.scores(query).items(), key=lambda kv: (-kv[1], kv[0]))
        return [RetrievalResult(sid, score, rank) for rank, (sid, score) in enumerate(ranked[:k], 1)]

    # -- snapshot -----------------------------------------------------------------

    def _slot_fragment(self, slot: MemorySlot) -> str:
        return (
            f'{{"id":{slot.id},"text":{json.dumps(slot.text)},'
            f'"created_at":{slot.created_at},"last_access":{slot.last_access},'
            f'"vector":{self._vec_json[slot.id]}}}'
        )

    @staticmethod
    def _query_fragment(turn: int, vector: np.ndarray) -> str:
        return f'{{"turn":{turn},"vector":{_floats_json(vector)}}}'

    def _header(self) -> str:
        return (
            f'{{"dimension":{self.dimension},"capacity":{self.capacity},'
            f'"window":{self.window},"clock":{self.clock},"slots":['
        )

    _MIDDLE = '],"recent_queries":['
    _TAIL = "]}"

    @property
    def nbytes(self) -> int:
        """Length in bytes of :meth:`dumps`, maintained incrementally."""
        n, nq = len(self._ids), len(self.recent_queries)
        return (
            len(self._header())
            + self._slots_len
            + max(n - 1, 0)
            + len(self._MIDDLE)
            + self._queries_len
            + max(nq - 1, 0)
            + len(self._TAIL)
        )

    def dumps(self) -> str:
        """Compact JSON snapshot; floats use shortest round-trip repr."""
        slots = ",".join(self._slot_fragment(s) for s in self)
        queries = ",".join(self._query_fragment(t, v) for t, v in self.recent_queries)
        return self._header() + slots + self._MIDDLE + queries + self._TAIL

    def to_dict(self) -> dict:
        return json.loads(self.dumps())

    @classmethod
    def from_dict(cls, data: dict) -> "MemoryStore":
        store = cls(data["dimension"], data["capacity"], data["window"], clock=0)
        for entry in data["slots"]:
            store._next_id = entry["id"]
            store.clock = entry["created_at"]
            sid = store.insert(entry["text"], entry["vector"])
            store.clock = entry["last_access"]
            store.touch(sid)
        for entry in data["recent_queries"]:
            store.clock = entry["turn"]
            store.record_query(entry["vector"])
        store.clock = data["clock"]
        # ids of slots evicted after the newest survivor are not recorded in
        # the snapshot; continuing after the largest live id keeps ids unique.
        store._next_id = max(store._slots, default=-1) + 1
        return store

    @classmethod
    def loads(cls, text: str) -> "MemoryStore":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return (
            f"MemoryStore(dimension={self.dimension}, capacity={self.capacity}, "
            f"window={self.window}, clock={self.clock}, slots={len(self)})"
        )
