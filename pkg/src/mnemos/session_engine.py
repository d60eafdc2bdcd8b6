"""Per-turn loop: embed the query, retrieve one memory, respond, store, prune."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
import uuid
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping

import httpx

from .embedding import SEP, Embedder, EmbedderConfig, make_embedder
from .errors import BackendError, ContractViolation
from .memory_store import MemoryStore
from .policy import DEFAULT_WINDOW, PolicyKind, PruneDecision, manage_memory

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATE = "You previously said: {memory}\nUser: {query}\nAssistant:"
RESPONDER_BACKENDS = ("scripted", "echo", "external-chat")


@dataclass(frozen=True)
class ResponderConfig:
    backend: str = "echo"
    prompt_template: str = DEFAULT_TEMPLATE
    max_chars: int = 4096
    script: Mapping[str, str] = field(default_factory=dict)
    default: str | None = None
    url: str | None = None
    token: str | None = None
    model: str = "default"
    timeout: float = 60.0
    retries: int = 0

    def __post_init__(self):
        if self.backend not in RESPONDER_BACKENDS:
            raise ContractViolation(f"unknown responder backend {self.backend!r}")
        if "{query}" not in self.prompt_template or "{memory}" not in self.prompt_template:
            raise ContractViolation("prompt_template must contain {query} and {memory}")
        if self.max_chars < 1:
            raise ContractViolation("max_chars must be positive")
        if self.retries < 0:
            raise ContractViolation("retries must be >= 0")

    def with_env(self, environ=None) -> "ResponderConfig":
        """Apply ``MNEMOS_CHAT_URL`` / ``MNEMOS_CHAT_TOKEN`` overrides."""
        env = os.environ if environ is None else environ
        changes = {}
        if env.get("MNEMOS_CHAT_URL"):
            changes["url"] = env["MNEMOS_CHAT_URL"]
        if env.get("MNEMOS_CHAT_TOKEN"):
            changes["token"] = env["MNEMOS_CHAT_TOKEN"]
        return replace(self, **changes) if changes else self


def echo_response(query: str, memory_text: str | None, max_chars: int) -> str:
    """``ctx:<memory>|q:<query>``, trimmed to ``max_chars``.

    When too long, the oldest (leading) part of the memory text is dropped
    first; the query is cut only if it alone overflows the limit.
    """
    memory = memory_text or ""
    head, mid = "ctx:", "|q:"
    room = max_chars - len(head) - len(mid) - len(query)
    if room < 0:
        return (head + mid + query)[:max_chars]
    if len(memory) > room:
        memory = memory[len(memory) - room :]
    return head + memory + mid + query


class EchoResponder:
    def __init__(self, config: ResponderConfig):
        self.config = config

    def __call__(self, query: str, memory_text: str | None) -> str:
        return echo_response(query, memory_text, self.config.max_chars)


class ScriptedResponder:
    def __init__(self, config: ResponderConfig):
        self.config = config

    def __call__(self, query: str, memory_text: str | None) -> str:
        if query in self.config.script:
            out = self.config.script[query]
        elif self.config.default is not None:
            out = self.config.default
        else:
            raise BackendError(f"no scripted response for {query!r} and no default configured")
        return out[: self.config.max_chars]


class ChatResponder:
    """Chat-completions client: ``{"model", "messages"} -> {"choices": [{"message": {"content"}}]}``."""

    def __init__(self, config: ResponderConfig, transport: httpx.BaseTransport | None = None):
        if not config.url:
            raise ContractViolation("external-chat responder requires a url (MNEMOS_CHAT_URL)")
        self.config = config
        headers = {"Authorization": f"Bearer {config.token}"} if config.token else {}
        self._client = httpx.Client(headers=headers, timeout=config.timeout, transport=transport)

    def build_prompt(self, query: str, memory_text: str | None) -> str:
        return self.config.prompt_template.format(query=query, memory=memory_text or "")

    def __call__(self, query: str, memory_text: str | None) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": self.build_prompt(query, memory_text)}],
        }
        last_exc = None
        for attempt in range(self.config.retries + 1):
            try:
                resp = self._client.post(self.config.url, json=payload)
                resp.raise_for_status()
                body = resp.json()
                content = body["choices"][0]["message"]["content"]
            except (httpx.HTTPError, ValueError, KeyError, IndexError, TypeError) as exc:
                last_exc = exc
                logger.warning("chat request failed (attempt %d): %s", attempt + 1, exc)
                continue
            return str(content)[: self.config.max_chars]
        raise BackendError(f"chat backend failed: {last_exc}", cause=last_exc) from last_exc

    def close(self):
        self._client.close()


Responder = Callable[[str, "str | None"], str]


def make_responder(config: ResponderConfig, transport: httpx.BaseTransport | None = None) -> Responder:
    if config.backend == "echo":
        return EchoResponder(config)
    if config.backend == "scripted":
        return ScriptedResponder(config)
    return ChatResponder(config, transport=transport)


def respond(query: str, memory_text: str | None, config: ResponderConfig) -> str:
    return make_responder(config)(query, memory_text)


@dataclass
class Turn:
    index: int
    query: str
    response: str
    retrieved: dict | None = None  # {"slot_id", "score", "text"}
    inserted_slot: int | None = None
    pruned: PruneDecision | None = None
    latency_ms: float = 0.0
    store_bytes: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pruned"] = self.pruned.to_dict() if self.pruned else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Turn":
        d = dict(d)
        if d.get("pruned"):
            d["pruned"] = PruneDecision(**d["pruned"])
        return cls(**d)


@dataclass
class Transcript:
    session_id: str
    fingerprint: str
    turns: list[Turn] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.turns)

    @property
    def queries(self) -> list[str]:
        return [t.query for t in self.turns]

    @property
    def responses(self) -> list[str]:
        return [t.response for t in self.turns]

    def write_jsonl(self, path) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            for turn in self.turns:
                fh.write(json.dumps(turn.to_dict(), separators=(",", ":")) + "\n")
        return path

    @classmethod
    def read_jsonl(cls, path, session_id: str | None = None, fingerprint: str = "") -> "Transcript":
        path = Path(path)
        turns = []
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    turns.append(Turn.from_dict(json.loads(line)))
        return cls(session_id or path.stem, fingerprint, turns)


def fingerprint(obj) -> str:
    """Content hash of a JSON-able config; independent of key order."""
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class SessionConfig:
    capacity: int = 64
    policy: PolicyKind = field(default_factory=PolicyKind)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    responder: ResponderConfig = field(default_factory=ResponderConfig)
    window: int = DEFAULT_WINDOW

    @property
    def query_window(self) -> int:
        return self.policy.window if self.policy.name == "relevance" else self.window

    def to_dict(self) -> dict:
        d = asdict(self)
        d["responder"]["token"] = None
        d["embedder"]["token"] = None
        d["responder"]["script"] = dict(self.responder.script)
        return d

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


class Session:
    """One memory-augmented conversation. Strictly sequential."""

    def __init__(
        self,
        config: SessionConfig | None = None,
        *,
        embedder: Embedder | None = None,
        responder: Responder | None = None,
        store: MemoryStore | None = None,
        session_id: str | None = None,
    ):
        self.config = config or SessionConfig()
        self.embedder = embedder or make_embedder(self.config.embedder)
        self.responder = responder or make_responder(self.config.responder)
        self.store = store or MemoryStore(
            self.config.embedder.dimension, self.config.capacity, self.config.query_window
        )
        self.transcript = Transcript(session_id or uuid.uuid4().hex[:12], self.config.fingerprint())

    def run_turn(self, query: str) -> Turn:
        start = time.perf_counter()
        store = self.store
        q = self.embedder.embed(query)
        match = store.best_match(q)
        memory_text = store.get(match.slot_id).text if match else None

        # Nothing is written to the store before the responder succeeds.
        response = self.responder(query, memory_text)

        if match is not None:
            store.touch(match.slot_id)
        store.record_query(q)
        m_new = self.embedder.embed_interaction(query, response)
        new_id = store.insert(_interaction_text(query, response), m_new)
        decisions = manage_memory(store, self.config.policy, protected_id=new_id)
        store.tick()
        latency_ms = (time.perf_counter() - start) * 1000.0

        turn = Turn(
            index=len(self.transcript.turns) + 1,
            query=query,
            response=response,
            retrieved=(
                {"slot_id": match.slot_id, "score": match.score, "text": memory_text}
                if match
                else None
            ),
            inserted_slot=new_id,
            pruned=decisions[0] if decisions else None,
            latency_ms=latency_ms,
            store_bytes=store.nbytes,
        )
        self.transcript.turns.append(turn)
        return turn


def _interaction_text(query: str, response: str) -> str:
    return query + SEP + response


class BaselineSession:
    """Memoryless comparison arm.

    The responder sees at most the last ``k`` raw user queries (``k = 0`` is
    fully stateless). Only queries enter the window: feeding responses back
    would let an echo-style responder rebuild long-term memory by chaining.
    """

    def __init__(self, k: int = 1, responder_config: ResponderConfig | None = None,
                 responder: Responder | None = None, session_id: str | None = None):
        if k < 0:
            raise ContractViolation("rolling window k must be >= 0")
        self.k = k
        self.responder_config = responder_config or ResponderConfig()
        self.responder = responder or make_responder(self.responder_config)
        self._window: deque[str] = deque(maxlen=k) if k else deque(maxlen=0)
        responder_dict = asdict(self.responder_config)
        responder_dict.update(token=None, script=dict(self.responder_config.script))
        fp = fingerprint({"baseline": k, "responder": responder_dict})
        self.transcript = Transcript(session_id or uuid.uuid4().hex[:12], fp)

    @property
    def label(self) -> str:
        return f"baseline-rolling-{self.k}" if self.k else "baseline-stateless"

    def run_turn(self, query: str) -> Turn:
        start = time.perf_counter()
        memory_text = "\n".join(self._window) if self._window else None
        response = self.responder(query, memory_text)
        if self.k:
            self._window.append(query)
        latency_ms = (time.perf_counter() - start) * 1000.0
        turn = Turn(
            index=len(self.transcript.turns) + 1,
            query=query,
            response=response,
            latency_ms=latency_ms,
            store_bytes=len(json.dumps(list(self._window), separators=(",", ":"))),
        )
        self.transcript.turns.append(turn)
        return turn


def run_session(queries: Iterable[str], config: SessionConfig | None = None, **session_kwargs) -> Transcript:
    """Run every query through a fresh :class:`Session`.

    On failure the exception propagates with the turns completed so far
    attached as ``exc.transcript``.
    """
    queries = list(queries)
    if not queries:
        raise ContractViolation("run_session needs at least one query")
    session = Session(config, **session_kwargs)
    for query in queries:
        try:
            session.run_turn(query)
        except Exception as exc:
            exc.transcript = session.transcript
            raise
    return session.transcript
