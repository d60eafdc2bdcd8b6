"""Memory-augmented context engine with LRU and relevance-based pruning."""

__version__ = "0.1.0"

from .embedding import EmbedderConfig, HashingEmbedder, embed, embed_interaction
from .errors import BackendError, ContractViolation, SlotNotFound
from .memory_store import MemorySlot, MemoryStore, RetrievalResult, cosine_similarity
from .metrics import MetricReport, accuracy, aggregate, ccs, ptr
from .policy import PolicyKind, PruneDecision, manage_memory, relevance_score, select_victim
from .session_engine import (
    BaselineSession,
    ResponderConfig,
    Session,
    SessionConfig,
    Transcript,
    Turn,
    respond,
    run_session,
)

__all__ = [
    "BackendError",
    "BaselineSession",
    "ContractViolation",
    "EmbedderConfig",
    "HashingEmbedder",
    "MemorySlot",
    "MemoryStore",
    "MetricReport",
    "PolicyKind",
    "PruneDecision",
    "ResponderConfig",
    "RetrievalResult",
    "Session",
    "SessionConfig",
    "SlotNotFound",
    "Transcript",
    "Turn",
    "accuracy",
    "aggregate",
    "ccs",
    "cosine_similarity",
    "embed",
    "embed_interaction",
    "manage_memory",
    "ptr",
    "relevance_score",
    "respond",
    "run_session",
    "select_victim",
]
