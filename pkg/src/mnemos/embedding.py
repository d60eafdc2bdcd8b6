"""Text embedders.

The reference embedder is a signed feature-hashing bag of tokens: every
lowercased alphanumeric token is hashed to one of ``dimension`` buckets with a
+1/-1 sign, counts are accumulated and the result is L2-normalised.  It is
deterministic across processes and platforms, order-invariant, and makes
cosine similarity track token overlap, which is all the rest of the engine
needs for reproducible tests.

An HTTP adapter for the common ``{"input": [...], "model": ...}`` embeddings
wire shape is provided for real deployments.
"""
from __future__ import annotations

import hashlib
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Protocol

import httpx
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_positive_int, check_texts, check_vector
from .errors import BackendError, ContractViolation

HASH_SEED = 0x9E3779B97F4A7C15
_HASH_KEY = HASH_SEED.to_bytes(8, "little")

# Unit Separator: marks the query/response boundary and is never a token.
SEP = "\u001f"

DEFAULT_DIMENSION = 256

# Letters and digits only; "_" and control characters (including SEP) split tokens.
_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@lru_cache(maxsize=65536)
def _token_feature(token: str, dimension: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=_HASH_KEY).digest()
    h = int.from_bytes(digest, "little")
    # Bucket from the low bits, sign from the top bit so the two stay independent.
    return h % dimension, (-1.0 if h >> 63 else 1.0)


def is_zero_vector(vector) -> bool:
    """The empty-input flag: True when every component is exactly zero."""
    return not np.any(np.asarray(vector))


@dataclass(frozen=True)
class EmbedderConfig:
    dimension: int = DEFAULT_DIMENSION
    normalization: str = "l2"
    backend: str = "reference"
    # external backend only
    url: str | None = None
    token: str | None = None
    model: str = "default"
    timeout: float = 30.0

    def __post_init__(self):
        check_positive_int(self.dimension, "dimension", minimum=2)
        if self.normalization not in ("l2", "none"):
            raise ContractViolation(f"unknown normalization {self.normalization!r}")
        if self.backend not in ("reference", "external"):
            raise ContractViolation(f"unknown embedder backend {self.backend!r}")
        if self.backend == "reference" and self.normalization != "l2":
            raise ContractViolation("the reference embedder always L2-normalises")

    def with_env(self, environ=None) -> "EmbedderConfig":
        """Apply ``MNEMOS_EMBED_URL`` / ``MNEMOS_EMBED_TOKEN`` overrides."""
        env = os.environ if environ is None else environ
        changes = {}
        if env.get("MNEMOS_EMBED_URL"):
            changes["url"] = env["MNEMOS_EMBED_URL"]
        if env.get("MNEMOS_EMBED_TOKEN"):
            changes["token"] = env["MNEMOS_EMBED_TOKEN"]
        return replace(self, **changes) if changes else self


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_interaction(self, query: str, response: str) -> np.ndarray: ...


class HashingEmbedder(TransformerMixin, BaseEstimator):
    """Deterministic signed feature-hashing embedder.

    Stateless, so ``fit`` only validates parameters; it exists so the
    embedder drops into sklearn pipelines like ``HashingVectorizer`` does.

    Parameters
    ----------
    dimension : int, default=256
        Output length. Must be at least 2.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        self.dimension = dimension

    def fit(self, X=None, y=None):
        check_positive_int(self.dimension, "dimension", minimum=2)
        return self

    def transform(self, X) -> np.ndarray:
        texts = check_texts(X)
        out = np.zeros((len(texts), self.dimension))
        for row, text in enumerate(texts):
            out[row] = self.embed(text)
        return out

    def embed(self, text: str) -> np.ndarray:
        dimension = self.dimension
        vec = np.zeros(dimension)
        for token, count in Counter(tokenize(text)).items():
            index, sign = _token_feature(token, dimension)
            vec[index] += sign * count
        norm = math.sqrt(float(np.dot(vec, vec)))
        if norm > 0.0:
            vec /= norm
        return vec

    def embed_interaction(self, query: str, response: str) -> np.ndarray:
        return self.embed(query + SEP + response)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.input_tags.string = True
        tags.input_tags.two_d_array = False
        tags.requires_fit = False
        return tags


class HTTPEmbedder:
    """Client for an embeddings endpoint speaking ``{"input", "model"} -> {"data": [{"embedding"}]}``."""

    def __init__(self, config: EmbedderConfig, transport: httpx.BaseTransport | None = None):
        if not config.url:
            raise ContractViolation("external embedder requires a url (MNEMOS_EMBED_URL)")
        self.config = config
        self.dimension = config.dimension
        headers = {"Authorization": f"Bearer {config.token}"} if config.token else {}
        self._client = httpx.Client(headers=headers, timeout=config.timeout, transport=transport)

    def embed(self, text: str) -> np.ndarray:
        payload = {"input": [text], "model": self.config.model}
        try:
            resp = self._client.post(self.config.url, json=payload)
            resp.raise_for_status()
            body = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise BackendError(f"embedding request failed: {exc}", cause=exc) from exc
        try:
            raw = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ContractViolation(f"malformed embeddings payload: {body!r}") from exc
        vec = check_vector(raw, self.dimension, name="backend embedding").copy()
        if self.config.normalization == "l2":
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                vec /= norm
        return vec

    def embed_interaction(self, query: str, response: str) -> np.ndarray:
        return self.embed(query + SEP + response)

    def close(self):
        self._client.close()


def make_embedder(config: EmbedderConfig, transport: httpx.BaseTransport | None = None) -> Embedder:
    if config.backend == "reference":
        return HashingEmbedder(config.dimension)
    return HTTPEmbedder(config, transport=transport)


def embed(text: str, config: EmbedderConfig | None = None) -> np.ndarray:
    config = config or EmbedderConfig()
    embedder = make_embedder(config)
    try:
        return embedder.embed(text)
    finally:
        if isinstance(embedder, HTTPEmbedder):
            embedder.close()


def embed_interaction(query: str, response: str, config: EmbedderConfig | None = None) -> np.ndarray:
    return embed(query + SEP + response, config)
