"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""
from __future__ import annotations

import numpy as np

from .errors import ContractViolation


def check_vector(vector, dimension: int | None = None, *, name: str = "vector") -> np.ndarray:
    """Return ``vector`` as a finite 1-D float64 array, optionally of length ``dimension``."""
    arr = np.asarray(vector, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractViolation(f"{name} must be 1-D, got shape {arr.shape}")
    if dimension is not None and arr.shape[0] != dimension:
        raise ContractViolation(
            f"{name} has dimension {arr.shape[0]}, expected {dimension}"
        )
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} contains NaN or Inf")
    return arr


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ContractViolation(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ContractViolation(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_texts(texts) -> list[str]:
    """Accept a single string or an iterable of strings; always return a list."""
    if isinstance(texts, str):
        return [texts]
    out = list(texts)
    for t in out:
        if not isinstance(t, str):
            raise ContractViolation(f"expected str, got {type(t).__name__}")
    return out
