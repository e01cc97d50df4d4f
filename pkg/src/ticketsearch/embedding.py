"""Deterministic feature-hashing text embedder.

Stands in for a 384-dimensional multilingual sentence encoder behind the
same interface, so every downstream numeric behavior is reproducible and
oracle-checkable. A remote model-server adapter implementing `embed` /
`embed_batch` with the same dimension is the intended production
extension point.
"""

from __future__ import annotations

import hashlib
import re
from functools import lru_cache

import numpy as np

DIMENSION = 384
DEFAULT_SEED = 13

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric; shared by every text consumer."""
    return _TOKEN_RE.findall(text.lower())


@lru_cache(maxsize=200_000)
def _token_hash(token: str, seed: int) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=seed.to_bytes(8, "big")
    ).digest()
    return int.from_bytes(digest, "big")


@lru_cache(maxsize=100_000)
def _embed_cached(text: str, seed: int) -> np.ndarray:
    acc = np.zeros(DIMENSION, dtype=np.float64)
    for token in tokenize(text):
        h = _token_hash(token, seed)
        sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
        acc[h % DIMENSION] += sign
    norm = np.linalg.norm(acc)
    if norm > 0:
        acc /= norm
    vec = acc.astype(np.float32)
    vec.flags.writeable = False
    return vec


class HashingEmbedder:
    """Bag-of-hashed-tokens embedder: unit-norm vectors, zero vector for empty text."""

    dimension = DIMENSION

    def __init__(self, seed: int = DEFAULT_SEED):
        self.seed = seed

    @property
    def identity(self) -> str:
        """Persisted in index artifacts so index/embedder compatibility is checkable."""
        return f"hashing-embedder:seed={self.seed}:dim={DIMENSION}"

    def embed(self, text: str) -> np.ndarray:
        return _embed_cached(text, self.seed)

    def embed_batch(self, texts) -> np.ndarray:
        if not texts:
            return np.zeros((0, DIMENSION), dtype=np.float32)
        return np.stack([self.embed(t) for t in texts])
