"""Hashed bag-of-words text features for the toy reference backends.

Token hashing uses blake2b so bucket assignment is stable across processes
and platforms (Python's builtin hash() is salted per process).
"""

from __future__ import annotations

import hashlib
import re
from typing import Sequence

import numpy as np

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str, max_tokens: int | None = None) -> list[str]:
    """Lowercase alphanumeric tokens, optionally truncated to max_tokens."""
    tokens = _TOKEN_RE.findall(text.lower())
    if max_tokens is not None:
        tokens = tokens[:max_tokens]
    return tokens


def token_bucket(token: str, buckets: int, seed: int) -> int:
    digest = hashlib.blake2b(
        f"{seed}|{token}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") % buckets


def hashed_counts(
    text: str, buckets: int, seed: int, max_tokens: int | None = None
) -> np.ndarray:
    """Dense bucket-count vector for one text. Empty text gives all zeros."""
    counts = np.zeros(buckets, dtype=np.float64)
    for token in tokenize(text, max_tokens):
        counts[token_bucket(token, buckets, seed)] += 1.0
    return counts


def hashed_count_matrix(
    texts: Sequence[str], buckets: int, seed: int, max_tokens: int | None = None
) -> np.ndarray:
    out = np.zeros((len(texts), buckets), dtype=np.float64)
    for i, text in enumerate(texts):
        out[i] = hashed_counts(text, buckets, seed, max_tokens)
    return out
