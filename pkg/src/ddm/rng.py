"""Deterministic random-stream derivation.

All stochastic choices in the package (parameter init, data synthesis,
negative sampling, epoch shuffling) draw from generators derived here.  A
stream is identified by a tuple of integers -- typically
``(seed, purpose, epoch, item)`` -- hashed through ``numpy``'s
``SeedSequence`` so that streams are independent, order-insensitive to
*when* they are created, and reproducible across processes and worker
counts.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Purpose tags.  Fixed small integers, never reused for a new purpose.
INIT = 1       # model parameter initialisation
GEN = 2        # synthetic video generation
SAMPLE = 3     # balanced positive/negative sampling
SHUFFLE = 4    # epoch-level ordering of training items


def stream(*keys: int) -> np.random.Generator:
    """Return a fresh generator for the integer key tuple."""
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


def string_key(text: str) -> int:
    """Stable 64-bit integer key for a string (video ids etc.)."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
