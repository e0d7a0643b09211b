"""Named, reproducible random substreams.

Every source of randomness in a run is derived from one master seed through
named substreams, so changing how one component consumes randomness never
perturbs the others.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream"]


def _key_to_entropy(key: int | str) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"seed keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"seed keys must be int or str, got {type(key).__name__}")


def substream(*keys: int | str) -> np.random.Generator:
    """Return a Generator deterministically keyed by a sequence of names/ints.

    ``substream(seed, "data", 3)`` always yields the same stream, independent
    of any other substream drawn from the same master seed.
    """
    if not keys:
        raise ValueError("substream needs at least one key")
    entropy = [_key_to_entropy(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
