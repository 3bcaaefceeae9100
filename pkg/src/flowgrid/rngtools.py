"""Seedable named random substreams.

Every stochastic decision in the suite draws from a generator obtained
here, keyed by (seed, stream name).  Streams are independent: consuming
one never shifts another, so adding policy randomness cannot perturb
world randomness for the same seed.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _digest_words(text: str) -> np.ndarray:
    raw = hashlib.sha256(text.encode("utf-8")).digest()
    return np.frombuffer(raw[:16], dtype=np.uint64).copy()


def substream(seed: int, *names) -> np.random.Generator:
    """Return the generator for the named substream of ``seed``.

    The Philox key is derived from a hash of the seed and the name parts,
    so any (seed, names) pair maps to the same stream on every platform.
    """
    tag = "/".join(str(part) for part in names)
    key = _digest_words(f"{seed}/{tag}")
    return np.random.Generator(np.random.Philox(key=key))


def derived_seed(base_seed: int, *names) -> int:
    """A stable 63-bit integer seed derived from a base seed and name parts."""
    tag = "/".join(str(part) for part in names)
    raw = hashlib.sha256(f"{base_seed}#{tag}".encode("utf-8")).digest()
    return int.from_bytes(raw[:8], "big") >> 1
