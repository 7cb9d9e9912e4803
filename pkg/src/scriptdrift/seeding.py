"""Deterministic RNG derivation.

Every random choice in the package flows from one 64-bit master seed. Child
generators are derived by hashing the master seed together with a path of
context labels (strings or non-negative ints) through numpy's SeedSequence,
so any pipeline stage can be re-run in isolation without replaying the stages
before it, and parallel workers stay deterministic regardless of scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["derive_rng", "derive_seed"]

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("seed path ints must be non-negative")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"seed path parts must be str or int, got {type(part).__name__}")


def derive_rng(seed: int, *path) -> np.random.Generator:
    """Generator for `seed` specialized by a path of context labels."""
    entropy = [int(seed) & _MASK64] + [_key(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *path) -> int:
    """Collapse a seed path to a plain 64-bit integer seed."""
    entropy = [int(seed) & _MASK64] + [_key(p) for p in path]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
