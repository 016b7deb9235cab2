"""Deterministic seed derivation for hierarchical RNG streams.

Every stochastic stage draws from a numpy Generator whose seed is derived
from its parent seed plus a label, so campaigns, episodes, noise
injection, and training are reproducible independently of execution
order, process boundaries, or platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK63 = (1 << 63) - 1


def derive_seed(*parts: int | str | float) -> int:
    """Map a (seed, label, ...) tuple to a stable 63-bit child seed."""
    key = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _MASK63


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derived_rng(*parts: int | str | float) -> np.random.Generator:
    return make_rng(derive_seed(*parts))
