"""Deterministic random-stream derivation.

Every stream is addressed by an integer seed plus a key path, e.g.
``(replicate, role)``, through :class:`numpy.random.SeedSequence` spawn keys.
Addresses are pure functions of their inputs, so any sub-computation can be
reproduced in isolation.
"""

from __future__ import annotations

import numpy as np


def sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def generator(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(sequence(seed, *key))


def streams(seed: int, n: int, *key: int) -> list[np.random.Generator]:
    """One independent generator per record: ``key + (i,)`` for ``i < n``."""
    return [generator(seed, *key, i) for i in range(n)]


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit integer seed for the child stream at ``key``."""
    lo, hi = sequence(seed, *key).generate_state(2, np.uint32)
    return (int(hi) << 31) | (int(lo) >> 1)
