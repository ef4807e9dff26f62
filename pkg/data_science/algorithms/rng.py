"""
Seed derivation for order-independent random streams.

Every stochastic decision is drawn from a generator derived from a tuple of
integer keys, so results do not depend on batch order or worker count.
"""

import zlib

import numpy as np


def stable_id(name: str) -> int:
    """32-bit id of a string that is stable across processes"""
    return zlib.crc32(name.encode("utf-8"))


def derive_rng(*keys: int) -> np.random.Generator:
    """Generator seeded from a SeedSequence over non-negative integer keys"""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))
