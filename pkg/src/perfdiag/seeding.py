"""Deterministic derivation of per-component RNG streams from one master seed.

Every randomized component draws from its own stream keyed by (master seed,
component label), so results never depend on execution order or thread
scheduling.
"""

import hashlib

import numpy as np


def derive_seed(master_seed: int, *labels) -> int:
    """Hash a master seed and string/int labels into a 64-bit child seed."""
    h = hashlib.sha256(repr((int(master_seed),) + tuple(labels)).encode())
    return int.from_bytes(h.digest()[:8], "little")


def derived_rng(master_seed: int, *labels) -> np.random.Generator:
    """A Generator seeded from ``derive_seed(master_seed, *labels)``."""
    return np.random.default_rng(derive_seed(master_seed, *labels))
