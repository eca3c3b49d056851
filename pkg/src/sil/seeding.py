"""Deterministic seed derivation.

All randomness in the pipeline flows from one top-level integer seed.
Subsystems get their own streams by deriving a child seed from the parent
seed plus a purpose string, so adding a new consumer never perturbs the
streams of existing ones. Derivation uses SHA-256 (Python's hash() is
salted per process and must not be used here).
"""

import hashlib

import numpy as np


def derive_seed(seed: int, purpose: str) -> int:
    """Return a child seed for `purpose`, stable across runs and platforms."""
    digest = hashlib.sha256(f"{seed}:{purpose}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    """A fresh, caller-owned PCG64 generator for one purpose."""
    return np.random.default_rng(derive_seed(seed, purpose))
