"""Deterministic seed derivation.

A single global seed fans out into independent per-purpose seeds by hashing
the purpose label, so adding a stage never perturbs the RNG stream of an
existing one.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base: int, label: str) -> int:
    """Stable 63-bit seed for `label` under the given base seed."""
    digest = hashlib.sha256(f"{base}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def rng_for(base: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, label))
