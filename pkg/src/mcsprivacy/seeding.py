"""Deterministic per-item random streams derived from an explicit base seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base_seed: int, *keys: str | int) -> int:
    h = hashlib.sha256(str(int(base_seed)).encode())
    for k in keys:
        h.update(b"\x1f")
        h.update(str(k).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(base_seed: int, *keys: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base_seed, *keys))
