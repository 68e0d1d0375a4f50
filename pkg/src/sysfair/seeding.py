"""Stable seed derivation.

Every random stream in an experiment is keyed by a tuple such as
``(master_seed, "batch", trial, iteration)`` so results never depend on
execution order or on how work is split across processes.
"""
import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Hash an arbitrary tuple of ints/strings into a 64-bit unsigned seed."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
