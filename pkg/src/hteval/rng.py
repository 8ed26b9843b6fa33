"""Seed plumbing.

All randomness uses numpy's PCG64 bit generator. Child seeds are derived by
hashing the parent seed together with string/int labels (BLAKE2b, 8-byte
digest), so a task's stream depends only on its identity and never on the
order in which tasks happen to run.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *labels: object) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master) & _MASK64).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))
