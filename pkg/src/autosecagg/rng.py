"""Deterministic PRNG streams with labeled splitting.

Every random draw in the package comes from a numpy ``Generator`` backed by
PCG64. Streams are never shared between purposes: a child seed is derived by
hashing the parent seed together with a tuple of labels, e.g.
``derive_seed(master, "quant", round_idx, user)``. The hash is BLAKE2b over the
ASCII rendering of the labels, so the mapping is platform independent and
bit-reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _digest(seed: int, labels: tuple, size: int) -> bytes:
    text = ":".join([str(int(seed) & _MASK64), *map(str, labels)])
    return hashlib.blake2b(text.encode("ascii"), digest_size=size).digest()


def derive_seed(seed: int, *labels) -> int:
    """Child 64-bit seed for ``labels`` under ``seed``."""
    return int.from_bytes(_digest(seed, labels, 8), "little")


def stream(seed: int, *labels) -> np.random.Generator:
    """Fresh generator for the child stream ``labels`` of ``seed``."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *labels)))


class KeyedPCG:
    """Re-keys one PCG64 instance in place.

    Building a ``Generator`` from an integer seed runs ``SeedSequence``, which
    costs ~15us. Pairwise mask expansion does this thousands of times per
    round, so here the 128-bit state and increment are taken straight from a
    BLAKE2b digest instead. Not thread safe; make one per worker.
    """

    def __init__(self) -> None:
        self._bitgen = np.random.PCG64(0)
        self.generator = np.random.Generator(self._bitgen)

    def rekey(self, seed: int, *labels) -> np.random.Generator:
        h = _digest(seed, labels, 32)
        self._bitgen.state = {
            "bit_generator": "PCG64",
            "state": {
                "state": int.from_bytes(h[:16], "little"),
                "inc": int.from_bytes(h[16:], "little") | 1,
            },
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self.generator
