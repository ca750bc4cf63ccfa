"""Deterministic randomness for every seeded operation.

All shuffles and samples run on SplitMix64 (Steele, Lea & Flood; public
domain) driving a Fisher-Yates shuffle, so seeded outputs are
byte-identical across platforms and Python versions. The algorithm
identifier below is recorded in fold specs and iteration manifests.
"""

from __future__ import annotations

import hashlib

RNG_ALGORITHM = "splitmix64/fisher-yates/v1"

_MASK64 = (1 << 64) - 1
_SPAN = 1 << 64


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n); rejection sampling keeps it bias-free."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        limit = _SPAN - (_SPAN % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """First k draws of a Fisher-Yates shuffle, in draw order.

        Equivalent to sampling without replacement; k is clamped to
        len(items).
        """
        pool = list(items)
        n = len(pool)
        k = min(k, n)
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


def derive_seed(base: int, *parts: int | str) -> int:
    """Stable 64-bit sub-seed from a base seed plus context labels.

    Used to give each iteration (and each split stage) independent
    randomness while recording only one base seed.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update((base & _MASK64).to_bytes(8, "little"))
    for part in parts:
        if isinstance(part, int):
            h.update(b"i" + (part & _MASK64).to_bytes(8, "little"))
        else:
            data = part.encode("utf-8")
            h.update(b"s" + len(data).to_bytes(4, "little") + data)
    return int.from_bytes(h.digest(), "little")
