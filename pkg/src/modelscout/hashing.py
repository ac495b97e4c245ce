"""Seeded 64-bit hashing shared by both LSH levels.

Everything here works on ``numpy.uint64`` arrays and wraps modulo 2**64.
"""

import hashlib

import numpy as np

MASK63 = np.uint64((1 << 63) - 1)
TOP_BIT = np.uint64(1 << 63)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def mix64(x):
    """splitmix64 finalizer, elementwise."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def as_u64(values) -> np.ndarray:
    """Reinterpret signed 64-bit integers as unsigned without changing bits."""
    arr = np.ascontiguousarray(values, dtype=np.int64)
    return arr.view(np.uint64)


def digest_rows(rows, seed: int, salt=None) -> np.ndarray:
    """Fold each row of a ``(..., width)`` integer array into one 64-bit digest.

    ``salt`` (broadcastable to the leading shape) separates otherwise equal
    rows, e.g. the same raw values appearing in different bands.
    """
    rows = as_u64(rows)
    h = mix64(np.full(rows.shape[:-1], seed, dtype=np.uint64))
    if salt is not None:
        h = mix64(h ^ np.asarray(salt, dtype=np.uint64))
    for j in range(rows.shape[-1]):
        h = mix64(h ^ rows[..., j])
    return h


def string_seed(text: str, seed: int = 0) -> int:
    """Stable 64-bit value for a string (model ids, namespaces)."""
    key = int(seed & ((1 << 64) - 1)).to_bytes(8, "little")
    h = hashlib.blake2b(text.encode("utf-8"), digest_size=8, key=key)
    return int.from_bytes(h.digest(), "little")


def derive_seeds(master: int, n: int) -> list[int]:
    """Fan a master seed out into ``n`` independent 64-bit seeds."""
    state = np.random.SeedSequence(int(master)).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]
