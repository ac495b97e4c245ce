"""Minwise hashing over sets of 64-bit tokens."""

from dataclasses import dataclass, field

import numpy as np

from .dataio import DataError
from .hashing import derive_seeds, digest_rows, mix64

DEFAULT_KM = 256
DEFAULT_LM = 128


@dataclass(frozen=True, eq=False)
class MinHashFamily:
    seed: int
    K_m: int = DEFAULT_KM
    L_m: int = DEFAULT_LM
    _mult: np.ndarray = field(init=False, repr=False)
    _add: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.K_m < 1 or self.L_m < 1 or self.K_m % self.L_m != 0:
            raise ValueError(f"K_m={self.K_m} must be a positive multiple of L_m={self.L_m}")
        seeds = np.array(derive_seeds(self.seed, 2 * self.K_m), dtype=np.uint64)
        # odd multipliers make each affine map a bijection on 64-bit words
        object.__setattr__(self, "_mult", mix64(seeds[: self.K_m]) | np.uint64(1))
        object.__setattr__(self, "_add", mix64(seeds[self.K_m:]))

    @property
    def rows_per_band(self) -> int:
        return self.K_m // self.L_m

    def key(self) -> tuple:
        return (int(self.seed), self.K_m, self.L_m)

    def manifest(self) -> dict:
        return {"seed": int(self.seed), "K_m": self.K_m, "L_m": self.L_m}

    @classmethod
    def from_manifest(cls, obj: dict) -> "MinHashFamily":
        return cls(int(obj["seed"]), int(obj["K_m"]), int(obj["L_m"]))


@dataclass(frozen=True, eq=False)
class MinSignature:
    values: np.ndarray  # uint64, K_m minima
    bands: np.ndarray  # uint64, L_m band digests
    family_key: tuple

    def to_json(self) -> dict:
        return {
            "values": [str(int(v)) for v in self.values],
            "bands": [[i, str(int(b))] for i, b in enumerate(self.bands)],
        }

    @classmethod
    def from_json(cls, obj: dict, family: MinHashFamily) -> "MinSignature":
        values = np.array([int(v) for v in obj["values"]], dtype=np.uint64)
        sig = signature_from_values(family, values)
        stored = np.array([int(b) for _, b in obj["bands"]], dtype=np.uint64)
        if not np.array_equal(sig.bands, stored):
            raise DataError("stored MinHash bands do not match their values")
        return sig

    def __eq__(self, other):
        return (isinstance(other, MinSignature) and self.family_key == other.family_key
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.family_key, self.values.tobytes()))


def signature_from_values(family: MinHashFamily, values: np.ndarray) -> MinSignature:
    grouped = values.reshape(family.L_m, family.rows_per_band)
    bands = digest_rows(grouped, family.seed, salt=np.arange(family.L_m, dtype=np.uint64))
    return MinSignature(values, bands, family.key())


def minhash_set(family: MinHashFamily, tokens, chunk: int = 8192) -> MinSignature:
    """MinHash signature of a token set; order and repetition are irrelevant."""
    tokens = np.unique(np.asarray(list(tokens) if isinstance(tokens, (set, frozenset)) else tokens,
                                  dtype=np.uint64).ravel())
    if tokens.size == 0:
        raise DataError("cannot MinHash an empty token set")
    pre = mix64(tokens ^ np.uint64(family.seed))
    values = np.full(family.K_m, np.iinfo(np.uint64).max, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for start in range(0, pre.size, chunk):
            block = pre[None, start:start + chunk]
            h = family._mult[:, None] * block + family._add[:, None]
            np.minimum(values, h.min(axis=1), out=values)
    return signature_from_values(family, values)


def jaccard_estimate(sig_a: MinSignature, sig_b: MinSignature) -> float:
    if sig_a.family_key != sig_b.family_key:
        raise DataError("signatures come from different MinHash families")
    return float(np.mean(sig_a.values == sig_b.values))


def band_match_fraction(sig_a: MinSignature, sig_b: MinSignature) -> float:
    if sig_a.family_key != sig_b.family_key:
        raise DataError("signatures come from different MinHash families")
    return float(np.mean(sig_a.bands == sig_b.bands))
