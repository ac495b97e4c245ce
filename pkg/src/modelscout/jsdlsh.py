"""LSH family for JS divergence over square-root histogram embeddings.

Each hash is ``ceil((a . sqrt(P) + b) / r)`` with ``a`` standard normal and
``b`` uniform on ``[0, r]``. ``K`` raw hashes are grouped into ``L`` bands and
every band is digested into one 64-bit token.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .dataio import DataError, ProbDistribution
from .hashing import digest_rows

# Lower-bound factor between the sqrt-embedding distance and JS divergence.
JS_BOUND_FACTOR = 0.69

DEFAULT_R = 1.4
DEFAULT_K = 800
DEFAULT_L = 200

_RAW_LIMIT = 2.0 ** 62


@dataclass(frozen=True, eq=False)
class JsdLshFamily:
    seed: int
    K: int
    L: int
    r: float
    omega_size: int
    a_vectors: np.ndarray = field(repr=False)
    b_offsets: np.ndarray = field(repr=False)

    @property
    def rows_per_band(self) -> int:
        return self.K // self.L

    @property
    def a_norms(self) -> np.ndarray:
        return np.linalg.norm(self.a_vectors, axis=1)

    def manifest(self) -> dict:
        return {"seed": int(self.seed), "K": self.K, "L": self.L, "r": self.r, "omega_size": self.omega_size}

    @classmethod
    def from_manifest(cls, obj: dict) -> "JsdLshFamily":
        return new_family(int(obj["seed"]), int(obj["K"]), int(obj["L"]), float(obj["r"]), int(obj["omega_size"]))


@dataclass(frozen=True, eq=False)
class JsdSignature:
    digests: np.ndarray  # uint64, one per band

    @property
    def L(self) -> int:
        return self.digests.shape[0]

    @property
    def bands(self) -> list:
        return [(i, int(d)) for i, d in enumerate(self.digests)]

    def to_json(self) -> list:
        return [[i, str(d)] for i, d in self.bands]

    @classmethod
    def from_json(cls, obj: list) -> "JsdSignature":
        for pos, (i, _) in enumerate(obj):
            if int(i) != pos:
                raise DataError(f"band {pos} out of order in serialized signature")
        return cls(np.array([int(d) for _, d in obj], dtype=np.uint64))

    def __eq__(self, other):
        return isinstance(other, JsdSignature) and np.array_equal(self.digests, other.digests)

    def __hash__(self):
        return hash(self.digests.tobytes())


def new_family(seed: int, K: int = DEFAULT_K, L: int = DEFAULT_L, r: float = DEFAULT_R,
               omega_size: int = 1) -> JsdLshFamily:
    if K < 1 or L < 1 or K % L != 0:
        raise ValueError(f"K={K} must be a positive multiple of L={L}")
    if not r > 0:
        raise ValueError(f"bucket width r must be positive, got {r}")
    if omega_size < 1:
        raise ValueError("omega_size must be positive")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    a = rng.standard_normal((K, omega_size))
    b = rng.uniform(0.0, r, size=K)
    a.setflags(write=False)
    b.setflags(write=False)
    return JsdLshFamily(int(seed), K, L, float(r), omega_size, a, b)


def raw_hashes(family: JsdLshFamily, weights: np.ndarray) -> np.ndarray:
    """Raw integer hash values for one histogram (|Ω|,) or a batch (n, |Ω|) -> (n, K)."""
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    if w.shape[1] != family.omega_size:
        raise DataError(f"distribution has {w.shape[1]} cells, family expects {family.omega_size}")
    proj = np.sqrt(w) @ family.a_vectors.T
    # |a . sqrt(P)| <= ||a|| because ||sqrt(P)|| = 1
    if np.any(np.abs(proj) > family.a_norms * (1.0 + 1e-9) * np.sqrt(w.sum(axis=1, keepdims=True))):
        raise DataError("projection exceeds the Cauchy-Schwarz bound; input is not a distribution")
    vals = np.ceil((proj + family.b_offsets) / family.r)
    if np.any(np.abs(vals) > _RAW_LIMIT):
        raise DataError("raw hash value outside the signed 64-bit range")
    return vals.astype(np.int64)


def band_digests(family: JsdLshFamily, raw: np.ndarray) -> np.ndarray:
    """Digest consecutive groups of ``K/L`` raw values; (n, K) -> (n, L) uint64."""
    raw = np.atleast_2d(raw)
    grouped = raw.reshape(raw.shape[0], family.L, family.rows_per_band)
    return digest_rows(grouped, family.seed, salt=np.arange(family.L, dtype=np.uint64))


def hash_distributions(family: JsdLshFamily, weights: np.ndarray) -> np.ndarray:
    """Band digests for a batch of histograms, one row of ``L`` per histogram."""
    return band_digests(family, raw_hashes(family, weights))


def hash_distribution(family: JsdLshFamily, P) -> JsdSignature:
    w = P.weights if isinstance(P, ProbDistribution) else np.asarray(P, dtype=np.float64)
    return JsdSignature(hash_distributions(family, w)[0])


def collision_estimate(sig_a: JsdSignature, sig_b: JsdSignature) -> float:
    """Fraction of bands whose digests agree."""
    if sig_a.L != sig_b.L:
        raise DataError(f"band counts differ: {sig_a.L} vs {sig_b.L}")
    return float(np.mean(sig_a.digests == sig_b.digests))


def _abs_normal_pdf(y):
    return 2.0 * stats.norm.pdf(y)


def collision_probability_curve(c: float, r: float = DEFAULT_R) -> float:
    """Probability that one raw hash collides for two inputs at embedding distance ``c``.

    p(c) = integral over [0, r] of (1/c) f(x/c) (1 - x/r) dx, with f the
    density of |N(0, 1)|.
    """
    if not c > 0 or not r > 0:
        raise ValueError("c and r must be positive")
    # substitute y = x / c so the integrand's width no longer depends on c;
    # beyond y = 40 the normal tail is far below double precision
    upper = min(r / c, 40.0)
    value, _ = integrate.quad(lambda y: _abs_normal_pdf(y) * (1.0 - c * y / r), 0.0, upper,
                              epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(min(value, 1.0))


def threshold_distance(t: float) -> float:
    """Embedding distance corresponding to a JS threshold ``t``."""
    return float(np.sqrt(t / JS_BOUND_FACTOR))


def threshold_to_collision(t: float, r: float = DEFAULT_R) -> float:
    """Per-hash collision probability at JS threshold ``t``."""
    if not 0.0 < t < np.log(2.0):
        raise ValueError(f"JS threshold must lie in (0, ln 2), got {t}")
    return collision_probability_curve(threshold_distance(t), r)


def band_collision_threshold(t: float, family: JsdLshFamily) -> float:
    """Expected fraction of matching bands for two histograms exactly at threshold ``t``."""
    return threshold_to_collision(t, family.r) ** family.rows_per_band


def auto_bands(t: float, r: float = DEFAULT_R) -> int:
    """Band count whose reciprocal best matches the collision probability at ``t``."""
    return max(1, int(round(1.0 / threshold_to_collision(t, r))))
