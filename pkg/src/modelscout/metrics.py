"""Exact divergences between histograms and the L2 distance between dataset centers.

All logarithms are natural, so divergences are in nats.
"""

import numpy as np

from .dataio import Dataset, DataError, ProbDistribution

SMOOTHING_EPS = 1e-10


def _weights(p) -> np.ndarray:
    return p.weights if isinstance(p, ProbDistribution) else np.asarray(p, dtype=np.float64)


def smooth(w: np.ndarray, eps: float = SMOOTHING_EPS) -> np.ndarray:
    """Additive smoothing that keeps every cell strictly positive and the total at 1."""
    return (w + eps) / (1.0 + w.shape[-1] * eps)


def _kl_terms(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # 0 * ln(0/q) = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = p * np.log(p / q)
    return np.where(p > 0, terms, 0.0)


def _check_omega(p: np.ndarray, q: np.ndarray) -> None:
    if p.shape[-1] != q.shape[-1]:
        raise DataError(f"sample spaces differ: {p.shape[-1]} vs {q.shape[-1]} cells")


def kl_divergence(P, Q) -> float:
    p, q = _weights(P), _weights(Q)
    _check_omega(p, q)
    return float(max(_kl_terms(smooth(p), smooth(q)).sum(), 0.0))


def _js_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # p, q already smoothed and broadcast-compatible; reduces the last axis
    m = (p + q) / 2.0
    return 0.5 * _kl_terms(p, m).sum(axis=-1) + 0.5 * _kl_terms(q, m).sum(axis=-1)


def js_divergence(P, Q) -> float:
    p, q = _weights(P), _weights(Q)
    _check_omega(p, q)
    return float(np.clip(_js_rows(smooth(p), smooth(q)), 0.0, np.log(2.0)))


def js_matrix(P: np.ndarray, Q: np.ndarray, chunk: int = 64) -> np.ndarray:
    """All-pairs JS divergence between the rows of ``P`` (n, |Ω|) and ``Q`` (m, |Ω|).

    Entry ``[i, j]`` equals ``js_divergence(P[i], Q[j])``.
    """
    P = smooth(np.atleast_2d(np.asarray(P, dtype=np.float64)))
    Q = smooth(np.atleast_2d(np.asarray(Q, dtype=np.float64)))
    _check_omega(P, Q)
    out = np.empty((P.shape[0], Q.shape[0]))
    for start in range(0, P.shape[0], chunk):
        block = P[start:start + chunk, None, :]
        out[start:start + chunk] = _js_rows(block, Q[None, :, :])
    return np.clip(out, 0.0, np.log(2.0))


def center(data: Dataset) -> np.ndarray:
    return data.features.mean(axis=0)


def l2_center_distance(A, B) -> float:
    """Euclidean distance between per-dimension means.

    Accepts datasets or precomputed center vectors.
    """
    a = center(A) if isinstance(A, Dataset) else np.asarray(A, dtype=np.float64)
    b = center(B) if isinstance(B, Dataset) else np.asarray(B, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.linalg.norm(a - b))
