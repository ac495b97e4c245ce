"""Seeded synthetic datasets: Gaussian mixtures and labeled class blobs."""

from typing import Optional, Sequence

import numpy as np

from .dataio import Dataset


def mixture_means(n_components: int, n_dims: int, rng: np.random.Generator, spread: float = 4.0) -> np.ndarray:
    return rng.uniform(-spread, spread, size=(n_components, n_dims))


def sample_mixture(means: np.ndarray, weights: Sequence[float], n_rows: int, rng: np.random.Generator,
                   scale: float = 1.0, shift: Optional[np.ndarray] = None, id: str = "mixture",
                   with_labels: bool = False) -> Dataset:
    """Draw ``n_rows`` points; component counts follow ``weights`` exactly (largest remainder)."""
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    raw = weights * n_rows
    counts = np.floor(raw).astype(int)
    short = n_rows - counts.sum()
    if short:
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    labels = np.repeat(np.arange(len(weights)), counts)
    x = means[labels] + rng.normal(0.0, scale, size=(n_rows, means.shape[1]))
    if shift is not None:
        x = x + shift
    order = rng.permutation(n_rows)
    return Dataset(id, x[order], labels[order] if with_labels else None)


def labeled_blobs(n_classes: int, rows_per_class: int, n_dims: int, seed: int,
                  spread: float = 3.0, scale: float = 1.0, id: str = "base") -> Dataset:
    """Balanced labeled data: one Gaussian blob per class."""
    rng = np.random.default_rng(seed)
    means = mixture_means(n_classes, n_dims, rng, spread)
    return sample_mixture(means, np.ones(n_classes), n_classes * rows_per_class, rng,
                          scale=scale, id=id, with_labels=True)


def adaptivity_corpus(seed: int, n_models: int = 20, n_dims: int = 4, n_components: int = 6,
                      partition_size: int = 50, partitions: tuple = (16, 24), target_partitions: int = 20,
                      min_drift: float = 0.5):
    """A target plus ``n_models`` sources whose component weights drift away from the target's.

    Returns ``(target, [source datasets])``. One source shares the target's
    weights; the others mix them with a random Dirichlet draw at strengths
    spread over ``[min_drift, 1]``, so adaptivity to the target is graded.
    """
    rng = np.random.default_rng(seed)
    means = mixture_means(n_components, n_dims, rng, spread=6.0)
    base = rng.dirichlet(np.full(n_components, 2.0))
    target = sample_mixture(means, base, partition_size * target_partitions, rng, scale=0.7, id="target")
    strengths = np.concatenate([[0.0], np.linspace(min_drift, 1.0, n_models - 1)])
    rng.shuffle(strengths)
    sources = []
    for j, lam in enumerate(strengths):
        w = (1.0 - lam) * base + lam * rng.dirichlet(np.full(n_components, 0.5))
        rows = partition_size * int(rng.integers(partitions[0], partitions[1] + 1))
        sources.append(sample_mixture(means, w, rows, rng, scale=0.7, id=f"m{j:02d}"))
    return target, sources
