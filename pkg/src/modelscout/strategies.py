"""Model-selection strategies as rankers over a registry of candidate models.

Every ranker returns a :class:`Ranking` sorted best-first, ties broken by
ascending model id.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, Union

import numpy as np

from . import adaptivity, jsdlsh
from .dataio import BinningScheme, DataError, Dataset, to_distribution
from .metrics import center, js_divergence, l2_center_distance


class StrategyError(RuntimeError):
    """A strategy's prerequisites are not met."""


class PredictionProvider(Protocol):
    def predict(self, features: np.ndarray) -> np.ndarray: ...


class NearestCentroid:
    """Assign each row to the closest class mean.

    With ``use_priors`` the squared distance is traded against the log class
    frequency under a shared isotropic variance, so class imbalance in the
    training data shows up in predictions.
    """

    def __init__(self, classes, centroids, priors, variance: float, use_priors: bool = False):
        self.classes = np.asarray(classes, dtype=np.int64)
        self.centroids = np.asarray(centroids, dtype=np.float64)
        self.priors = np.asarray(priors, dtype=np.float64)
        self.variance = float(variance)
        self.use_priors = use_priors

    @classmethod
    def fit(cls, data: Dataset, use_priors: bool = False) -> "NearestCentroid":
        if data.labels is None:
            raise DataError(f"dataset {data.id!r} has no labels to fit a predictor on")
        classes, counts = np.unique(data.labels, return_counts=True)
        centroids = np.array([data.features[data.labels == c].mean(axis=0) for c in classes])
        resid = data.features - centroids[np.searchsorted(classes, data.labels)]
        variance = max(float(np.mean(resid ** 2)), 1e-12)
        return cls(classes, centroids, counts / counts.sum(), variance, use_priors)

    def predict(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        d2 = ((x[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        score = -d2
        if self.use_priors:
            score = -d2 / (2.0 * self.variance) + np.log(self.priors)[None, :]
        return self.classes[np.argmax(score, axis=1)]

    def accuracy(self, data: Dataset) -> float:
        if data.labels is None:
            raise DataError(f"dataset {data.id!r} has no labels")
        return float(np.mean(self.predict(data.features) == data.labels))

    def to_json(self) -> dict:
        return {
            "kind": "nearest_centroid",
            "classes": self.classes.tolist(),
            "centroids": self.centroids.tolist(),
            "priors": self.priors.tolist(),
            "variance": self.variance,
            "use_priors": self.use_priors,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NearestCentroid":
        return cls(obj["classes"], obj["centroids"], obj["priors"], obj["variance"], obj.get("use_priors", False))


class FilePredictions:
    """Precomputed labels for one target, read from a ``row_index,label`` CSV."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        by_row = {}
        with self.path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or {"row_index", "label"} - set(reader.fieldnames):
                raise DataError(f"{self.path}: expected columns row_index,label")
            for line, rec in enumerate(reader, start=2):
                try:
                    row, label = int(rec["row_index"]), int(rec["label"])
                except (TypeError, ValueError):
                    raise DataError(f"{self.path}: line {line}: non-integer row_index or label") from None
                if row in by_row:
                    raise DataError(f"{self.path}: row {row} predicted twice")
                by_row[row] = label
        n = len(by_row)
        if sorted(by_row) != list(range(n)):
            raise DataError(f"{self.path}: row indices must cover 0..{n - 1} exactly once")
        self.labels = np.array([by_row[i] for i in range(n)], dtype=np.int64)

    def predict(self, features: np.ndarray) -> np.ndarray:
        if len(features) != len(self.labels):
            raise DataError(f"{self.path}: {len(self.labels)} predictions for a {len(features)}-row target")
        return self.labels


@dataclass
class ModelEntry:
    id: str
    data: Optional[Dataset] = None
    source_accuracy: Optional[float] = None
    predictor: Optional[PredictionProvider] = None
    jsd_signature: Optional[jsdlsh.JsdSignature] = None
    center: Optional[np.ndarray] = None
    partition_digests: Optional[np.ndarray] = None


@dataclass
class Ranking:
    strategy: str
    entries: list
    higher_better: bool
    unavailable: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        sign = -1.0 if self.higher_better else 1.0
        self.entries = sorted(((mid, float(s)) for mid, s in self.entries), key=lambda e: (sign * e[1], e[0]))

    @property
    def ids(self) -> list:
        return [mid for mid, _ in self.entries]

    @property
    def scores(self) -> dict:
        return dict(self.entries)

    def to_json(self) -> dict:
        out = {
            "strategy": self.strategy,
            "orientation": "higher-better" if self.higher_better else "lower-better",
            "ranking": [{"rank": i + 1, "model": mid, "score": s} for i, (mid, s) in enumerate(self.entries)],
            "unavailable": dict(sorted(self.unavailable.items())),
        }
        if self.extra:
            out["extra"] = self.extra
        return out


def _require(entry: ModelEntry, ok: bool, what: str, skip: bool, unavailable: dict) -> bool:
    if ok:
        return True
    if skip:
        unavailable[entry.id] = f"unavailable ({what})"
        return False
    raise StrategyError(f"model {entry.id!r}: {what}")


def _check_registry(registry: Sequence[ModelEntry]) -> None:
    if not registry:
        raise StrategyError("no models to rank")
    ids = [e.id for e in registry]
    if len(set(ids)) != len(ids):
        raise StrategyError("duplicate model ids in registry")


def _check_dims(entry: ModelEntry, target: Dataset) -> None:
    if entry.data is not None and entry.data.n_dims != target.n_dims:
        raise DataError(f"model {entry.id!r} has {entry.data.n_dims} features, target has {target.n_dims}")


def dataset_signature(entry: ModelEntry, binning: BinningScheme, family: jsdlsh.JsdLshFamily) -> Optional[jsdlsh.JsdSignature]:
    if entry.jsd_signature is not None:
        return entry.jsd_signature
    if entry.data is not None:
        return jsdlsh.hash_distribution(family, to_distribution(entry.data, binning))
    return None


def rank_by_js(registry: Sequence[ModelEntry], target: Dataset, binning: BinningScheme,
               mode: str = "exact", family: Optional[jsdlsh.JsdLshFamily] = None,
               skip_missing: bool = False) -> Ranking:
    """Exact JS divergence to the target, or ``1 - band collision rate`` in ``lsh`` mode."""
    _check_registry(registry)
    target_dist = to_distribution(target, binning)
    entries, unavailable = [], {}
    if mode == "exact":
        for e in registry:
            _check_dims(e, target)
            if _require(e, e.data is not None, "signatures-only", skip_missing, unavailable):
                entries.append((e.id, js_divergence(to_distribution(e.data, binning), target_dist)))
    elif mode == "lsh":
        if family is None:
            raise StrategyError("lsh mode needs a JSD-LSH family")
        target_sig = jsdlsh.hash_distribution(family, target_dist)
        for e in registry:
            _check_dims(e, target)
            sig = dataset_signature(e, binning, family)
            if _require(e, sig is not None, "no data or JSD-LSH signature", skip_missing, unavailable):
                entries.append((e.id, 1.0 - jsdlsh.collision_estimate(sig, target_sig)))
    else:
        raise ValueError(f"unknown JS mode {mode!r}")
    return Ranking(f"js-{mode}", entries, higher_better=False, unavailable=unavailable)


def screen_js_lsh(signatures: np.ndarray, target_sig: jsdlsh.JsdSignature, t: float,
                  family: jsdlsh.JsdLshFamily) -> np.ndarray:
    """Boolean mask over rows of an (n_models, L) digest matrix: predicted ``JS <= t``."""
    rate = (signatures == target_sig.digests[None, :]).mean(axis=1)
    return rate >= jsdlsh.band_collision_threshold(t, family)


def rank_by_l2(registry: Sequence[ModelEntry], target: Dataset, skip_missing: bool = False) -> Ranking:
    _check_registry(registry)
    target_center = center(target)
    entries, unavailable = [], {}
    for e in registry:
        _check_dims(e, target)
        c = center(e.data) if e.data is not None else e.center
        if _require(e, c is not None, "no training data or stored center", skip_missing, unavailable):
            entries.append((e.id, l2_center_distance(c, target_center)))
    return Ranking("l2", entries, higher_better=False, unavailable=unavailable)


def rank_by_adaptivity(registry: Sequence[ModelEntry], target: Dataset, t_prime: Optional[float] = None,
                       mode: str = "index", index: Optional[adaptivity.TwoLevelIndex] = None,
                       config: Optional[adaptivity.IndexConfig] = None,
                       binning: Optional[BinningScheme] = None, skip_missing: bool = False) -> Ranking:
    """Adaptivity of each model's training data to the target.

    ``pairwise`` computes it exactly from training data (``config`` supplies
    partition size, JS threshold and seed). ``index`` ranks by the matched
    MinHash band fraction from the two-level index.
    """
    _check_registry(registry)
    entries, unavailable, extra = [], {}, {}
    if mode == "pairwise":
        if config is None or binning is None:
            raise StrategyError("pairwise adaptivity needs an index config and binning")
        shuffle = config.seeds()["shuffle"]
        tparts = adaptivity.partition(target, config.partition_size, shuffle)
        tdist = adaptivity.partition_distributions(target, tparts, binning)
        for e in registry:
            _check_dims(e, target)
            if _require(e, e.data is not None, "signatures-only",
                        skip_missing, unavailable):
                parts = adaptivity.partition(e.data, config.partition_size, shuffle)
                sdist = adaptivity.partition_distributions(e.data, parts, binning)
                entries.append((e.id, adaptivity.adaptivity_from_distributions(sdist, tdist, config.t)))
    elif mode == "index":
        if index is None:
            raise StrategyError("index mode needs a built two-level index")
        result = adaptivity.query(index, target, t_prime)
        for e in registry:
            if _require(e, e.id in result.fractions, "not in the index (rebuild it)", skip_missing, unavailable):
                entries.append((e.id, result.fractions[e.id]))
        extra = {
            "selected": sorted(m for m in result.selected if m in {e.id for e in registry}),
            "t_star": result.t_star,
            "threshold": result.threshold,
            "target_partitions": result.m,
        }
    else:
        raise ValueError(f"unknown adaptivity mode {mode!r}")
    return Ranking(f"adaptivity-{mode}", entries, higher_better=True, unavailable=unavailable, extra=extra)


def voting_credits(predictions: np.ndarray) -> np.ndarray:
    """Credits per model for an (n_models, n_rows) label matrix.

    Each row's most frequent labels win (all of them on a tie) and every model
    that predicted a winner gains one credit.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.unique(predictions)
    idx = np.searchsorted(labels, predictions)
    n_rows = predictions.shape[1]
    counts = np.zeros((labels.size, n_rows), dtype=np.int64)
    for row in idx:
        counts[row, np.arange(n_rows)] += 1
    winners = counts == counts.max(axis=0, keepdims=True)
    return winners[idx, np.arange(n_rows)[None, :]].sum(axis=1)


def rank_by_voting(registry: Sequence[ModelEntry], target: Dataset, skip_missing: bool = False) -> Ranking:
    _check_registry(registry)
    preds, ids, unavailable = [], [], {}
    for e in registry:
        if not _require(e, e.predictor is not None, "no predictor for voting", skip_missing, unavailable):
            continue
        p = np.asarray(e.predictor.predict(target.features)).reshape(-1)
        if p.shape[0] != target.n_rows:
            raise StrategyError(f"model {e.id!r} returned {p.shape[0]} predictions for {target.n_rows} rows")
        preds.append(p)
        ids.append(e.id)
    if not preds:
        raise StrategyError("no model can vote")
    credits = voting_credits(np.vstack(preds))
    entries = [(mid, c / target.n_rows) for mid, c in zip(ids, credits)]
    return Ranking("voting", entries, higher_better=True, unavailable=unavailable)


def rank_by_source_accuracy(registry: Sequence[ModelEntry], skip_missing: bool = False) -> Ranking:
    """Descending accuracy on each model's own training data; never looks at a target."""
    _check_registry(registry)
    entries, unavailable = [], {}
    for e in registry:
        if _require(e, e.source_accuracy is not None, "no source accuracy recorded", skip_missing, unavailable):
            entries.append((e.id, e.source_accuracy))
    return Ranking("source-accuracy", entries, higher_better=True, unavailable=unavailable)


def top_k(ranking: Ranking, k: int) -> list:
    if not 1 <= k <= len(ranking.entries):
        raise ValueError(f"k={k} out of range for {len(ranking.entries)} ranked models")
    return ranking.ids[:k]
