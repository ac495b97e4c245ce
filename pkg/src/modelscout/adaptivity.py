"""Directional adaptivity between datasets and the two-level LSH index that approximates it.

Adaptivity of a source dataset to a target dataset is the fraction of target
partitions that have at least one source partition within a JS-divergence
threshold. The index answers the same question approximately: partitions are
hashed with JSD-LSH, every dataset's band tokens are flattened into one set,
and those sets are MinHashed so a query costs ``L_m`` table lookups.
"""

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import jsdlsh, minhash
from .dataio import BinningScheme, DataError, Dataset, cell_indices, histogram_matrix
from .hashing import MASK63, TOP_BIT, derive_seeds, mix64, string_seed
from .metrics import js_matrix

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class IndexConfig:
    partition_size: int = 50
    t: float = 0.1
    t_prime: float = 0.5
    r: float = jsdlsh.DEFAULT_R
    K: int = jsdlsh.DEFAULT_K
    L: Union[int, str] = jsdlsh.DEFAULT_L
    K_m: int = minhash.DEFAULT_KM
    L_m: int = minhash.DEFAULT_LM
    n_u: Union[int, str, None] = None
    seed: int = 0

    def resolved(self) -> "IndexConfig":
        """Settle ``L='auto'`` (K is rounded up to a multiple of the chosen L)."""
        if self.L != "auto":
            return self
        L = jsdlsh.auto_bands(self.t, self.r)
        K = L * -(-self.K // L)
        return IndexConfig(self.partition_size, self.t, self.t_prime, self.r, K, L,
                           self.K_m, self.L_m, self.n_u, self.seed)

    def seeds(self) -> dict:
        shuffle, jsd, mh, pad = derive_seeds(self.seed, 4)
        return {"master": int(self.seed), "shuffle": shuffle, "jsd": jsd, "minhash": mh, "padding": pad}


@dataclass(frozen=True, eq=False)
class PartitionSet:
    dataset_id: str
    blocks: tuple
    s: int
    seed: int

    def __len__(self):
        return len(self.blocks)


def partition(data: Dataset, s: int, seed: int) -> PartitionSet:
    """Shuffle rows with ``seed`` and cut them into blocks of ``s`` (last block may be short)."""
    if s < 1:
        raise ValueError(f"partition size must be positive, got {s}")
    perm = np.random.default_rng(seed).permutation(data.n_rows)
    blocks = tuple(perm[i:i + s] for i in range(0, data.n_rows, s))
    return PartitionSet(data.id, blocks, int(s), int(seed))


def partition_distributions(data: Dataset, parts: PartitionSet, binning: BinningScheme) -> np.ndarray:
    """One histogram row per partition, all over the shared binning."""
    cells = cell_indices(data.features, binning)
    return histogram_matrix(cells, parts.blocks, binning.omega_size)


def _check_t(t: float) -> None:
    if not 0.0 < t < LN2:
        raise ValueError(f"JS threshold must lie in (0, ln 2), got {t}")


def adaptivity_from_distributions(source: np.ndarray, target: np.ndarray, t: float) -> float:
    _check_t(t)
    matched = (js_matrix(target, source) <= t).any(axis=1)
    return float(matched.mean())


def adaptivity_pairwise(source: Dataset, source_parts: PartitionSet, target: Dataset,
                        target_parts: PartitionSet, t: float, binning: BinningScheme) -> float:
    """Exact adaptivity by comparing every target partition with every source partition."""
    _check_t(t)
    src = partition_distributions(source, source_parts, binning)
    tgt = partition_distributions(target, target_parts, binning)
    return adaptivity_from_distributions(src, tgt, t)


def adaptivity_to_jaccard(a: float, n: int, m: int) -> float:
    """Jaccard similarity of the partition sets when ``a*m`` of ``m`` target partitions match
    among ``n`` source partitions."""
    if not 0.0 <= a <= 1.0 or n < 1 or m < 1:
        raise ValueError("need 0 <= a <= 1 and positive partition counts")
    return a / (n / m + 1.0 - a)


def jaccard_to_adaptivity(j: float, n: int, m: int) -> float:
    if j < 0 or n < 1 or m < 1:
        raise ValueError("need j >= 0 and positive partition counts")
    return j * (n / m + 1.0) / (1.0 + j)


def alg_threshold(t_prime: float, L: int, n_u: int, m: int) -> float:
    """Band-fraction threshold for an adaptivity threshold ``t_prime``: L * t'/(n_u/m + 1 - t')."""
    return L * t_prime / (n_u / m + 1.0 - t_prime)


def _namespace_value(namespace) -> int:
    if isinstance(namespace, str):
        return string_seed(namespace)
    return int(namespace)


def real_tokens(digests: np.ndarray) -> np.ndarray:
    """Fold (band index, digest) pairs of an (n, L) digest matrix into tokens with the top bit clear."""
    digests = np.atleast_2d(np.asarray(digests, dtype=np.uint64))
    band = mix64(np.arange(digests.shape[1], dtype=np.uint64))
    return mix64(digests ^ band[None, :]) & MASK63


def padding_tokens(count: int, namespace) -> np.ndarray:
    """``count`` tokens in the reserved top-bit subspace, unique to ``namespace``."""
    ns = mix64(np.uint64(_namespace_value(namespace)))
    return mix64(ns ^ np.arange(count, dtype=np.uint64)) | TOP_BIT


def flatten(sigs, n_u: Optional[int] = None, namespace=None) -> np.ndarray:
    """Union of all band tokens of a dataset's partition signatures, padded to ``n_u`` partitions.

    ``sigs`` is a list of JsdSignature or an (n, L) digest matrix. With
    ``n_u=None`` no padding is added (query side).
    """
    if isinstance(sigs, np.ndarray):
        digests = np.atleast_2d(sigs)
    else:
        digests = np.vstack([s.digests for s in sigs])
    n, L = digests.shape
    tokens = np.unique(real_tokens(digests))
    if n_u is None:
        return tokens
    if n > n_u:
        raise DataError(f"{n} partitions exceed the padding bound n_u={n_u}")
    if n_u > n:
        if namespace is None:
            raise ValueError("padding needs a model namespace")
        tokens = np.concatenate([tokens, padding_tokens((n_u - n) * L, namespace)])
    return np.unique(tokens)


@dataclass
class ModelRecord:
    id: str
    n_partitions: int
    signature: minhash.MinSignature
    source_accuracy: Optional[float] = None


@dataclass
class TwoLevelIndex:
    config: IndexConfig
    binning: BinningScheme
    jsd_family: jsdlsh.JsdLshFamily
    min_family: minhash.MinHashFamily
    n_u: int
    tables: list = field(default_factory=list)
    models: dict = field(default_factory=dict)

    @property
    def shuffle_seed(self) -> int:
        return self.config.seeds()["shuffle"]

    @property
    def padding_seed(self) -> int:
        return self.config.seeds()["padding"]


@dataclass(frozen=True)
class QueryResult:
    selected: frozenset
    fractions: dict
    t_star: float
    threshold: float
    m: int

    def ranked(self) -> list:
        return sorted(self.fractions.items(), key=lambda kv: (-kv[1], kv[0]))


def make_families(config: IndexConfig, omega_size: int):
    seeds = config.seeds()
    jf = jsdlsh.new_family(seeds["jsd"], config.K, config.L, config.r, omega_size)
    mf = minhash.MinHashFamily(seeds["minhash"], config.K_m, config.L_m)
    return jf, mf


def partition_digests(data: Dataset, config: IndexConfig, binning: BinningScheme,
                      family: jsdlsh.JsdLshFamily) -> np.ndarray:
    """JSD-LSH band digests, one row per partition of ``data``."""
    parts = partition(data, config.partition_size, config.seeds()["shuffle"])
    return jsdlsh.hash_distributions(family, partition_distributions(data, parts, binning))


def _check_band_regime(config: IndexConfig) -> None:
    g = jsdlsh.threshold_to_collision(config.t, config.r)
    if abs(1.0 / config.L - g) / g > 0.25:
        log.warning("L=%d is far from 1/g(t)=%.3g (g(t)=%.3g); consider L=auto",
                    config.L, 1.0 / g, g)


def build_index(models: Sequence[tuple], config: IndexConfig, binning: BinningScheme) -> TwoLevelIndex:
    """Index ``(id, data, source_accuracy)`` triples.

    ``data`` is a Dataset, or an (n, L) matrix of partition digests computed
    earlier with the same config and binning.
    """
    config = config.resolved()
    _check_t(config.t)
    _check_band_regime(config)
    jf, mf = make_families(config, binning.omega_size)

    digests = {}
    accuracy = {}
    for model_id, data, acc in models:
        if model_id in digests:
            raise DataError(f"duplicate model id {model_id!r}")
        if isinstance(data, Dataset):
            d = partition_digests(data, config, binning, jf)
        else:
            d = np.atleast_2d(np.asarray(data, dtype=np.uint64))
            if d.shape[1] != config.L:
                raise DataError(f"model {model_id!r}: stored signatures have {d.shape[1]} bands, config has L={config.L}")
        digests[model_id] = d
        accuracy[model_id] = acc

    counts = {k: v.shape[0] for k, v in digests.items()}
    max_n = max(counts.values()) if counts else 1
    if config.n_u in (None, "auto"):
        n_u = max_n
    else:
        n_u = int(config.n_u)
        if n_u < max_n:
            worst = max(counts, key=counts.get)
            raise DataError(f"model {worst!r} has {max_n} partitions, more than n_u={n_u}")

    index = TwoLevelIndex(config, binning, jf, mf, n_u, [dict() for _ in range(config.L_m)], {})
    pad_seed = config.seeds()["padding"]
    for model_id, d in digests.items():
        tokens = flatten(d, n_u, string_seed(model_id, pad_seed))
        sig = minhash.minhash_set(mf, tokens)
        for i, band in enumerate(sig.bands):
            index.tables[i].setdefault(int(band), set()).add(model_id)
        index.models[model_id] = ModelRecord(model_id, int(d.shape[0]), sig, accuracy[model_id])
    return index


def query_signature(index: TwoLevelIndex, target: Dataset) -> tuple:
    """Target-side MinHash signature (flattened, unpadded) and its partition count."""
    if target.n_dims != index.binning.n_dims:
        raise DataError(f"target has {target.n_dims} dims, index expects {index.binning.n_dims}")
    d = partition_digests(target, index.config, index.binning, index.jsd_family)
    return minhash.minhash_set(index.min_family, flatten(d)), d.shape[0]


def query(index: TwoLevelIndex, target: Dataset, t_prime: Optional[float] = None) -> QueryResult:
    """Models whose matched-band fraction clears the adaptivity threshold.

    Every registered model gets a fraction (0 when no band matched) so callers
    can rank even when nothing is selected. The threshold is capped at
    ``(L_m - 1)/L_m`` since a fraction can never exceed 1.
    """
    t_prime = index.config.t_prime if t_prime is None else t_prime
    if not 0.0 < t_prime <= 1.0:
        raise ValueError(f"adaptivity threshold must lie in (0, 1], got {t_prime}")
    if target.n_rows < 1:
        raise DataError("empty target")
    sig, m = query_signature(index, target)
    t_star = alg_threshold(t_prime, index.config.L, index.n_u, m)
    L_m = index.config.L_m
    threshold = min(t_star, (L_m - 1) / L_m)

    hits = Counter()
    for i, band in enumerate(sig.bands):
        hits.update(index.tables[i].get(int(band), ()))
    fractions = {mid: hits.get(mid, 0) / L_m for mid in index.models}
    selected = frozenset(mid for mid, f in fractions.items() if f > threshold)
    return QueryResult(selected, fractions, t_star, threshold, m)


def _config_json(config: IndexConfig) -> dict:
    return asdict(config)


def save_index(index: TwoLevelIndex, directory: Union[str, Path], extra: Optional[dict] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": _config_json(index.config),
        "seeds": {k: str(v) for k, v in index.config.seeds().items()},
        "binning": index.binning.to_json(),
        "n_u": index.n_u,
        "jsd_family": {k: (str(v) if k == "seed" else v) for k, v in index.jsd_family.manifest().items()},
        "minhash_family": {k: (str(v) if k == "seed" else v) for k, v in index.min_family.manifest().items()},
        "models": sorted(index.models),
    }
    if extra:
        manifest.update(extra)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    rows = sorted(
        (i, token, mid)
        for i, table in enumerate(index.tables)
        for token, ids in table.items()
        for mid in ids
    )
    with (directory / "tables.jsonl").open("w", encoding="utf-8") as fh:
        for i, token, mid in rows:
            fh.write(json.dumps({"band": i, "token": str(token), "model": mid}, sort_keys=True) + "\n")

    with (directory / "models.jsonl").open("w", encoding="utf-8") as fh:
        for mid in sorted(index.models):
            rec = index.models[mid]
            fh.write(json.dumps({
                "id": mid,
                "n": rec.n_partitions,
                "minhash": rec.signature.to_json(),
                "source_accuracy": rec.source_accuracy,
            }, sort_keys=True) + "\n")
    return directory


def read_manifest(directory: Union[str, Path]) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise DataError(f"no index at {directory}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported index format {manifest.get('format_version')!r}")
    return manifest


def load_index(directory: Union[str, Path]) -> TwoLevelIndex:
    directory = Path(directory)
    manifest = read_manifest(directory)
    config = IndexConfig(**manifest["config"])
    binning = BinningScheme.from_json(manifest["binning"])
    jf, mf = make_families(config, binning.omega_size)
    index = TwoLevelIndex(config, binning, jf, mf, int(manifest["n_u"]),
                          [dict() for _ in range(config.L_m)], {})
    with (directory / "models.jsonl").open(encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            sig = minhash.MinSignature.from_json(obj["minhash"], mf)
            index.models[obj["id"]] = ModelRecord(obj["id"], int(obj["n"]), sig, obj["source_accuracy"])
    with (directory / "tables.jsonl").open(encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            if obj["model"] not in index.models:
                raise DataError(f"table entry references unknown model {obj['model']!r}")
            index.tables[obj["band"]].setdefault(int(obj["token"]), set()).add(obj["model"])
    return index
