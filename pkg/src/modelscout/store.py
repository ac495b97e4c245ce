"""On-disk project layout: registry, dataset copies, index and reports.

::

    <root>/config.json          optional project defaults
    <root>/registry.jsonl       one model per line
    <root>/datasets/<id>.csv    training data copies (absent for signatures-only models)
    <root>/binning.json         binning frozen by the first signatures-only registration
    <root>/index/               persisted two-level index
    <root>/reports/             query and benchmark output
"""

import contextlib
import fcntl
import hashlib
import json
import os
from dataclasses import fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import adaptivity, jsdlsh
from .adaptivity import IndexConfig
from .dataio import BinningScheme, Dataset, fit_binning, load_csv, save_csv, to_distribution
from .metrics import center
from .strategies import FilePredictions, ModelEntry, NearestCentroid

SEED_ENV = "MODEL_SCOUT_SEED"
DEFAULT_BINS = 8
LABEL_COLUMN = "label"


class StoreError(RuntimeError):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)


class ProjectStore:
    def __init__(self, root):
        self.root = Path(root)

    registry_path = property(lambda self: self.root / "registry.jsonl")
    datasets_dir = property(lambda self: self.root / "datasets")
    index_dir = property(lambda self: self.root / "index")
    reports_dir = property(lambda self: self.root / "reports")
    binning_path = property(lambda self: self.root / "binning.json")
    config_path = property(lambda self: self.root / "config.json")

    @contextlib.contextmanager
    def lock(self):
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / ".lock", "w") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    # settings

    def project_config(self) -> dict:
        if not self.config_path.exists():
            return {}
        try:
            return json.loads(self.config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise StoreError(f"{self.config_path}: line {exc.lineno}: {exc.msg}") from None

    def settings(self, overrides: Optional[dict] = None) -> tuple:
        """``(IndexConfig, bins_per_dim)`` from defaults < config.json < MODEL_SCOUT_SEED < flags."""
        merged = {"bins_per_dim": DEFAULT_BINS}
        merged.update(self.project_config())
        if os.environ.get(SEED_ENV):
            merged["seed"] = int(os.environ[SEED_ENV])
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        names = {f.name for f in fields(IndexConfig)}
        unknown = set(merged) - names - {"bins_per_dim"}
        if unknown:
            raise StoreError(f"unknown settings: {sorted(unknown)}")
        cfg = IndexConfig(**{k: v for k, v in merged.items() if k in names}).resolved()
        return cfg, int(merged["bins_per_dim"])

    # registry

    def read_registry(self) -> list:
        if not self.registry_path.exists():
            return []
        with self.registry_path.open(encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def registry_hash(self) -> str:
        if not self.registry_path.exists():
            return hashlib.sha256(b"").hexdigest()
        return hashlib.sha256(self.registry_path.read_bytes()).hexdigest()

    def _append(self, record: dict) -> None:
        with self.registry_path.open("a", encoding="utf-8") as fh:
            fh.write(dumps(record) + "\n")

    def load_dataset(self, record: dict) -> Optional[Dataset]:
        if record.get("data") is None:
            return None
        return load_csv(self.root / record["data"], record.get("label_column"), id=record["id"])

    def frozen_binning(self) -> Optional[BinningScheme]:
        if not self.binning_path.exists():
            return None
        return BinningScheme.from_json(json.loads(self.binning_path.read_text(encoding="utf-8")))

    def binning_for(self, bins_per_dim: int, extra: Optional[Dataset] = None) -> BinningScheme:
        """Frozen binning if present, else fitted over every stored dataset (plus ``extra``)."""
        frozen = self.frozen_binning()
        if frozen is not None:
            if frozen.bins_per_dim != bins_per_dim:
                raise StoreError(f"binning is frozen at {frozen.bins_per_dim} bins per dimension "
                                 f"by signatures-only models; got {bins_per_dim}")
            return frozen
        data = [d for d in (self.load_dataset(r) for r in self.read_registry()) if d is not None]
        if extra is not None:
            data.append(extra)
        if not data:
            raise StoreError("no datasets registered")
        return fit_binning(data, bins_per_dim)

    def register(self, dataset_path, model_id: Optional[str] = None, source_accuracy: Optional[float] = None,
                 predictions: Optional[str] = None, labels_column: Optional[str] = None,
                 signatures_only: bool = False) -> dict:
        data = load_csv(dataset_path, labels_column, id=model_id)
        if source_accuracy is not None and not 0.0 <= source_accuracy <= 1.0:
            raise StoreError("source accuracy must lie in [0, 1]")
        with self.lock():
            registry = self.read_registry()
            if any(r["id"] == data.id for r in registry):
                raise StoreError(f"model id {data.id!r} is already registered")
            dims = {r["n_dims"] for r in registry}
            if dims and data.n_dims not in dims:
                raise StoreError(f"dataset has {data.n_dims} features, registry models have {dims.pop()}")

            record = {"id": data.id, "n_rows": data.n_rows, "n_dims": data.n_dims,
                      "source_accuracy": source_accuracy, "predictor": None, "data": None,
                      "label_column": None, "signatures_only": bool(signatures_only)}
            if data.labels is not None:
                predictor = NearestCentroid.fit(data)
                record["predictor"] = predictor.to_json()
                if source_accuracy is None:
                    record["source_accuracy"] = predictor.accuracy(data)
            if predictions is not None:
                FilePredictions(predictions)
                record["predictor"] = {"kind": "file", "path": str(Path(predictions).resolve())}

            if signatures_only:
                record["signatures"] = self._signatures(data)
            else:
                self.datasets_dir.mkdir(parents=True, exist_ok=True)
                rel = Path("datasets") / f"{data.id}.csv"
                save_csv(data, self.root / rel, LABEL_COLUMN)
                record["data"] = str(rel)
                record["label_column"] = LABEL_COLUMN if data.labels is not None else None
            self._append(record)
        return record

    def _signatures(self, data: Dataset) -> dict:
        cfg, bins = self.settings()
        binning = self.binning_for(bins, extra=data)
        if not self.binning_path.exists():
            self.binning_path.write_text(dumps(binning.to_json()) + "\n", encoding="utf-8")
        family = jsdlsh.new_family(cfg.seeds()["jsd"], cfg.K, cfg.L, cfg.r, binning.omega_size)
        digests = adaptivity.partition_digests(data, cfg, binning, family)
        return {
            "fingerprint": signature_fingerprint(cfg, binning),
            "partitions": [[str(int(v)) for v in row] for row in digests],
            "dataset": jsdlsh.hash_distribution(family, to_distribution(data, binning)).to_json(),
            "center": center(data).tolist(),
        }

    # materialization

    def entries(self, cfg: Optional[IndexConfig] = None, binning: Optional[BinningScheme] = None) -> list:
        """Registry records as ModelEntry objects; stored signatures are checked against
        ``cfg``/``binning`` when given."""
        out = []
        for r in self.read_registry():
            data = self.load_dataset(r)
            entry = ModelEntry(r["id"], data.unlabeled() if data is not None else None, r.get("source_accuracy"))
            p = r.get("predictor")
            if p and p.get("kind") == "nearest_centroid":
                entry.predictor = NearestCentroid.from_json(p)
            elif p and p.get("kind") == "file":
                entry.predictor = _LazyFilePredictions(p["path"])
            sigs = r.get("signatures")
            if sigs:
                entry.center = np.array(sigs["center"])
                if cfg is not None and binning is not None:
                    if sigs["fingerprint"] != signature_fingerprint(cfg, binning):
                        raise StoreError(f"model {r['id']!r} was registered signatures-only under different "
                                         "hashing settings; it cannot be rehashed without its data")
                    entry.jsd_signature = jsdlsh.JsdSignature.from_json(sigs["dataset"])
                    entry.partition_digests = np.array([[int(v) for v in row] for row in sigs["partitions"]],
                                                       dtype=np.uint64)
            out.append(entry)
        return out


class _LazyFilePredictions:
    """Defers reading a prediction file until voting actually needs it."""

    def __init__(self, path):
        self.path = path

    def predict(self, features):
        return FilePredictions(self.path).predict(features)


def signature_fingerprint(cfg: IndexConfig, binning: BinningScheme) -> str:
    key = {
        "binning": binning.to_json(),
        "partition_size": cfg.partition_size,
        "K": cfg.K, "L": cfg.L, "r": cfg.r,
        "seed": cfg.seed,
    }
    return hashlib.sha256(dumps(key).encode("utf-8")).hexdigest()[:16]
