"""Benchmark harness: correlation and top-k error of each strategy against target accuracy."""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import median
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import adaptivity, jsdlsh, strategies
from .adaptivity import IndexConfig
from .dataio import DataError, Dataset, fit_binning, load_csv, to_distribution
from .strategies import FilePredictions, ModelEntry, NearestCentroid, Ranking
from .synthetic import labeled_blobs

log = logging.getLogger(__name__)

DEFAULT_STRATEGIES = ("adaptivity", "js", "l2", "voting", "source-accuracy")
ALL_STRATEGIES = DEFAULT_STRATEGIES + ("adaptivity-pairwise", "js-lsh")


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("zero variance")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def _as_truth(truth) -> set:
    return {truth} if isinstance(truth, str) else set(truth)


def top_k_error(predictions: Sequence, truths: Sequence, k: int) -> float:
    """Fraction of searches whose predicted top-k set misses the best model.

    A truth may be a single id or a set of equally good ids; any of them counts.
    """
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths must align")
    if not predictions:
        raise ValueError("no searches to score")
    misses = 0
    for pred, truth in zip(predictions, truths):
        pred = set(pred)
        if len(pred) > k:
            raise ValueError(f"predicted set of size {len(pred)} for k={k}")
        misses += not (pred & _as_truth(truth))
    return misses / len(predictions)


def make_skewed_corpus(base: Dataset, n_variants: int, skew_spec: Sequence, seed: int,
                       rows_per_class: Optional[int] = None) -> list:
    """Variants of a labeled dataset: a balanced subsample, plus extra rows of one class.

    ``skew_spec`` holds ``(variant, class, extra_fraction)`` triples; variant
    ``v`` gets ``round(extra_fraction * rows_per_class)`` additional rows of
    ``class``. Extras come from rows the balanced draw left unused, and are
    resampled with replacement only when those run out.
    """
    if base.labels is None:
        raise DataError("skewed corpus needs a labeled base dataset")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(base.labels, return_counts=True)
    per_class = int(counts.min()) if rows_per_class is None else int(rows_per_class)
    if per_class > counts.min():
        raise DataError(f"rows_per_class={per_class} exceeds the smallest class ({counts.min()})")
    extras = {}
    for variant, cls, frac in skew_spec:
        if cls not in classes:
            raise DataError(f"class {cls} is absent from the base dataset")
        if not 0 <= variant < n_variants:
            raise DataError(f"variant {variant} out of range for {n_variants} variants")
        extras.setdefault(int(variant), []).append((int(cls), float(frac)))

    by_class = {int(c): np.flatnonzero(base.labels == c) for c in classes}
    variants = []
    for v in range(n_variants):
        chosen, leftovers = [], {}
        for c, rows in by_class.items():
            perm = rng.permutation(rows)
            chosen.append(perm[:per_class])
            leftovers[c] = perm[per_class:]
        for cls, frac in extras.get(v, []):
            n_extra = int(round(frac * per_class))
            pool = leftovers[cls]
            if n_extra <= pool.size:
                chosen.append(pool[:n_extra])
            else:
                chosen.append(pool)
                chosen.append(rng.choice(by_class[cls], size=n_extra - pool.size, replace=True))
        rows = np.concatenate(chosen)
        variants.append(base.subset(rng.permutation(rows), id=f"variant{v}"))
    return variants


@dataclass
class BenchScenario:
    id: str
    candidates: list
    target: Dataset
    target_accuracy: dict = field(default_factory=dict)
    best: Optional[set] = None

    def __post_init__(self):
        ids = {c.id for c in self.candidates}
        if self.target_accuracy:
            missing = ids - set(self.target_accuracy)
            if missing:
                raise DataError(f"scenario {self.id!r}: no target accuracy for {sorted(missing)}")
        if self.best is None:
            if not self.target_accuracy:
                raise DataError(f"scenario {self.id!r}: need target accuracies or a designated best model")
            top = max(self.target_accuracy[i] for i in ids)
            self.best = {i for i in ids if self.target_accuracy[i] == top}
        else:
            self.best = _as_truth(self.best)


@dataclass
class BenchConfig:
    index: IndexConfig = field(default_factory=IndexConfig)
    bins_per_dim: int = 8
    ks: tuple = (1, 2, 3)
    repetitions: int = 5
    strategies: tuple = DEFAULT_STRATEGIES


@dataclass
class BenchReport:
    strategies: dict
    scenarios: dict
    adaptivity_modes: dict
    config: dict
    rankings: dict = field(repr=False, default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "scenarios": self.scenarios,
            "strategies": self.strategies,
            "adaptivity_modes": self.adaptivity_modes,
        }

    def rankings_json(self) -> str:
        """Rankings only; stable across reruns with the same seeds."""
        return json.dumps(self.rankings, indent=2, sort_keys=True) + "\n"

    def text_table(self) -> str:
        ks = self.config["ks"]
        header = ["strategy", "pcc", "|pcc|"] + [f"top-{k} err" for k in ks] + ["query ms"]
        rows = []
        for name, s in self.strategies.items():
            rows.append([
                name,
                _fmt(s["pcc_mean"]),
                _fmt(s["abs_pcc_mean"]),
                *[_fmt(s["top_k_error"].get(str(k))) for k in ks],
                _fmt(None if s["latency_s"]["query"] is None else 1000 * s["latency_s"]["query"], 2),
            ])
        lines = [_align([header] + rows)]
        am = self.adaptivity_modes
        if am:
            lines.append("")
            lines.append(_align([
                ["adaptivity mode", "query ms", "top-1 agreement"],
                ["pairwise", _fmt(1000 * am["pairwise_query_s"], 2), ""],
                ["two-level index", _fmt(1000 * am["index_query_s"], 2), _fmt(am["top1_agreement"])],
                ["speedup", _fmt(am["speedup"], 1), ""],
            ]))
        return "\n".join(lines) + "\n"

    def summary_rows(self) -> list:
        ks = self.config["ks"]
        out = [["strategy", "pcc_mean", "abs_pcc_mean"] + [f"top{k}_error" for k in ks]
               + ["preprocess_s", "build_s", "query_s"]]
        for name, s in self.strategies.items():
            lat = s["latency_s"]
            out.append([name, s["pcc_mean"], s["abs_pcc_mean"]]
                       + [s["top_k_error"].get(str(k)) for k in ks]
                       + [lat["preprocess"], lat["build"], lat["query"]])
        return out


def _fmt(v, digits: int = 3) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"


def _align(rows: list) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def _timed(fn: Callable, reps: int):
    times, result = [], None
    for _ in range(max(1, reps)):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return result, median(times)


class _Prepared:
    """Per-candidate-set state shared by the scenarios that use it."""

    def __init__(self, candidates: Sequence[ModelEntry], cfg: BenchConfig):
        data = [c.data for c in candidates if c.data is not None]
        if not data:
            raise DataError("benchmark candidates need training data")
        self.binning = fit_binning(data, cfg.bins_per_dim)
        self.config = cfg.index.resolved()
        self.family = jsdlsh.new_family(self.config.seeds()["jsd"], self.config.K, self.config.L,
                                        self.config.r, self.binning.omega_size)
        self.index = None
        self.build_s = None
        self.signed = None
        self.preprocess_s = None

    def ensure_index(self, candidates, reps):
        if self.index is None:
            items = [(c.id, c.data, c.source_accuracy) for c in candidates]
            self.index, self.build_s = _timed(lambda: adaptivity.build_index(items, self.config, self.binning), reps)
        return self.index

    def ensure_signatures(self, candidates, reps):
        if self.signed is None:
            def sign():
                return [ModelEntry(c.id, None, c.source_accuracy, c.predictor,
                                   jsdlsh.hash_distribution(self.family, to_distribution(c.data, self.binning)))
                        for c in candidates]
            self.signed, self.preprocess_s = _timed(sign, reps)
        return self.signed


def _run_strategy(name: str, sc: BenchScenario, prep: _Prepared, cfg: BenchConfig):
    reps = cfg.repetitions
    cands = sc.candidates
    phases = {"preprocess": 0.0, "build": 0.0, "query": None}
    if name == "adaptivity":
        index = prep.ensure_index(cands, reps)
        phases["build"] = prep.build_s
        fn = lambda: strategies.rank_by_adaptivity(cands, sc.target, mode="index", index=index)
    elif name == "adaptivity-pairwise":
        fn = lambda: strategies.rank_by_adaptivity(cands, sc.target, mode="pairwise",
                                                   config=prep.config, binning=prep.binning)
    elif name == "js":
        fn = lambda: strategies.rank_by_js(cands, sc.target, prep.binning, mode="exact")
    elif name == "js-lsh":
        signed = prep.ensure_signatures(cands, reps)
        phases["preprocess"] = prep.preprocess_s
        fn = lambda: strategies.rank_by_js(signed, sc.target, prep.binning, mode="lsh", family=prep.family)
    elif name == "l2":
        fn = lambda: strategies.rank_by_l2(cands, sc.target)
    elif name == "voting":
        fn = lambda: strategies.rank_by_voting(cands, sc.target)
    elif name == "source-accuracy":
        fn = lambda: strategies.rank_by_source_accuracy(cands)
    else:
        raise ValueError(f"unknown strategy {name!r}")
    ranking, phases["query"] = _timed(fn, reps)
    return ranking, phases


def _pcc(ranking: Ranking, truth: dict) -> Optional[float]:
    ids = [mid for mid, _ in ranking.entries if mid in truth]
    if len(ids) < 2:
        return None
    try:
        return pearson([ranking.scores[i] for i in ids], [truth[i] for i in ids])
    except ValueError:
        return None


def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def run_benchmark(scenarios: Sequence[BenchScenario], cfg: Optional[BenchConfig] = None) -> BenchReport:
    """Rank every scenario's candidates with every strategy and score against ground truth.

    A strategy whose prerequisites fail on a scenario is recorded as an error
    for that scenario; the run continues.
    """
    cfg = cfg or BenchConfig()
    prepared = {}
    per = {name: {"scenarios": {}, "phases": []} for name in cfg.strategies}
    rankings = {}
    mode_rows = []
    for sc in scenarios:
        key = tuple(sorted(c.id for c in sc.candidates))
        if key not in prepared:
            prepared[key] = _Prepared(sc.candidates, cfg)
        prep = prepared[key]
        rankings[sc.id] = {}
        done = {}
        for name in cfg.strategies:
            try:
                ranking, phases = done[name] = _run_strategy(name, sc, prep, cfg)
            except (strategies.StrategyError, DataError) as exc:
                log.warning("scenario %s, strategy %s: %s", sc.id, name, exc)
                per[name]["scenarios"][sc.id] = {"error": str(exc)}
                continue
            rankings[sc.id][name] = ranking.to_json()
            pcc = _pcc(ranking, sc.target_accuracy) if sc.target_accuracy else None
            n = len(ranking.entries)
            per[name]["scenarios"][sc.id] = {
                "pcc": pcc,
                "abs_pcc": None if pcc is None else abs(pcc),
                "top": {str(k): strategies.top_k(ranking, k) for k in cfg.ks if k <= n},
                "best": sorted(sc.best),
            }
            per[name]["phases"].append(phases)

        if "adaptivity" in done:
            pw, pw_s = done.get("adaptivity-pairwise") or _run_strategy("adaptivity-pairwise", sc, prep, cfg)
            ix, ix_s = done["adaptivity"]
            best_pw = max(s for _, s in pw.entries)
            mode_rows.append({
                "scenario": sc.id,
                "pairwise_query_s": pw_s["query"],
                "index_query_s": ix_s["query"],
                "agree": ix.ids[0] in {m for m, s in pw.entries if s == best_pw},
            })

    report_strategies = {}
    for name, d in per.items():
        ok = {sid: v for sid, v in d["scenarios"].items() if "error" not in v}
        errors = {}
        for k in cfg.ks:
            usable = [v for v in ok.values() if str(k) in v["top"]]
            if usable:
                errors[str(k)] = top_k_error([v["top"][str(k)] for v in usable], [set(v["best"]) for v in usable], k)
        phases = d["phases"]
        report_strategies[name] = {
            "pcc_mean": _mean(v["pcc"] for v in ok.values()),
            "abs_pcc_mean": _mean(v["abs_pcc"] for v in ok.values()),
            "top_k_error": errors,
            "latency_s": {
                p: _mean(ph[p] for ph in phases) if phases else None
                for p in ("preprocess", "build", "query")
            },
            "scenarios": d["scenarios"],
        }

    modes = {}
    if mode_rows:
        pq = float(np.mean([r["pairwise_query_s"] for r in mode_rows]))
        iq = float(np.mean([r["index_query_s"] for r in mode_rows]))
        modes = {
            "pairwise_query_s": pq,
            "index_query_s": iq,
            "speedup": pq / iq if iq > 0 else None,
            "top1_agreement": float(np.mean([r["agree"] for r in mode_rows])),
            "per_scenario": mode_rows,
        }

    scen = {sc.id: {"candidates": sorted(c.id for c in sc.candidates), "best": sorted(sc.best),
                    "target_accuracy": dict(sorted(sc.target_accuracy.items()))} for sc in scenarios}
    config = {"index": asdict(cfg.index), "bins_per_dim": cfg.bins_per_dim, "ks": list(cfg.ks),
              "repetitions": cfg.repetitions, "strategies": list(cfg.strategies)}
    return BenchReport(report_strategies, scen, modes, config, rankings)


def synthetic_skew_scenarios(spec: dict) -> list:
    """Scenarios in the image-recognition shape: five class-skewed variants.

    Each variant is split into a training half (one nearest-centroid model per
    variant) and a held-out half that serves as the labeled target. Every
    scenario offers all models as candidates; ground truth is each model's
    accuracy on the target.
    """
    seed = int(spec.get("seed", 0))
    data = spec.get("data", {})
    base = labeled_blobs(int(data.get("n_classes", 10)), int(data.get("rows_per_class", 1200)),
                         int(data.get("n_dims", 6)), seed, spread=float(data.get("spread", 1.5)),
                         scale=float(data.get("scale", 1.0)))
    var = spec.get("variants", {})
    skews = [tuple(s) for s in var.get("skews", [[1, 3, 4.0], [2, 1, 4.0], [3, 7, 4.0], [4, 5, 4.0]])]
    n_variants = int(var.get("count", 5))
    corpus = make_skewed_corpus(base, n_variants, skews, seed + 1, var.get("rows_per_class", 200))
    names = var.get("names") or ["balanced"] + [f"skewed{i}" for i in range(1, n_variants)]
    train_fraction = float(spec.get("train_fraction", 0.5))
    rng = np.random.default_rng(seed + 2)

    # Training splits are trimmed to a common size: adaptivity counts matched
    # partitions, so a larger training set would otherwise look better by size alone.
    n_train = min(int(round(train_fraction * v.n_rows)) for v in corpus)
    models, targets = [], []
    for name, v in zip(names, corpus):
        perm = rng.permutation(v.n_rows)
        cut = int(round(train_fraction * v.n_rows))
        train = v.subset(perm[:cut][:n_train], id=name)
        test = v.subset(perm[cut:], id=name)
        predictor = NearestCentroid.fit(train, use_priors=True)
        models.append(ModelEntry(name, train.unlabeled(), predictor.accuracy(train), predictor))
        targets.append(test)

    scenarios = []
    for name, test in zip(names, targets):
        acc = {m.id: m.predictor.accuracy(test) for m in models}
        scenarios.append(BenchScenario(name, models, test.unlabeled(), acc))
    return scenarios


def read_accuracy_table(path: Union[str, Path]) -> dict:
    """``{scenario_id: {model_id: accuracy}}`` from a model_id,scenario_id,accuracy CSV."""
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"model_id", "scenario_id", "accuracy"}
        if reader.fieldnames is None or need - set(reader.fieldnames):
            raise DataError(f"{path}: expected columns {sorted(need)}")
        for line, rec in enumerate(reader, start=2):
            try:
                acc = float(rec["accuracy"])
            except ValueError:
                raise DataError(f"{path}: line {line}: bad accuracy {rec['accuracy']!r}") from None
            out.setdefault(rec["scenario_id"], {})[rec["model_id"]] = acc
    return out


def file_scenarios(spec: dict, base_dir: Path) -> list:
    """Scenarios built from CSV files listed in a scenario file."""
    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    accuracy = read_accuracy_table(resolve(spec["accuracy_table"]))
    scenarios = []
    for sc in spec["scenarios"]:
        target = load_csv(resolve(sc["target"]), sc.get("label_column")).unlabeled()
        models = []
        for m in spec["models"]:
            train = load_csv(resolve(m["train"]), m.get("label_column"), id=m["id"])
            predictor = None
            preds = m.get("predictions", {}).get(sc["id"])
            if preds:
                predictor = FilePredictions(resolve(preds))
            elif train.labels is not None:
                predictor = NearestCentroid.fit(train)
            acc = m.get("source_accuracy")
            if acc is None and isinstance(predictor, NearestCentroid):
                acc = predictor.accuracy(train)
            models.append(ModelEntry(m["id"], train.unlabeled(), acc, predictor))
        scenarios.append(BenchScenario(sc["id"], models, target, accuracy.get(sc["id"], {}), sc.get("best")))
    return scenarios


def config_from_spec(spec: dict) -> BenchConfig:
    index = IndexConfig(**spec.get("index", {}))
    return BenchConfig(
        index=index,
        bins_per_dim=int(spec.get("bins_per_dim", 8)),
        ks=tuple(spec.get("k", (1, 2, 3))),
        repetitions=int(spec.get("repetitions", 5)),
        strategies=tuple(spec.get("strategies", DEFAULT_STRATEGIES)),
    )


def scenarios_from_spec(spec: dict, base_dir: Path = Path(".")) -> list:
    kind = spec.get("kind", "synthetic-skew")
    if kind == "synthetic-skew":
        return synthetic_skew_scenarios(spec)
    if kind == "files":
        return file_scenarios(spec, base_dir)
    raise DataError(f"unknown scenario kind {kind!r}")


def write_report(report: BenchReport, out_dir: Union[str, Path], figures: bool = True) -> dict:
    """Write report.json, report.txt, summary.csv, rankings.json and (optionally) PNG figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / "report.json",
        "text": out_dir / "report.txt",
        "csv": out_dir / "summary.csv",
        "rankings": out_dir / "rankings.json",
    }
    paths["json"].write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["text"].write_text(report.text_table(), encoding="utf-8")
    paths["rankings"].write_text(report.rankings_json(), encoding="utf-8")
    with paths["csv"].open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(report.summary_rows())
    if figures:
        from .plotting import render_report_figures
        paths.update(render_report_figures(report, out_dir))
    return {k: str(v) for k, v in paths.items()}
