"""``modelscout`` command line: register models, build the index, query, benchmark."""

import argparse
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from . import adaptivity, evalbench
from .dataio import DataError, load_csv
from .store import ProjectStore, StoreError, dumps
from .strategies import (StrategyError, rank_by_adaptivity, rank_by_js, rank_by_l2,
                         rank_by_source_accuracy, rank_by_voting)

QUERY_STRATEGIES = ("adaptivity", "js", "l2", "voting", "source-accuracy")

SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["synthetic-skew", "files"]},
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "bins_per_dim": {"type": "integer", "minimum": 1},
        "k": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "repetitions": {"type": "integer", "minimum": 1},
        "strategies": {"type": "array", "items": {"enum": list(evalbench.ALL_STRATEGIES)}},
        "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "index": {
            "type": "object",
            "properties": {
                "partition_size": {"type": "integer", "minimum": 1},
                "t": {"type": "number", "exclusiveMinimum": 0},
                "t_prime": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "r": {"type": "number", "exclusiveMinimum": 0},
                "K": {"type": "integer", "minimum": 1},
                "L": {"anyOf": [{"type": "integer", "minimum": 1}, {"const": "auto"}]},
                "K_m": {"type": "integer", "minimum": 1},
                "L_m": {"type": "integer", "minimum": 1},
                "n_u": {"anyOf": [{"type": "integer", "minimum": 1}, {"const": "auto"}, {"type": "null"}]},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "data": {
            "type": "object",
            "properties": {
                "n_classes": {"type": "integer", "minimum": 2},
                "rows_per_class": {"type": "integer", "minimum": 1},
                "n_dims": {"type": "integer", "minimum": 1},
                "spread": {"type": "number", "exclusiveMinimum": 0},
                "scale": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "variants": {
            "type": "object",
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "names": {"type": "array", "items": {"type": "string"}},
                "skews": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3}},
                "rows_per_class": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "accuracy_table": {"type": "string"},
        "models": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "train"],
                "properties": {
                    "id": {"type": "string"},
                    "train": {"type": "string"},
                    "label_column": {"type": "string"},
                    "source_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                    "predictions": {"type": "object", "additionalProperties": {"type": "string"}},
                },
            },
        },
        "scenarios": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "target"],
                "properties": {
                    "id": {"type": "string"},
                    "target": {"type": "string"},
                    "label_column": {"type": "string"},
                    "best": {"anyOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}}]},
                },
            },
        },
    },
    "additionalProperties": False,
    "if": {"properties": {"kind": {"const": "files"}}, "required": ["kind"]},
    "then": {"required": ["accuracy_table", "models", "scenarios"]},
}


class CliError(Exception):
    pass


def _line_of(text: str, path) -> int:
    """Best-effort line number for a JSON path: walk the keys in textual order."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            hit = text.find(json.dumps(key), pos)
            if hit >= 0:
                pos = hit
    return text.count("\n", 0, pos) + 1


def load_scenario_file(path) -> tuple:
    """Parse and validate a scenario file; errors name the offending line."""
    if path is None:
        text = resources.files("modelscout").joinpath("data/synthetic_skew.json").read_text(encoding="utf-8")
        base = Path(".")
        name = "synthetic_skew.json"
    else:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot read scenario file: {exc}") from None
        base = path.parent
        name = str(path)
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{name}: line {exc.lineno}: {exc.msg}") from None
    errors = sorted(jsonschema.Draft202012Validator(SCENARIO_SCHEMA).iter_errors(spec),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise CliError(f"{name}: line {_line_of(text, err.absolute_path)}: schema error at {where}: {err.message}")
    return spec, base


# register / list


def cmd_register(store: ProjectStore, args) -> int:
    rec = store.register(args.dataset, args.id, args.source_accuracy, args.predictions,
                         args.labels_column, args.signatures_only)
    mode = "signatures only" if rec["signatures_only"] else "dataset copied"
    print(f"registered {rec['id']} ({rec['n_rows']} rows, {rec['n_dims']} dims, {mode})")
    return 0


def cmd_list(store: ProjectStore, args) -> int:
    registry = store.read_registry()
    if args.json:
        print(dumps([_summary(r) for r in registry]))
        return 0
    rows = [["id", "rows", "dims", "source acc", "predictor", "storage"]]
    for r in registry:
        s = _summary(r)
        rows.append([s["id"], str(s["n_rows"]), str(s["n_dims"]),
                     "n/a" if s["source_accuracy"] is None else f"{s['source_accuracy']:.3f}",
                     s["predictor"] or "none", s["storage"]])
    print(_align(rows))
    return 0


def _summary(r: dict) -> dict:
    p = r.get("predictor")
    return {"id": r["id"], "n_rows": r["n_rows"], "n_dims": r["n_dims"],
            "source_accuracy": r.get("source_accuracy"),
            "predictor": p["kind"] if p else None,
            "storage": "signatures-only" if r.get("signatures_only") else "dataset"}


# build-index


def _overrides(args) -> dict:
    out = {
        "partition_size": args.partition_size, "t": args.t, "t_prime": args.t_prime, "r": args.r,
        "K": args.K, "K_m": args.Km, "L_m": args.Lm, "seed": args.seed, "bins_per_dim": args.bins,
    }
    if args.L is not None:
        out["L"] = args.L if args.L == "auto" else _positive_int(args.L, "--L")
    if args.nu is not None:
        out["n_u"] = args.nu if args.nu == "auto" else _positive_int(args.nu, "--nu")
    return out


def _positive_int(text: str, flag: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise CliError(f"{flag} expects 'auto' or a positive integer, got {text!r}") from None
    if v < 1:
        raise CliError(f"{flag} must be positive")
    return v


def cmd_build_index(store: ProjectStore, args) -> int:
    cfg, bins = store.settings(_overrides(args))
    snapshot = store.registry_hash()
    registry = store.read_registry()
    if not registry:
        raise CliError("registry is empty; register models first")
    binning = store.binning_for(bins)
    entries = store.entries(cfg, binning)
    models = []
    for e in entries:
        data = e.data if e.data is not None else e.partition_digests
        models.append((e.id, data, e.source_accuracy))
    start = time.perf_counter()
    index = adaptivity.build_index(models, cfg, binning)
    elapsed = time.perf_counter() - start
    adaptivity.save_index(index, store.index_dir,
                          extra={"registry_hash": snapshot, "bins_per_dim": bins})
    print(f"indexed {len(index.models)} models in {elapsed:.2f}s "
          f"(L={index.config.L}, K={index.config.K}, L_m={index.config.L_m}, n_u={index.n_u})")
    return 0


# query


def _load_fresh_index(store: ProjectStore):
    manifest = adaptivity.read_manifest(store.index_dir)
    if manifest.get("registry_hash") != store.registry_hash():
        raise CliError("index is stale (registry changed since build-index); rerun build-index")
    return adaptivity.load_index(store.index_dir)


def cmd_query(store: ProjectStore, args) -> int:
    target = load_csv(args.target, args.labels_column).unlabeled()
    names = QUERY_STRATEGIES if args.strategy == "all" else (args.strategy,)
    if args.k < 1:
        raise CliError("--k must be at least 1")
    mode = "exact" if args.exact else "lsh"

    index = None
    if (store.index_dir / "manifest.json").exists():
        index = _load_fresh_index(store)
    needs_index = any(n in ("adaptivity", "js") for n in names)
    if index is None and needs_index:
        raise CliError("no index built; run build-index first")
    if index is not None:
        cfg, binning = index.config, index.binning
        entries = store.entries(cfg, binning)
    else:
        entries = store.entries()
    if not entries:
        raise CliError("registry is empty")

    blocks = []
    for name in names:
        if name == "adaptivity":
            if mode == "exact":
                ranking = rank_by_adaptivity(entries, target, mode="pairwise", config=cfg, binning=binning,
                                             skip_missing=True)
            else:
                ranking = rank_by_adaptivity(entries, target, args.t_prime, mode="index", index=index,
                                             skip_missing=True)
        elif name == "js":
            ranking = rank_by_js(entries, target, binning, mode=mode, family=index.jsd_family, skip_missing=True)
        elif name == "l2":
            ranking = rank_by_l2(entries, target, skip_missing=True)
        elif name == "voting":
            ranking = rank_by_voting(entries, target, skip_missing=True)
        else:
            ranking = rank_by_source_accuracy(entries, skip_missing=True)
        blocks.append(ranking)

    report = {
        "target": str(args.target),
        "target_rows": target.n_rows,
        "mode": mode,
        "k": args.k,
        "results": [_block_json(r, args.k) for r in blocks],
    }
    store.reports_dir.mkdir(parents=True, exist_ok=True)
    out = store.reports_dir / f"query-{Path(args.target).stem}.json"
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.json:
        print(dumps(report))
    else:
        for r in blocks:
            print(_block_text(r, args.k))
        print(f"report: {out}")
    return 0


def _block_json(ranking, k: int) -> dict:
    full = ranking.to_json()
    full["ranking"] = full["ranking"][:k]
    return full


def _block_text(ranking, k: int) -> str:
    orient = "higher is better" if ranking.higher_better else "lower is better"
    rows = [["rank", "model", "score"]]
    for i, (mid, s) in enumerate(ranking.entries[:k], start=1):
        rows.append([str(i), mid, f"{s:.6g}"])
    lines = [f"== {ranking.strategy} ({orient}) ==", _align(rows)]
    for mid, why in sorted(ranking.unavailable.items()):
        lines.append(f"  {mid}: {why}")
    if ranking.extra.get("selected") is not None:
        sel = ", ".join(ranking.extra["selected"]) or "none"
        lines.append(f"  above threshold {ranking.extra['threshold']:.4g}: {sel}")
    return "\n".join(lines) + "\n"


def _align(rows: list) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


# bench


def cmd_bench(store: ProjectStore, args) -> int:
    spec, base = load_scenario_file(args.scenario)
    try:
        cfg = evalbench.config_from_spec(spec)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad scenario config: {exc}") from None
    scenarios = evalbench.scenarios_from_spec(spec, base)
    start = time.perf_counter()
    report = evalbench.run_benchmark(scenarios, cfg)
    elapsed = time.perf_counter() - start
    out_dir = Path(args.out) if args.out else store.reports_dir / f"bench-{spec.get('name', 'run')}"
    paths = evalbench.write_report(report, out_dir, figures=not args.no_figures)
    if args.json:
        print(dumps(report.to_json()))
    else:
        print(report.text_table(), end="")
        print(f"\n{len(scenarios)} scenarios in {elapsed:.2f}s; report: {paths['json']}")
    return 0


# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modelscout", description=__doc__)
    p.add_argument("--root", default=".", help="project directory (default: current directory)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("register", help="add a model and its training data to the registry")
    r.add_argument("dataset")
    r.add_argument("--id")
    r.add_argument("--source-accuracy", type=float)
    src = r.add_mutually_exclusive_group()
    src.add_argument("--predictions", help="CSV of row_index,label predictions on the intended target")
    src.add_argument("--labels-column", help="label column; a nearest-centroid predictor is fitted")
    r.add_argument("--signatures-only", action="store_true",
                   help="store LSH signatures instead of a dataset copy")
    r.set_defaults(func=cmd_register)

    ls = sub.add_parser("list", help="show registered models")
    ls.add_argument("--json", action="store_true")
    ls.set_defaults(func=cmd_list)

    b = sub.add_parser("build-index", help="build the two-level adaptivity index")
    b.add_argument("--partition-size", type=int)
    b.add_argument("--t", type=float, help="partition-level JS threshold")
    b.add_argument("--t-prime", type=float, help="default adaptivity threshold")
    b.add_argument("--r", type=float, help="JSD-LSH bucket width")
    b.add_argument("--K", type=int, help="raw JSD-LSH hashes per partition")
    b.add_argument("--L", help="JSD-LSH bands, or 'auto'")
    b.add_argument("--Km", type=int, help="MinHash functions")
    b.add_argument("--Lm", type=int, help="MinHash bands")
    b.add_argument("--nu", help="padding target: 'auto' or a partition count")
    b.add_argument("--seed", type=int)
    b.add_argument("--bins", type=int, help="histogram bins per feature")
    b.set_defaults(func=cmd_build_index)

    q = sub.add_parser("query", help="rank registered models for an unlabeled target")
    q.add_argument("target")
    q.add_argument("--strategy", choices=QUERY_STRATEGIES + ("all",), default="adaptivity")
    q.add_argument("--k", type=int, default=5)
    q.add_argument("--t-prime", type=float)
    q.add_argument("--labels-column", help="drop this column from the target if present")
    how = q.add_mutually_exclusive_group()
    how.add_argument("--exact", action="store_true", help="exact JS and pairwise adaptivity")
    how.add_argument("--lsh", action="store_true", help="JSD-LSH and the two-level index (default)")
    q.add_argument("--json", action="store_true", help="print JSON instead of tables")
    q.set_defaults(func=cmd_query)

    be = sub.add_parser("bench", help="run a benchmark scenario file")
    be.add_argument("scenario", nargs="?", help="scenario JSON (default: bundled synthetic skew)")
    be.add_argument("--out", help="report directory (default: <root>/reports/bench-<name>)")
    be.add_argument("--no-figures", action="store_true")
    be.add_argument("--json", action="store_true")
    be.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    store = ProjectStore(args.root)
    try:
        return args.func(store, args)
    except (CliError, StoreError, DataError, StrategyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
