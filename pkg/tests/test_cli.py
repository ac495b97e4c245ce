import hashlib
import json

import pytest

from modelscout.cli import main
from modelscout.dataio import Dataset, save_csv
from modelscout.store import ProjectStore
from modelscout.synthetic import adaptivity_corpus


@pytest.fixture
def project(tmp_path):
    """Three labeled sources, a copy of the largest one, and a small project config."""
    target, sources = adaptivity_corpus(0, n_models=3)
    for s in sources:
        save_csv(Dataset(s.id, s.features, (s.features[:, 0] > 0).astype(int)), tmp_path / f"{s.id}.csv")
    biggest = max(sources, key=lambda s: s.n_rows)
    save_csv(Dataset("copy", biggest.features), tmp_path / "copy.csv")
    save_csv(target, tmp_path / "target.csv")
    root = tmp_path / "proj"
    root.mkdir()
    (root / "config.json").write_text(json.dumps({"r": 0.5, "t": 0.04, "L_m": 256}))
    return tmp_path, root, [s.id for s in sources], biggest.id


def run(root, *args):
    return main(["--root", str(root), *map(str, args)])


def register_all(tmp, root, ids, signatures_only=()):
    for mid in ids:
        extra = ["--signatures-only"] if mid in signatures_only else []
        assert run(root, "register", tmp / f"{mid}.csv", "--labels-column", "label", *extra) == 0


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_register_and_list(project, capsys):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids[:2])
    capsys.readouterr()
    assert run(root, "list", "--json") == 0
    listed = json.loads(capsys.readouterr().out)
    assert [r["id"] for r in listed] == ids[:2]
    assert run(root, "register", tmp / f"{ids[0]}.csv") == 1
    assert "already registered" in capsys.readouterr().err


def test_register_with_explicit_id_and_accuracy(project):
    tmp, root, ids, _ = project
    assert run(root, "register", tmp / f"{ids[0]}.csv", "--id", "custom", "--source-accuracy", "0.42") == 0
    rec = ProjectStore(root).read_registry()[0]
    assert rec["id"] == "custom" and rec["source_accuracy"] == 0.42 and rec["predictor"] is None
    assert run(root, "register", tmp / f"{ids[1]}.csv", "--source-accuracy", "1.5") == 1


def test_signatures_only_keeps_no_copy(project):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids, signatures_only={ids[0]})
    assert not (root / "datasets" / f"{ids[0]}.csv").exists()
    assert (root / "datasets" / f"{ids[1]}.csv").exists()
    assert (root / "binning.json").exists()


def test_build_index_manifest_and_determinism(project):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids)
    assert run(root, "build-index", "--nu", "auto") == 0
    manifest = json.loads((root / "index" / "manifest.json").read_text())
    assert manifest["models"] == sorted(ids)
    counts = [-(-r["n_rows"] // 50) for r in ProjectStore(root).read_registry()]
    assert manifest["n_u"] == max(counts)
    assert manifest["config"]["r"] == 0.5
    first = sha(root / "index" / "tables.jsonl")
    assert run(root, "build-index", "--nu", "auto") == 0
    assert sha(root / "index" / "tables.jsonl") == first


def test_config_precedence_and_env_seed(project, monkeypatch):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids)
    assert run(root, "build-index", "--r", "0.7") == 0
    manifest = json.loads((root / "index" / "manifest.json").read_text())
    assert manifest["config"]["r"] == 0.7 and manifest["config"]["L_m"] == 256
    monkeypatch.setenv("MODEL_SCOUT_SEED", "123")
    assert run(root, "build-index") == 0
    assert json.loads((root / "index" / "manifest.json").read_text())["config"]["seed"] == 123
    assert run(root, "build-index", "--seed", "5") == 0
    assert json.loads((root / "index" / "manifest.json").read_text())["config"]["seed"] == 5


def test_build_index_rejects_small_nu(project, capsys):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids)
    assert run(root, "build-index", "--nu", "2") == 1
    assert "n_u" in capsys.readouterr().err
    assert run(root, "build-index", "--nu", "zero") == 1


def test_query_copy_ranks_first(project, capsys):
    tmp, root, ids, biggest = project
    register_all(tmp, root, ids)
    run(root, "build-index")
    capsys.readouterr()
    assert run(root, "query", tmp / "copy.csv", "--strategy", "adaptivity", "--json") == 0
    out = json.loads(capsys.readouterr().out)
    block = out["results"][0]
    assert block["strategy"] == "adaptivity-index"
    assert block["ranking"][0] == {"model": biggest, "rank": 1, "score": 1.0}


def test_query_all_blocks_and_k(project, capsys):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids)
    run(root, "build-index")
    capsys.readouterr()
    assert run(root, "query", tmp / "target.csv", "--strategy", "all", "--k", "3") == 0
    text = capsys.readouterr().out
    blocks = [b for b in text.split("== ")[1:]]
    assert len(blocks) == 5
    for b in blocks:
        rows = [line for line in b.splitlines()[2:] if line and line[0].isdigit()]
        assert len(rows) == 3
    saved = json.loads((root / "reports" / "query-target.json").read_text())
    assert [r["strategy"] for r in saved["results"]] == [
        "adaptivity-index", "js-lsh", "l2", "voting", "source-accuracy"]
    assert all(len(r["ranking"]) == 3 for r in saved["results"])


def test_query_signatures_only_unavailable_in_exact_mode(project, capsys):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids, signatures_only={ids[0]})
    assert run(root, "build-index") == 0
    capsys.readouterr()
    assert run(root, "query", tmp / "target.csv", "--strategy", "all", "--exact", "--json") == 0
    out = {r["strategy"]: r for r in json.loads(capsys.readouterr().out)["results"]}
    assert out["js-exact"]["unavailable"] == {ids[0]: "unavailable (signatures-only)"}
    assert out["adaptivity-pairwise"]["unavailable"] == {ids[0]: "unavailable (signatures-only)"}
    assert ids[0] in {e["model"] for e in out["l2"]["ranking"]}
    # the LSH path still covers the signatures-only model
    assert run(root, "query", tmp / "target.csv", "--strategy", "js", "--json") == 0
    lsh = json.loads(capsys.readouterr().out)["results"][0]
    assert ids[0] in {e["model"] for e in lsh["ranking"]}


def test_signatures_only_settings_change_is_rejected(project, capsys):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids, signatures_only={ids[0]})
    assert run(root, "build-index", "--r", "0.9") == 1
    assert "signatures-only" in capsys.readouterr().err


def test_stale_index_and_read_only_commands(project, capsys):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids[:2])
    run(root, "build-index")
    before = sha(root / "registry.jsonl")
    run(root, "query", tmp / "target.csv", "--strategy", "all")
    run(root, "list")
    assert sha(root / "registry.jsonl") == before
    register_all(tmp, root, ids[2:])
    capsys.readouterr()
    assert run(root, "query", tmp / "target.csv") == 1
    assert "stale" in capsys.readouterr().err


def test_query_without_index(project, capsys):
    tmp, root, ids, _ = project
    register_all(tmp, root, ids)
    assert run(root, "query", tmp / "target.csv", "--strategy", "l2") == 0
    assert run(root, "query", tmp / "target.csv", "--strategy", "adaptivity") == 1
    assert "build-index" in capsys.readouterr().err


def test_bench_bundled(tmp_path, capsys):
    assert main(["--root", str(tmp_path), "bench", "--out", str(tmp_path / "a")]) == 0
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert set(report["strategies"]) == {"adaptivity", "js", "l2", "voting", "source-accuracy"}
    for s in report["strategies"].values():
        assert s["pcc_mean"] is not None
        assert {"1", "2"} <= set(s["top_k_error"])
    assert (tmp_path / "a" / "pcc.png").exists()
    assert main(["--root", str(tmp_path), "bench", "--out", str(tmp_path / "b"), "--no-figures"]) == 0
    assert sha(tmp_path / "a" / "rankings.json") == sha(tmp_path / "b" / "rankings.json")


@pytest.mark.parametrize("text, line, fragment", [
    ('{\n  "kind": "synthetic-skew",\n  "seed": "x"\n}\n', 3, "seed"),
    ('{\n  "kind": "synthetic-skew",\n  "seed": 1,\n}\n', 4, "double quotes"),
    ('{\n  "index": {\n    "partition_size": 50,\n    "bogus": 1\n  }\n}\n', 2, "bogus"),
    ('{\n  "kind": "files"\n}\n', 1, "accuracy_table"),
])
def test_bench_schema_errors(tmp_path, capsys, text, line, fragment):
    p = tmp_path / "bad.json"
    p.write_text(text)
    assert main(["--root", str(tmp_path), "bench", str(p)]) == 1
    err = capsys.readouterr().err
    assert f"line {line}:" in err and fragment in err
