import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modelscout import adaptivity as ad
from modelscout.adaptivity import IndexConfig
from modelscout.dataio import DataError, Dataset, fit_binning
from modelscout.hashing import TOP_BIT

SMALL = IndexConfig(partition_size=20, t=0.05, r=0.5, K=40, L=10, K_m=32, L_m=16, seed=3)


def blob(id, n, loc, seed, dims=2):
    rng = np.random.default_rng(seed)
    return Dataset(id, rng.normal(loc, 0.5, size=(n, dims)))


@pytest.mark.parametrize("n, s, sizes", [(10, 3, [3, 3, 3, 1]), (6, 3, [3, 3])])
def test_partition_sizes(n, s, sizes):
    parts = ad.partition(Dataset("d", np.zeros((n, 1))), s, seed=0)
    assert [len(b) for b in parts.blocks] == sizes
    assert sorted(np.concatenate(parts.blocks).tolist()) == list(range(n))


def test_partition_deterministic_and_validated():
    d = Dataset("d", np.zeros((25, 1)))
    a, b = ad.partition(d, 4, 9), ad.partition(d, 4, 9)
    assert all(np.array_equal(x, y) for x, y in zip(a.blocks, b.blocks))
    with pytest.raises(ValueError):
        ad.partition(d, 0, 0)


def test_pairwise_identity_and_disjoint():
    a = blob("a", 200, 0.0, 1)
    far = blob("far", 200, 50.0, 2)
    binning = fit_binning([a, far], 10)
    pa = ad.partition(a, 20, 0)
    assert ad.adaptivity_pairwise(a, pa, a, pa, 0.01, binning) == 1.0
    assert ad.adaptivity_pairwise(far, ad.partition(far, 20, 0), a, pa, 0.01, binning) == 0.0
    with pytest.raises(ValueError):
        ad.adaptivity_pairwise(a, pa, a, pa, 0.0, binning)


def planted(seed=0):
    """Superset = target rows followed by disjoint rows, with partitions aligned on the shared part."""
    target = blob("target", 200, 0.0, seed)
    extra = blob("extra", 200, 30.0, seed + 1)
    superset = Dataset("superset", np.vstack([target.features, extra.features]))
    blocks = tuple(np.arange(i, i + 20) for i in range(0, 400, 20))
    return target, superset, ad.PartitionSet("target", blocks[:10], 20, 0), ad.PartitionSet("superset", blocks, 20, 0)


def test_asymmetry_planted():
    target, superset, tp, sp = planted()
    binning = fit_binning([target, superset], 8)
    assert ad.adaptivity_pairwise(superset, sp, target, tp, 0.01, binning) == 1.0
    assert ad.adaptivity_pairwise(target, tp, superset, sp, 0.01, binning) == 0.5


def test_conversion_examples():
    assert ad.adaptivity_to_jaccard(0.5, 4, 4) == pytest.approx(1 / 3)
    assert ad.adaptivity_to_jaccard(1.0, 4, 4) == 1.0
    assert ad.adaptivity_to_jaccard(0.0, 3, 7) == 0.0
    with pytest.raises(ValueError):
        ad.adaptivity_to_jaccard(1.5, 1, 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.integers(1, 500), st.integers(1, 500))
def test_conversion_round_trip(a, n, m):
    assert ad.jaccard_to_adaptivity(ad.adaptivity_to_jaccard(a, n, m), n, m) == pytest.approx(a, abs=1e-12)


def test_alg_threshold_example():
    assert ad.alg_threshold(0.6, 4, 10, 5) == pytest.approx(1.0, abs=1e-15)


def test_flatten_padding_counts():
    rng = np.random.default_rng(0)
    d = rng.integers(0, 2**63, size=(3, 2), dtype=np.uint64)
    toks = ad.flatten(d, n_u=5, namespace="m")
    real = ad.flatten(d)
    assert len(real) == 6
    assert len(toks) == 6 + 4
    assert np.all(real < TOP_BIT) and np.all(np.setdiff1d(toks, real) >= TOP_BIT)
    assert len(ad.flatten(d, n_u=3, namespace="m")) == 6
    with pytest.raises(DataError):
        ad.flatten(d, n_u=2, namespace="m")


def test_flatten_namespaces_keep_padding_disjoint():
    d = np.arange(8, dtype=np.uint64).reshape(4, 2)
    a = ad.flatten(d, n_u=9, namespace="a")
    b = ad.flatten(d, n_u=9, namespace="b")
    real = set(ad.flatten(d).tolist())
    assert real <= set(a.tolist()) and real <= set(b.tolist())
    assert set(a.tolist()) & set(b.tolist()) == real


def test_same_digest_in_different_bands_gives_different_tokens():
    d = np.array([[5, 5]], dtype=np.uint64)
    assert len(ad.flatten(d)) == 2


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 6), st.integers(1, 4))
def test_flattening_bound(seed, n, m, L):
    """Set-level Jaccard of partition signatures is at most L times the token Jaccard."""
    rng = np.random.default_rng(seed)
    pool = rng.integers(0, 4, size=(8, L)).astype(np.uint64)
    A = pool[rng.choice(8, n)]
    B = pool[rng.choice(8, m)]
    sa, sb = {tuple(r) for r in A.tolist()}, {tuple(r) for r in B.tolist()}
    j_set = len(sa & sb) / len(sa | sb)
    ta, tb = set(ad.flatten(A).tolist()), set(ad.flatten(B).tolist())
    j_tok = len(ta & tb) / len(ta | tb)
    assert j_set <= L * j_tok + 1e-9


def corpus():
    models = [blob(f"m{i}", 100 + 20 * i, float(i), i) for i in range(3)]
    binning = fit_binning(models, 6)
    return models, binning


def test_single_model_tables():
    models, binning = corpus()
    idx = ad.build_index([("m0", models[0], 0.9)], SMALL, binning)
    sig = idx.models["m0"].signature
    for i, table in enumerate(idx.tables):
        assert table == {int(sig.bands[i]): {"m0"}}


def test_identical_models_differ_only_by_padding():
    models, binning = corpus()
    same = Dataset("x", models[0].features)
    no_pad = ad.build_index([("a", same, None), ("b", same, None)], SMALL, binning)
    assert no_pad.models["a"].signature == no_pad.models["b"].signature
    padded = ad.build_index([("a", same, None), ("b", same, None), ("big", models[2], None)], SMALL, binning)
    assert padded.models["a"].signature != padded.models["b"].signature


def test_build_errors():
    models, binning = corpus()
    with pytest.raises(DataError, match="duplicate"):
        ad.build_index([("a", models[0], None), ("a", models[1], None)], SMALL, binning)
    with pytest.raises(DataError, match="n_u"):
        ad.build_index([("a", models[2], None)], IndexConfig(**{**SMALL.__dict__, "n_u": 2}), binning)


def test_query_exact_copy_and_nu_auto():
    models, binning = corpus()
    idx = ad.build_index([(d.id, d, None) for d in models], SMALL, binning)
    assert idx.n_u == max(len(ad.partition(d, 20, 0)) for d in models)
    # the largest model needs no padding, so its copy reproduces every band
    res = ad.query(idx, Dataset("copy", models[2].features))
    assert res.fractions["m2"] == 1.0
    assert res.ranked()[0] == ("m2", 1.0)
    assert set(res.fractions) == {"m0", "m1", "m2"}


def test_query_disjoint_target_selects_nothing():
    models, binning = corpus()
    idx = ad.build_index([(d.id, d, None) for d in models], SMALL, binning)
    res = ad.query(idx, blob("far", 100, 99.0, 5), t_prime=0.9)
    assert res.selected == frozenset()
    with pytest.raises(ValueError):
        ad.query(idx, models[0], t_prime=0.0)


def test_threshold_cap_and_fractions():
    models, binning = corpus()
    idx = ad.build_index([(d.id, d, None) for d in models], SMALL, binning)
    res = ad.query(idx, models[1], t_prime=0.6)
    assert res.t_star > 1.0
    assert res.threshold == (SMALL.L_m - 1) / SMALL.L_m
    assert len(res.fractions) == 3


def test_save_load_round_trip(tmp_path):
    models, binning = corpus()
    idx = ad.build_index([(d.id, d, 0.5) for d in models], SMALL, binning)
    ad.save_index(idx, tmp_path / "ix", extra={"note": "x"})
    manifest = json.loads((tmp_path / "ix" / "manifest.json").read_text())
    assert manifest["models"] == ["m0", "m1", "m2"] and manifest["note"] == "x"
    back = ad.load_index(tmp_path / "ix")
    assert back.tables == idx.tables
    assert back.n_u == idx.n_u
    target = blob("t", 80, 1.0, 42)
    assert ad.query(back, target).fractions == ad.query(idx, target).fractions


def test_auto_bands_resolution():
    cfg = IndexConfig(t=0.1, r=1.4, K=800, L="auto").resolved()
    assert cfg.K % cfg.L == 0 and cfg.K >= 800


def test_stored_digests_are_accepted():
    models, binning = corpus()
    jf, _ = ad.make_families(SMALL, binning.omega_size)
    digests = ad.partition_digests(models[0], SMALL, binning, jf)
    a = ad.build_index([("m0", models[0], None)], SMALL, binning)
    b = ad.build_index([("m0", digests, None)], SMALL, binning)
    assert a.models["m0"].signature == b.models["m0"].signature
