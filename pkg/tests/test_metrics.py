import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modelscout.dataio import DataError, Dataset, ProbDistribution
from modelscout.metrics import js_divergence, js_matrix, kl_divergence, l2_center_distance

# Hand-evaluated reference values; see the docstring of each test.
KL_HALF_QUARTER = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)


def js_reference(p, q):
    """Unsmoothed textbook JS divergence, with 0*log 0 = 0."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    m = 0.5 * (p + q)

    def kl(a, b):
        nz = a > 0
        return float(np.sum(a[nz] * np.log(a[nz] / b[nz])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def test_kl_identity():
    p = ProbDistribution([0.5, 0.5])
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)


def test_kl_worked_value():
    """0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75)."""
    val = kl_divergence(ProbDistribution([0.5, 0.5]), ProbDistribution([0.25, 0.75]))
    assert val == pytest.approx(KL_HALF_QUARTER, abs=1e-8)
    assert val == pytest.approx(0.14384, abs=1e-5)


def test_kl_disjoint_is_finite():
    val = kl_divergence(ProbDistribution([1.0, 0.0]), ProbDistribution([0.0, 1.0]))
    assert math.isfinite(val)
    assert val == pytest.approx(math.log(1e10), rel=0.01)


def test_js_worked_values():
    assert js_divergence(ProbDistribution([1.0, 0.0]), ProbDistribution([0.0, 1.0])) == pytest.approx(math.log(2), abs=1e-8)
    val = js_divergence(ProbDistribution([0.5, 0.5]), ProbDistribution([0.25, 0.75]))
    assert val == pytest.approx(js_reference([0.5, 0.5], [0.25, 0.75]), abs=1e-9)
    # M = (0.375, 0.625): 0.5 * (0.032271 + 0.035373)
    assert val == pytest.approx(0.033822, abs=1e-6)


def test_omega_mismatch():
    with pytest.raises(DataError):
        js_divergence(ProbDistribution([1.0]), ProbDistribution([0.5, 0.5]))
    with pytest.raises(DataError):
        kl_divergence(ProbDistribution([1.0]), ProbDistribution([0.5, 0.5]))


def test_js_matrix_matches_scalar():
    rng = np.random.default_rng(1)
    P = rng.dirichlet(np.ones(6), size=5)
    Q = rng.dirichlet(np.ones(6), size=7)
    M = js_matrix(P, Q, chunk=2)
    assert M.shape == (5, 7)
    for i in range(5):
        for j in range(7):
            assert M[i, j] == pytest.approx(js_divergence(ProbDistribution(P[i]), ProbDistribution(Q[j])), abs=1e-12)


dist = st.integers(2, 12).flatmap(
    lambda n: st.tuples(st.integers(0, 2**31), st.just(n), st.floats(0.05, 5.0)))


@settings(max_examples=100, deadline=None)
@given(dist)
def test_js_properties(args):
    seed, n, alpha = args
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.full(n, alpha), size=2)
    p[rng.random(n) < 0.3] = 0.0
    if p.sum() == 0:
        p[0] = 1.0
    p /= p.sum()
    P, Q = ProbDistribution(p), ProbDistribution(q)
    d = js_divergence(P, Q)
    assert 0.0 <= d <= math.log(2.0)
    assert d == js_divergence(Q, P)
    assert js_divergence(P, P) == pytest.approx(0.0, abs=1e-12)
    assert d == pytest.approx(js_reference(p, q), abs=1e-7)
    assert kl_divergence(P, Q) >= -1e-12


def test_l2_examples():
    a = Dataset("a", [[0.0, 0.0]])
    b = Dataset("b", [[3.0, 4.0]])
    assert l2_center_distance(a, a) == 0.0
    assert l2_center_distance(a, b) == pytest.approx(5.0)
    assert l2_center_distance(Dataset("c", [[0.0, 0.0], [2.0, 0.0]]), Dataset("d", [[1.0, 1.0]])) == pytest.approx(1.0)


def test_l2_dimension_mismatch():
    with pytest.raises(DataError):
        l2_center_distance(Dataset("a", [[0.0]]), Dataset("b", [[0.0, 1.0]]))
