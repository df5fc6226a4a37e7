import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairclust import metrics
from fairclust.errors import ShapeError


def labels_from_table(counts):
    counts = np.asarray(counts)
    a, b = [], []
    for i, j in itertools.product(*map(range, counts.shape)):
        a += [i] * int(counts[i, j])
        b += [j] * int(counts[i, j])
    return np.array(a), np.array(b)


def brute_acc(counts):
    counts = np.asarray(counts)
    k = max(counts.shape)
    sq = np.zeros((k, k), dtype=int)
    sq[: counts.shape[0], : counts.shape[1]] = counts
    return max(sum(sq[i, p[i]] for i in range(k)) for p in itertools.permutations(range(k))) / counts.sum()


def entropy(p):
    p = np.asarray(p, float)
    p = p[p > 0] / p.sum()
    return float(-(p * np.log(p)).sum())


def test_acc_examples():
    assert metrics.acc_from_table([[3, 1], [1, 3]]) == 0.75
    c, y = labels_from_table([[3, 1], [1, 3]])
    assert metrics.acc(c, y) == 0.75
    y = np.array([0, 0, 1, 2, 2, 1])
    assert metrics.acc((y + 1) % 3, y) == 1.0
    with pytest.raises(ValueError):
        metrics.acc([], [])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 5), st.integers(1, 5))
def test_acc_equals_brute_force(seed, kc, ky):
    counts = np.random.default_rng(seed).integers(0, 8, size=(kc, ky))
    counts[0, 0] += 1
    assert metrics.acc_from_table(counts) == brute_acc(counts)


def test_nmi_examples():
    a = np.array([0, 0, 1, 1, 2, 2])
    assert np.isclose(metrics.nmi(a, a), 1.0)
    assert np.isclose(metrics.nmi(a, (a + 1) % 3), 1.0)
    c, g = labels_from_table([[2, 2], [2, 2]])
    assert abs(metrics.nmi(c, g)) < 1e-15
    assert metrics.nmi(np.zeros(6, int), a) == 0.0


def test_nmi_matches_scalar_oracle():
    counts = np.array([[3, 1], [1, 3]])
    c, y = labels_from_table(counts)
    n = counts.sum()
    mi = sum(counts[j, k] / n * math.log(n * counts[j, k] / (counts[j].sum() * counts[:, k].sum()))
             for j in range(2) for k in range(2))
    expected = mi / math.sqrt(entropy(counts.sum(1)) * entropy(counts.sum(0)))
    assert np.isclose(metrics.nmi(c, y), expected, rtol=1e-12)
    assert np.isclose(metrics.nmi(y, c), expected, rtol=1e-12)


def test_balance_examples():
    assert metrics.balance([0, 0, 1, 1], [0, 0, 1, 1]) == 0.0
    assert metrics.balance([0, 0, 1, 1], [0, 1, 0, 1]) == 0.5
    assert np.isclose(metrics.balance([0] * 100, [0] * 70 + [1] * 30), 0.3)
    assert metrics.balance([0, 0, 0, 0], [0, 1, 0, 1], n_clusters=2) == 0.0


def test_mnce_examples():
    assert metrics.mnce([0, 0, 1, 1], [0, 1, 0, 1]) == 1.0
    assert metrics.mnce([0, 0, 1, 1, 1], [0, 0, 0, 1, 0]) == 0.0
    # clusters (0.5,0.5) and (0.75,0.25); global (0.5,0.5) needs a third cluster (0.25,0.75)
    c, g = labels_from_table([[2, 2], [3, 1], [1, 3]])
    h = -(0.75 * math.log2(0.75) + 0.25 * math.log2(0.25))
    assert np.isclose(metrics.mnce(c, g), h)
    assert round(metrics.mnce(c, g), 4) == 0.8113
    assert metrics.mnce([0, 1], [1, 1]) is None


def test_f_measure_examples():
    assert np.isclose(metrics.f_measure(0.7, 0.7), 0.7)
    assert metrics.f_measure(0.0, 0.9) == 0.0
    assert metrics.f_measure(0.0, 0.0) == 0.0
    assert round(metrics.f_measure(0.918, 0.945), 4) == 0.9313


def test_gdp_examples():
    g = np.array([0] * 4 + [1] * 4)
    assert metrics.gdp(np.zeros(8, int), g) == 0.0
    assert metrics.gdp(g, g) == 1.0
    assert metrics.gdp([1, 1, 1, 0, 1, 0, 0, 0], g) == 0.5
    with pytest.raises(ValueError):
        metrics.gdp([0, 1], [0, 0], n_groups=2)
    with pytest.raises(ShapeError):
        metrics.gdp([0, 1], [0])


def test_mi_plugin_examples():
    c, g = labels_from_table(np.outer([1, 2, 3], [2, 5]))
    assert metrics.mi_plugin(c, g) == 0.0
    assert np.isclose(metrics.mi_plugin([0, 0, 1, 1], [0, 0, 1, 1]), math.log(2))
    # uniform p(G|C)
    c, g = labels_from_table([[4, 4, 4], [1, 1, 1], [7, 7, 7]])
    assert metrics.mi_plugin(c, g) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=5), st.lists(st.integers(1, 9), min_size=1, max_size=5))
def test_mi_zero_iff_product(row, col):
    counts = np.outer(row, col)
    assert metrics.mi_from_table(counts) == 0.0
    bumped = counts.copy()
    bumped[0, 0] += 1
    if len(row) > 1 and len(col) > 1:
        assert metrics.mi_from_table(bumped) > 0


def test_h_lemma1_examples():
    assert metrics.h_lemma1(0.0) == 0.0
    assert metrics.h_lemma1(1.0) == 0.53125
    assert metrics.h_lemma1(0.5) < metrics.h_lemma1(1.0) < metrics.h_lemma1(1.5)
    for v in (-0.1, 2.0):
        with pytest.raises(ValueError):
            metrics.h_lemma1(v)


def test_bound_report_examples():
    rng = np.random.default_rng(0)
    g = np.array([0] * 75 + [1] * 25)
    z = rng.normal(size=(100, 3))
    rep = metrics.bound_report(z, g, np.zeros(100, int), steps=20)
    assert rep.eta == 0.25 and rep.lhs == 0.0 and not rep.flagged

    z = np.column_stack([g * 6.0 - 3.0, rng.normal(size=100)])
    rep = metrics.bound_report(z, g, g, steps=300)
    assert rep.gdp == 1.0 and rep.lhs > 0
    assert rep.club_estimate > 0.3
    assert math.isfinite(rep.club_estimate)


def test_report_serialization():
    rep = metrics.MetricsReport(acc=0.91234, nmi=0.5, rho_star_cg=0.04)
    assert rep.to_text() == "acc=91.2\nnmi=50.0\nrho_star_cg=4.0\n"
    assert metrics.parse_text_report(rep.to_text()) == {"acc": 91.2, "nmi": 50.0, "rho_star_cg": 4.0}
    doc = json.loads(rep.to_json())
    assert doc["percent"]["acc"] == 91.2 and doc["raw"]["acc"] == 0.91234
