from __future__ import annotations

import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipstat.errors import InsufficientSamples, SampleTooLarge
from ellipstat.matrix_tests import (
    kendall_trace_sq,
    proportionality_test,
    qtilde,
    sigma0_sq,
    spearman_trace_sq,
    sphericity_adaptive,
    sphericity_max_test,
    sphericity_rank_kendall,
    sphericity_rank_spearman,
    sphericity_sign_test,
    sscm_equality_test,
)

from .conftest import draw, random_orthogonal


def _u(v):
    return v / np.linalg.norm(v)


def test_sigma0_value():
    assert math.isclose(sigma0_sq(10, 5), 16 / 630, rel_tol=1e-14)


def test_qtilde_p1_is_zero():
    U = np.array([[1.0], [-1.0], [1.0], [1.0]])
    assert qtilde(U) == 0.0


def test_qtilde_matches_pair_loop():
    X = draw("student", 9, 4, 50)
    U = X / np.linalg.norm(X, axis=1, keepdims=True)
    tot = sum((U[i] @ U[j]) ** 2 for i, j in permutations(range(9), 2))
    assert math.isclose(qtilde(U), 4 * tot / 72 - 1, rel_tol=1e-12)


def test_kendall_trace_matches_loop():
    X = draw("student", 8, 3, 51)
    tot = 0.0
    cnt = 0
    for i, j, k, l in permutations(range(8), 4):
        tot += (_u(X[i] - X[j]) @ _u(X[k] - X[l])) ** 2
        cnt += 1
    assert math.isclose(kendall_trace_sq(X), tot / cnt, rel_tol=1e-12)


def test_spearman_trace_matches_loop():
    X = draw("student", 8, 3, 52)
    tot = 0.0
    cnt = 0
    for i, j, k, l in permutations(range(8), 4):
        tot += (_u(X[i] - X[j]) @ _u(X[k] - X[l])) * (_u(X[k] - X[j]) @ _u(X[i] - X[l]))
        cnt += 1
    assert math.isclose(spearman_trace_sq(X), tot / (2 * cnt), rel_tol=1e-12)


def test_rank_caps():
    with pytest.raises(SampleTooLarge):
        sphericity_rank_kendall(draw("gaussian", 61, 3, 1))
    with pytest.raises(InsufficientSamples):
        sphericity_rank_spearman(draw("gaussian", 7, 3, 1))
    with pytest.raises(SampleTooLarge):
        proportionality_test(draw("gaussian", 51, 3, 1), draw("gaussian", 10, 3, 2))


def test_proportionality_matches_loops():
    X = draw("student", 6, 3, 53)
    Y = draw("student", 7, 3, 54, scatter=np.diag([3.0, 1.0, 1.0]))
    p = 3

    def a_stat(Z):
        n = Z.shape[0]
        vals = [(_u(Z[i] - Z[j]) @ _u(Z[k] - Z[l])) ** 2 for i, j, k, l in permutations(range(n), 4)]
        return p * float(np.mean(vals))

    cross = []
    for i, j in permutations(range(6), 2):
        for k, l in permutations(range(7), 2):
            cross.append((_u(X[i] - X[j]) @ _u(Y[k] - Y[l])) ** 2)
    r = proportionality_test(X, Y)
    assert math.isclose(r.nuisance["A1"], a_stat(X), rel_tol=1e-12)
    assert math.isclose(r.nuisance["A2"], a_stat(Y), rel_tol=1e-12)
    assert math.isclose(r.nuisance["C12"], p * float(np.mean(cross)), rel_tol=1e-12)


def test_proportionality_identical_and_scale_free():
    X = draw("student", 12, 5, 55)
    Y = draw("student", 10, 5, 56)
    # the cross term runs over all pairs, including a pair matched with itself,
    # so identical samples give 2 (A - C12) < 0 rather than zero
    same = proportionality_test(X, X).nuisance
    assert same["A1"] == same["A2"]
    assert same["T_HT"] == pytest.approx(2 * (same["A1"] - same["C12"]), rel=1e-12)
    assert same["T_HT"] < 0
    a = proportionality_test(X, Y).statistic
    assert a == pytest.approx(proportionality_test(4.0 * X, 0.25 * Y).statistic, rel=1e-12)


def test_sscm_equality_p1():
    X = draw("gaussian", 10, 1, 57)
    Y = draw("student", 12, 1, 58)
    r = sscm_equality_test(X, Y)
    assert r.nuisance["A"] == pytest.approx(1.0) and r.nuisance["C"] == pytest.approx(1.0)
    assert r.nuisance["T_SSCM"] == pytest.approx(0.0, abs=1e-14)


def test_rotation_invariance(rng):
    X = draw("student", 30, 6, 59, scatter=np.diag([3.0, 2.0, 1.0, 1.0, 1.0, 1.0]))
    Y = draw("gaussian", 25, 6, 60)
    Q = random_orthogonal(6, rng)
    for f in (sphericity_sign_test, sphericity_rank_kendall, sphericity_rank_spearman):
        assert abs(f(X).statistic - f(X @ Q.T).statistic) < 1e-8
    a = sscm_equality_test(X, Y).statistic
    assert abs(a - sscm_equality_test(X @ Q.T, Y @ Q.T).statistic) < 1e-8


def test_max_test_permutation_and_count():
    X = draw("student", 40, 7, 61)
    perm = np.random.default_rng(5).permutation(7)
    a = sphericity_max_test(X)
    assert abs(a.statistic - sphericity_max_test(X[:, perm]).statistic) < 1e-8
    assert a.calibration.parameters["count"] == 28


def test_sign_bias_centers_null():
    z = [sphericity_sign_test(draw("student", 30, 20, 4000 + s)).statistic for s in range(300)]
    assert abs(np.mean(z)) < 4 * np.std(z) / math.sqrt(300) + 0.1


def test_kendall_and_spearman_agree():
    a, b = [], []
    for s in range(200):
        X = draw("gaussian", 16, 8, 5000 + s)
        a.append(sphericity_rank_kendall(X).nuisance["raw"])
        b.append(sphericity_rank_spearman(X).nuisance["raw"])
    assert np.corrcoef(a, b)[0, 1] > 0.9


def test_rank_power_beyond_size():
    S = np.diag([4.0] + [1.0] * 9)
    hits = sum(sphericity_rank_spearman(draw("gaussian", 20, 10, 6000 + s, scatter=S)).pvalue < 0.05 for s in range(40))
    assert hits / 40 > 0.3


def test_max_power_single_spike():
    p = 50
    S = np.eye(p)
    S[0, 1] = S[1, 0] = 0.8
    hits = sum(sphericity_max_test(draw("gaussian", 200, p, 7000 + s, scatter=S)).pvalue < 0.05 for s in range(30))
    assert hits / 30 >= 0.9


def test_sscm_equality_power():
    p = 40
    ar = 0.7 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    hits = 0
    for s in range(30):
        X = draw("gaussian", 50, p, 8000 + s, scatter=ar)
        Y = draw("gaussian", 50, p, 9000 + s)
        hits += sscm_equality_test(X, Y).pvalue < 0.05
    assert hits / 30 >= 0.9


def test_adaptive_components():
    X = draw("student", 40, 10, 62)
    r = sphericity_adaptive(X)
    assert 0.0 <= r.pvalue <= 0.5 + 1e-12
    assert r.nuisance["p_sign"] == sphericity_sign_test(X).pvalue


@settings(max_examples=10)
@given(st.floats(min_value=0.1, max_value=10.0))
def test_sign_sphericity_scale_free(c):
    X = draw("student", 20, 5, 63)
    assert abs(sphericity_sign_test(X).statistic - sphericity_sign_test(c * X).statistic) < 1e-6
