import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trajsel.ela_features import (
    ELA_CATALOG,
    compute_ela,
    ela_dispersion,
    ela_information_content,
    ela_meta_model,
    ic_entropy,
    ic_partial_information,
    nbc_distances,
    nbc_stats,
    nn_tour,
)


def brute_nbc(X, y):
    """O(n^2) nearest-better search with plain loops on the canonical order."""
    rows = sorted(range(len(y)), key=lambda i: (y[i],) + tuple(X[i]))
    P = [list(X[i]) for i in rows]
    n = len(P)

    def dist(a, b):
        s = 0.0
        for j in range(len(a)):
            d = a[j] - b[j]
            s += d * d
        return math.sqrt(s)

    d_nn, d_nb, nb = [], [], []
    for i in range(n):
        d_nn.append(min(dist(P[i], P[j]) for j in range(n) if j != i))
        if i == 0:
            d_nb.append(None)
            nb.append(-1)
            continue
        best_j, best_d = -1, math.inf
        for j in range(i):
            d = dist(P[i], P[j])
            if d < best_d:
                best_j, best_d = j, d
        d_nb.append(best_d)
        nb.append(best_j)
    d_nb[0] = max(d_nb[1:])
    return np.array(d_nn), np.array(d_nb), np.array(nb)


def test_catalog_has_38_features():
    assert len(ELA_CATALOG) == 38 == len(set(ELA_CATALOG))


def test_linear_target_adjr2():
    X = np.random.default_rng(0).uniform(-5, 5, (150, 5))
    y = X @ np.array([1.0, -2.0, 0.5, 3.0, 0.1]) + 4.0
    fv = ela_meta_model(X, y)
    assert abs(fv["meta_adjr2_lin"] - 1.0) <= 1e-9
    assert fv["meta_lin_coef_max_by_min"] == pytest.approx(30.0)


def test_isotropic_quadratic_condition():
    X = np.random.default_rng(1).uniform(-5, 5, (150, 5))
    y = np.sum((X - 0.3) ** 2, axis=1)
    assert abs(ela_meta_model(X, y)["meta_quad_cond"] - 1.0) <= 1e-6


def test_monotone_tour_has_zero_entropy():
    # constant slope along the tour: one symbol for every epsilon
    t = np.sort(np.random.default_rng(2).uniform(0, 10, 60))
    X = np.column_stack([t, np.zeros_like(t)])
    fv = ela_information_content(X, 3.0 * t)
    assert fv["ic_h_max"] == 0.0
    assert fv["ic_m0"] == pytest.approx(1 / 59)


def test_nbc_matches_bruteforce_exactly():
    rng = np.random.default_rng(3)
    X = rng.uniform(-5, 5, (150, 5))
    y = np.sum(X ** 2, axis=1) + rng.normal(size=150)
    o = np.lexsort([X[:, j] for j in range(4, -1, -1)] + [y])
    got = nbc_distances(X[o], y[o])
    ref = brute_nbc(X, y)
    for a, b in zip(got, ref):
        assert np.array_equal(a, b)
    assert nbc_stats(*got) == nbc_stats(*ref)
    full = compute_ela(X, y)
    for name, v in nbc_stats(*ref).as_dict().items():
        assert full[name] == v


def test_nn_tour_visits_all_once():
    X = np.random.default_rng(4).normal(size=(40, 3))
    tour = nn_tour(X)
    assert sorted(tour.tolist()) == list(range(40)) and tour[0] == 0


def test_ic_entropy_known_values():
    assert ic_entropy(np.array([1, 1, 1, 1]))[0] == 0.0
    # six distinct unequal pairs once each -> log6(6) = 1
    seq = np.array([-1, 0, 1, -1, 1, 0, -1])
    assert ic_entropy(seq)[0] == pytest.approx(1.0)
    assert ic_partial_information(np.array([1, 1, -1, 0, -1, 1])) == pytest.approx(3 / 6)


def test_dispersion_ratio_below_one_for_funnel():
    X = np.random.default_rng(5).uniform(-5, 5, (200, 3))
    fv = ela_dispersion(X, np.sum(X ** 2, axis=1))
    assert fv["disp_ratio_mean_q02"] < fv["disp_ratio_mean_q25"] < 1.0
    assert fv["disp_diff_mean_q10"] < 0


def test_degenerate_inputs_do_not_raise():
    X = np.zeros((10, 3))
    fv = compute_ela(X, np.ones(10))
    assert fv.names == ELA_CATALOG
    assert not fv.valid.all()
    assert all(fv.reasons[n] for n in fv.reasons)
    assert np.all(np.isnan(fv.values[~fv.valid]))
    tiny = compute_ela(np.random.default_rng(0).normal(size=(3, 2)), np.arange(3.0))
    assert len(tiny) == 38


@given(st.integers(0, 10**6))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-5, 5, (40, 3))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2
    p = rng.permutation(40)
    assert compute_ela(X, y) == compute_ela(X[p], y[p])


@given(st.floats(0.1, 100.0), st.floats(-100, 100))
def test_meta_adjr2_invariant_to_affine_y(a, b):
    X = np.random.default_rng(6).uniform(-5, 5, (60, 3))
    y = np.cos(X[:, 0]) + X[:, 2]
    f1, f2 = ela_meta_model(X, y), ela_meta_model(X, a * y + b)
    assert f1["meta_adjr2_quad"] == pytest.approx(f2["meta_adjr2_quad"], abs=1e-7)
