import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trajsel.ts_features import (
    CHANNELS,
    TS_CATALOG,
    CmaStateSeries,
    compute_ts_features,
    feature_importances,
    load_selected,
    mahalanobis,
    sample_entropy,
    save_selected,
    select_features,
    snapshot_state,
    ts_feature_names,
)


def random_spd(rng, D):
    A = rng.normal(size=(D, D))
    return A @ A.T + 1e-3 * np.eye(D)


def test_mahalanobis_paths_agree():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        D = int(rng.integers(2, 11))
        C = random_spd(rng, D)
        m = rng.normal(size=D)
        X = rng.normal(size=(8, D))
        a = mahalanobis(X, m, 0.7, C, "eigen")
        b = mahalanobis(X, m, 0.7, C, "solve")
        worst = max(worst, np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))
    assert worst <= 1e-8


def test_state_row_width_and_values():
    rng = np.random.default_rng(1)
    for D in (5, 10):
        X = rng.normal(size=(8, D))
        row, rep = snapshot_state(X, np.zeros(D), 1.0, np.eye(D), np.ones(D), np.zeros(D))
        assert row.shape == (10,) and not rep
        assert row[CHANNELS.index("sigma")] == 1.0
        assert row[CHANNELS.index("v_norm")] == pytest.approx(np.sqrt(D))
        assert row[CHANNELS.index("psigma_mean")] == 1.0
        gamma = np.linalg.norm(X, axis=1)
        assert row[CHANNELS.index("gamma_mean")] == pytest.approx(gamma.mean())


def test_singular_covariance_repaired():
    C = np.diag([1.0, 0.0, 1.0])
    row, rep = snapshot_state(np.ones((4, 3)), np.zeros(3), 1.0, C, np.zeros(3), np.zeros(3))
    assert rep and np.all(np.isfinite(row))


def test_catalog_size():
    names = ts_feature_names()
    assert len(names) == len(TS_CATALOG) * 10 == 230
    assert len(set(names)) == 230


def test_known_series_values():
    rows = np.tile(np.arange(1.0, 11.0)[:, None], (1, 10))
    fv = compute_ts_features(CmaStateSeries(rows))
    assert fv["sigma__mean"] == 5.5
    assert fv["sigma__trend_slope"] == pytest.approx(1.0)
    assert fv["sigma__longest_increasing_run"] == 10
    assert fv["sigma__first_value"] == 1.0 and fv["sigma__last_value"] == 10.0


def test_short_series_rejected():
    with pytest.raises(ValueError):
        compute_ts_features(CmaStateSeries(np.ones((5, 10))))


def test_constant_channel_invalid_not_raising():
    rows = np.random.default_rng(2).normal(size=(12, 10))
    rows[:, 0] = 3.0
    fv = compute_ts_features(CmaStateSeries(rows))
    assert np.isnan(fv["sigma__autocorr_lag1"]) and "sigma__autocorr_lag1" in fv.reasons
    assert fv["sigma__mean"] == 3.0


def test_sample_entropy_regular_vs_noise():
    t = np.arange(200)
    regular = sample_entropy(np.sin(t * 0.5))
    noise = sample_entropy(np.random.default_rng(3).normal(size=200))
    assert regular < noise


def _toy(seed=0, n=120, p=30):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    labels = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int)
    return X, labels, [f"f{i}" for i in range(p)]


def test_importances_sum_to_one():
    X, lab, _ = _toy()
    imp = feature_importances(X, lab, seed=0)
    assert abs(imp.sum() - 1.0) <= 1e-12 and np.all(imp >= 0)


def test_threshold_sweep_monotone():
    X, lab, names = _toy(1)
    imp = feature_importances(X, lab, seed=1)
    prev = None
    for thr in np.linspace(0, imp.max(), 15)[:-1]:
        cur = set(select_features(X, lab, names, threshold=thr, importances=imp).names)
        if prev is not None:
            assert cur <= prev
        prev = cur


def test_fallback_top_k():
    X, lab, names = _toy(2)
    with pytest.warns(UserWarning):
        sel = select_features(X, lab, names, threshold=1.0, fallback=5)
    assert len(sel.names) == 5


def test_selected_set_roundtrip(tmp_path):
    X, lab, names = _toy(3)
    sel = select_features(X, lab, names, seed=4)
    path = tmp_path / "sel.json"
    save_selected(sel, path)
    again = load_selected(path)
    assert again == sel
    save_selected(again, tmp_path / "sel2.json")
    assert (tmp_path / "sel2.json").read_bytes() == path.read_bytes()


@given(st.integers(8, 40), st.integers(0, 10**6))
def test_features_finite_or_flagged(L, seed):
    rows = np.random.default_rng(seed).normal(size=(L, 10))
    fv = compute_ts_features(CmaStateSeries(rows))
    bad = ~np.isfinite(fv.values)
    assert set(np.array(fv.names)[bad]) == set(fv.reasons)
