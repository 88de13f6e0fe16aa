"""CMA-ES internal-state time series and their features.

Each completed CMA-ES generation contributes one 10-component row

    (sigma, loglik, |v|, |p_sigma|, |p_c|, |gamma|,
     mean(v), mean(p_sigma), mean(p_c), mean(gamma))

where ``v`` are the covariance eigenvalues and ``gamma`` the Mahalanobis
distances of the sampled population to the distribution centre.  Norms are
Euclidean and means arithmetic, so the row width does not depend on the
problem dimension.
"""

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .featvec import FeatureVector, Invalid, collect

__all__ = [
    "CHANNELS",
    "CmaStateSeries",
    "SelectedFeatureSet",
    "TS_CATALOG",
    "TS_CATALOG_VERSION",
    "compute_ts_features",
    "load_selected",
    "mahalanobis",
    "save_selected",
    "select_features",
    "snapshot_state",
    "ts_feature_names",
]

log = logging.getLogger(__name__)

CHANNELS = (
    "sigma",
    "loglik",
    "v_norm",
    "psigma_norm",
    "pc_norm",
    "gamma_norm",
    "v_mean",
    "psigma_mean",
    "pc_mean",
    "gamma_mean",
)
EIG_FLOOR = 1e-14
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class CmaStateSeries:
    rows: np.ndarray  # (L, 10)
    repaired: np.ndarray = None  # (L,) bool, True where C needed eigenvalue flooring

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float).reshape(-1, len(CHANNELS))
        if self.repaired is None:
            self.repaired = np.zeros(len(self.rows), dtype=bool)
        self.repaired = np.asarray(self.repaired, dtype=bool)

    def __len__(self):
        return len(self.rows)

    def channel(self, name):
        return self.rows[:, CHANNELS.index(name)]

    def __eq__(self, other):
        if not isinstance(other, CmaStateSeries):
            return NotImplemented
        return np.array_equal(self.rows, other.rows) and np.array_equal(self.repaired, other.repaired)


def _eig(C):
    C = 0.5 * (C + C.T)
    v, B = np.linalg.eigh(C)
    repaired = bool(np.any(v < EIG_FLOOR))
    return np.maximum(v, EIG_FLOOR), B, repaired


def mahalanobis(X, m, sigma, C, method="eigen"):
    """Distances ``sqrt((x-m)^T (sigma^2 C)^-1 (x-m))`` for each row of ``X``.

    ``method="eigen"`` goes through the eigendecomposition of ``C``;
    ``method="solve"`` uses a direct linear solve and serves as a cross-check.
    """
    d = np.atleast_2d(np.asarray(X, dtype=float)) - m
    if method == "eigen":
        v, B, _ = _eig(C)
        w = (d @ B) / np.sqrt(v)
        return np.sqrt(np.sum(w * w, axis=1)) / sigma
    if method == "solve":
        u = np.linalg.solve(sigma * sigma * C, d.T).T
        return np.sqrt(np.sum(d * u, axis=1))
    raise ValueError(f"unknown method {method!r}")


def snapshot_state(X, m, sigma, C, p_sigma, p_c):
    """One state row for a population ``X`` sampled from ``N(m, sigma^2 C)``.

    Returns ``(row, repaired)``; ``repaired`` is True when ``C`` had to be
    floored to stay positive definite.
    """
    X = np.atleast_2d(X)
    D = X.shape[1]
    v, B, repaired = _eig(C)
    w = ((X - m) @ B) / np.sqrt(v)
    gamma = np.sqrt(np.sum(w * w, axis=1)) / sigma
    logdet = 2.0 * D * math.log(sigma) + float(np.sum(np.log(v)))
    loglik = float(np.sum(-0.5 * D * LOG_2PI - 0.5 * logdet - 0.5 * gamma ** 2))
    row = np.array(
        [
            sigma,
            loglik,
            np.linalg.norm(v),
            np.linalg.norm(p_sigma),
            np.linalg.norm(p_c),
            np.linalg.norm(gamma),
            np.mean(v),
            np.mean(p_sigma),
            np.mean(p_c),
            np.mean(gamma),
        ]
    )
    return row, repaired


# --------------------------------------------------------------------------
# feature catalog


def _var_or_invalid(x):
    v = float(np.var(x))
    if v == 0.0:
        raise Invalid("constant")
    return v


def _trend(x):
    t = np.arange(len(x), dtype=float)
    tc = t - t.mean()
    slope = float(np.dot(tc, x - x.mean()) / np.dot(tc, tc))
    return slope, float(x.mean() - slope * t.mean())


def _autocorr(x, lag):
    v = _var_or_invalid(x)
    n = len(x)
    if n <= lag:
        raise Invalid("too_short")
    xc = x - x.mean()
    return float(np.dot(xc[:-lag], xc[lag:]) / ((n - lag) * v))


def _mean_crossings(x):
    above = x > x.mean()
    return int(np.count_nonzero(above[1:] != above[:-1]))


def _longest_increasing_run(x):
    best = cur = 1
    for a, b in zip(x[:-1], x[1:]):
        cur = cur + 1 if b > a else 1
        best = max(best, cur)
    return best


def _local_maxima(x):
    return int(np.count_nonzero((x[1:-1] > x[:-2]) & (x[1:-1] > x[2:])))


def sample_entropy(x, m=2, r_factor=0.2):
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x))
    if sd == 0.0:
        raise Invalid("constant")
    r = r_factor * sd
    n = len(x)
    if n < m + 2:
        raise Invalid("too_short")
    k = n - m  # same number of templates for lengths m and m + 1

    def matches(length):
        T = np.lib.stride_tricks.sliding_window_view(x, length)[:k]
        dist = np.max(np.abs(T[:, None, :] - T[None, :, :]), axis=2)
        iu = np.triu_indices(k, 1)
        return int(np.count_nonzero(dist[iu] <= r))

    B = matches(m)
    A = matches(m + 1)
    if A == 0 or B == 0:
        raise Invalid("no_template_matches")
    return -math.log(A / B)


def _quarter_ratio(x):
    q = max(1, len(x) // 4)
    first = float(np.mean(x[:q]))
    if first == 0.0:
        raise Invalid("zero_denominator")
    return float(np.mean(x[-q:])) / first


TS_CATALOG_VERSION = "ts-catalog-1"
TS_CATALOG = (
    ("mean", lambda x: np.mean(x)),
    ("variance", lambda x: np.var(x)),
    ("std", lambda x: np.std(x)),
    ("abs_energy", lambda x: np.dot(x, x)),
    ("rms", lambda x: math.sqrt(np.dot(x, x) / len(x))),
    ("minimum", lambda x: np.min(x)),
    ("maximum", lambda x: np.max(x)),
    ("median", lambda x: np.median(x)),
    ("first_value", lambda x: x[0]),
    ("last_value", lambda x: x[-1]),
    ("trend_slope", lambda x: _trend(x)[0]),
    ("trend_intercept", lambda x: _trend(x)[1]),
    ("autocorr_lag1", lambda x: _autocorr(x, 1)),
    ("autocorr_lag2", lambda x: _autocorr(x, 2)),
    ("autocorr_lag3", lambda x: _autocorr(x, 3)),
    ("count_above_mean", lambda x: np.count_nonzero(x > x.mean())),
    ("count_below_mean", lambda x: np.count_nonzero(x < x.mean())),
    ("mean_crossings", _mean_crossings),
    ("longest_increasing_run", _longest_increasing_run),
    ("mean_abs_change", lambda x: np.mean(np.abs(np.diff(x)))),
    ("n_local_maxima", _local_maxima),
    ("sample_entropy", sample_entropy),
    ("quarter_ratio", _quarter_ratio),
)


def ts_feature_names(catalog=TS_CATALOG):
    return tuple(f"{ch}__{name}" for ch in CHANNELS for name, _ in catalog)


def compute_ts_features(series, catalog=TS_CATALOG):
    """Apply every catalog function to every channel of ``series``."""
    rows = series.rows if isinstance(series, CmaStateSeries) else np.asarray(series, dtype=float)
    if rows.shape[0] < 8:
        raise ValueError(f"need at least 8 state rows, got {rows.shape[0]}")
    pairs = []
    for j, ch in enumerate(CHANNELS):
        x = np.ascontiguousarray(rows[:, j])
        for name, fn in catalog:
            pairs.append((f"{ch}__{name}", lambda fn=fn, x=x: fn(x)))
    return collect(pairs)


# --------------------------------------------------------------------------
# importance-based selection


@dataclass
class SelectedFeatureSet:
    names: list
    importances: list
    threshold: float
    seed: int
    all_importances: dict = field(default_factory=dict)
    catalog_version: str = TS_CATALOG_VERSION
    dataset_hash: str = ""

    def to_json(self):
        return json.dumps(self.__dict__, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def impute_median(X):
    """Replace NaNs by column medians (0 for all-NaN columns); returns (X, medians)."""
    X = np.array(X, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(X, axis=0)
    med = np.where(np.isfinite(med), med, 0.0)
    rows, cols = np.nonzero(~np.isfinite(X))
    X[rows, cols] = med[cols]
    return X, med


def feature_importances(X, labels, seed, n_estimators=200):
    from sklearn.ensemble import RandomForestClassifier

    clf = RandomForestClassifier(n_estimators=n_estimators, random_state=seed, n_jobs=1)
    clf.fit(X, labels)
    return clf.feature_importances_


def select_features(X, labels, names, threshold=2e-3, seed=0, importances=None, fallback=20):
    """Keep features whose classification-forest importance exceeds ``threshold``.

    ``X`` may contain NaNs; they are median-imputed before fitting.  Passing
    precomputed ``importances`` skips the forest (used for threshold sweeps).
    """
    names = list(names)
    if len(set(np.asarray(labels).tolist())) < 2:
        raise ValueError("feature selection needs labels from at least two classes")
    if importances is None:
        Xi, _ = impute_median(X)
        importances = feature_importances(Xi, labels, seed)
    importances = np.asarray(importances, dtype=float)
    keep = np.flatnonzero(importances > threshold)
    if keep.size == 0:
        warnings.warn(f"no feature above importance {threshold}; falling back to top {fallback}")
        keep = np.sort(np.argsort(-importances, kind="stable")[:fallback])
    return SelectedFeatureSet(
        names=[names[i] for i in keep],
        importances=[float(importances[i]) for i in keep],
        threshold=float(threshold),
        seed=int(seed),
        all_importances={n: float(v) for n, v in zip(names, importances)},
    )


def save_selected(sel, path):
    with open(path, "w") as fh:
        fh.write(sel.to_json())


def load_selected(path):
    with open(path) as fh:
        return SelectedFeatureSet.from_json(fh.read())
