"""Random-forest regression of log10 target precision, one model per algorithm.

Trees are CART regressors grown to purity on a bootstrap sample.  Candidate
features at a node are drawn from a hash stream keyed by the node's path, so
the tree grown under ``max_depth`` / ``min_samples_split`` limits is exactly
the full tree cut off where the limits bite.  Limits are therefore applied at
prediction time, and a forest of 100 trees is the first 100 trees of the
300-tree forest with the same seed.  The full grid costs three
forest fits (one per ``max_features`` rule) per CV fold.
"""

import hashlib
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .optimizers.portfolio import AlgorithmId
from .rng import stream
from .trajectory_store import parse_container, write_container

__all__ = [
    "FEATURE_MODES",
    "FULL_GRID",
    "GridResult",
    "HyperGrid",
    "HyperParams",
    "MissingModel",
    "ModelBundle",
    "REDUCED_GRID",
    "RegressionForest",
    "SchemaError",
    "fit_forest",
    "grid_search",
    "group_folds",
    "predict",
    "target_transform",
]

PRECISION_FLOOR = 1e-12
FEATURE_MODES = ("ELA", "TS", "ELA+TS")
MODEL_MAGIC = b"TRJM"
_NO_LIMIT = np.iinfo(np.int32).max


def target_transform(precision):
    p = np.asarray(precision, dtype=float)
    if np.any(p < 0) or np.any(np.isnan(p)):
        raise ValueError("precision must be non-negative")
    out = np.log10(np.maximum(p, PRECISION_FLOOR))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# hyperparameters


@dataclass(frozen=True)
class HyperParams:
    n_estimators: int = 100
    max_features: str = "all"
    max_depth: int = None
    min_samples_split: int = 2

    def __post_init__(self):
        if self.max_features not in ("all", "sqrt", "log2"):
            raise ValueError(f"max_features must be all, sqrt or log2, not {self.max_features!r}")
        if self.n_estimators < 1 or self.min_samples_split < 2:
            raise ValueError("n_estimators >= 1 and min_samples_split >= 2 required")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative or None")

    def mtry(self, p):
        if self.max_features == "all":
            return p
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(p)))
        return max(1, math.ceil(math.log2(p))) if p > 1 else 1

    @property
    def depth_limit(self):
        return _NO_LIMIT if self.max_depth is None else int(self.max_depth)

    def tie_key(self):
        # fewer trees, shallower, larger min_split
        return (self.n_estimators, self.depth_limit, -self.min_samples_split,
                ("all", "sqrt", "log2").index(self.max_features))

    def label(self):
        d = "none" if self.max_depth is None else self.max_depth
        return f"n{self.n_estimators}-{self.max_features}-d{d}-s{self.min_samples_split}"


@dataclass(frozen=True)
class HyperGrid:
    n_estimators: tuple = (100, 300)
    max_features: tuple = ("all", "sqrt", "log2")
    max_depth: tuple = (3, 5, 15, None)
    min_samples_split: tuple = (2, 5, 10)

    def configs(self):
        return [HyperParams(*c) for c in itertools.product(
            self.n_estimators, self.max_features, self.max_depth, self.min_samples_split)]

    def __len__(self):
        return len(self.n_estimators) * len(self.max_features) * len(self.max_depth) * len(self.min_samples_split)


FULL_GRID = HyperGrid()
REDUCED_GRID = HyperGrid(n_estimators=(50,), max_features=("sqrt",), max_depth=(5, None), min_samples_split=(2, 5))


# --------------------------------------------------------------------------
# numba kernels

_U = np.uint64


@numba.njit(cache=True)
def _splitmix(x):
    z = x + _U(0x9E3779B97F4A7C15)
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


@numba.njit(cache=True)
def _shifted_mean(v):
    # lo + mean(v - lo): exact for constant v and never below min(v)
    lo = v.min()
    s = 0.0
    for i in range(v.shape[0]):
        s += v[i] - lo
    return lo + s / v.shape[0]


@numba.njit(cache=True, nogil=True)
def _build_tree(X, y, mtry, key):
    n, p = X.shape
    cap = 2 * n + 1
    feat = np.full(cap, -1, np.int32)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    val = np.zeros(cap)
    cnt = np.zeros(cap, np.int32)
    dep = np.zeros(cap, np.int32)
    keys = np.zeros(cap, np.uint64)
    start = np.zeros(cap, np.int64)
    end = np.zeros(cap, np.int64)
    idx = np.arange(n)
    buf = np.empty(n, np.int64)
    perm = np.empty(p, np.int64)

    stack = np.empty(cap, np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    end[0] = n
    keys[0] = key
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s0, s1 = start[node], end[node]
        m = s1 - s0
        seg = idx[s0:s1]
        ys = y[seg]
        mu = _shifted_mean(ys)
        val[node] = mu
        cnt[node] = m
        if m < 2 or ys.max() == ys.min():
            continue
        # keyed Fisher-Yates over features
        for j in range(p):
            perm[j] = j
        h = keys[node]
        for j in range(p - 1, 0, -1):
            h = _splitmix(h)
            r = np.int64(h % _U(j + 1))
            t = perm[j]
            perm[j] = perm[r]
            perm[r] = t
        yc = ys - mu
        tot = 0.0
        for k in range(m):
            tot += yc[k]
        best = -np.inf
        best_f = -1
        best_t = 0.0
        visited = 0
        for j in range(p):
            if visited >= mtry:
                break
            f = perm[j]
            xs = X[seg, f]
            order = np.argsort(xs, kind="mergesort")
            if xs[order[0]] == xs[order[m - 1]]:
                continue
            visited += 1
            sl = 0.0
            for k in range(m - 1):
                sl += yc[order[k]]
                x0 = xs[order[k]]
                x1 = xs[order[k + 1]]
                if x0 == x1:
                    continue
                nl = k + 1
                sr = tot - sl
                score = sl * sl / nl + sr * sr / (m - nl)
                # equal scores go to the lowest feature index
                if score > best or (score == best and f < best_f):
                    best = score
                    best_f = f
                    mid = 0.5 * (x0 + x1)
                    if not (mid >= x0 and mid < x1):
                        mid = x0
                    best_t = mid
        if best_f < 0:
            continue
        # stable partition of the segment
        nl = 0
        for k in range(m):
            i = seg[k]
            if X[i, best_f] <= best_t:
                buf[nl] = i
                nl += 1
        nr = nl
        for k in range(m):
            i = seg[k]
            if X[i, best_f] > best_t:
                buf[nr] = i
                nr += 1
        for k in range(m):
            idx[s0 + k] = buf[k]
        feat[node] = best_f
        thr[node] = best_t
        lc, rc = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = lc, rc
        start[lc], end[lc] = s0, s0 + nl
        start[rc], end[rc] = s0 + nl, s1
        dep[lc] = dep[rc] = dep[node] + 1
        keys[lc] = _splitmix(keys[node] * _U(2))
        keys[rc] = _splitmix(keys[node] * _U(2) + _U(1))
        stack[sp] = rc
        stack[sp + 1] = lc
        sp += 2
    return (feat[:n_nodes].copy(), thr[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), val[:n_nodes].copy(), cnt[:n_nodes].copy(), dep[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _predict_trees(feat, thr, left, right, val, cnt, dep, offsets, X, depths, splits):
    """Per-tree predictions, shape (len(depths), len(splits), rows, trees)."""
    n_trees = offsets.shape[0] - 1
    n = X.shape[0]
    out = np.empty((depths.shape[0], splits.shape[0], n, n_trees))
    for t in range(n_trees):
        o = offsets[t]
        for a in range(depths.shape[0]):
            for b in range(splits.shape[0]):
                for r in range(n):
                    node = 0
                    while True:
                        g = o + node
                        if feat[g] < 0 or dep[g] >= depths[a] or cnt[g] < splits[b]:
                            break
                        if X[r, feat[g]] <= thr[g]:
                            node = left[g]
                        else:
                            node = right[g]
                    out[a, b, r, t] = val[o + node]
    return out


def _forest_mean(P):
    # same shifted mean as the kernel, along the tree axis
    lo = P.min(axis=-1, keepdims=True)
    return (lo + (P - lo).mean(axis=-1, keepdims=True))[..., 0]


# --------------------------------------------------------------------------
# forest


_ARRAYS = ("feature", "threshold", "left", "right", "value", "n_samples", "depth")


@dataclass
class Trees:
    """Flat node arrays of a stack of trees; ``offsets[t]`` is tree t's root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    depth: np.ndarray
    offsets: np.ndarray
    boot: np.ndarray  # (trees, n) bootstrap row indices

    @classmethod
    def concat(cls, parts, boot):
        sizes = [len(t[0]) for t in parts]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        cols = [np.concatenate([t[i] for t in parts]) for i in range(7)]
        return cls(*cols, offsets, np.asarray(boot, dtype=np.int64))

    def head(self, k):
        e = self.offsets[k]
        return Trees(*(getattr(self, a)[:e] for a in _ARRAYS), self.offsets[: k + 1], self.boot[:k])

    @property
    def n_trees(self):
        return len(self.offsets) - 1

    def predict_grid(self, X, depths, splits):
        return _predict_trees(self.feature, self.threshold, self.left, self.right, self.value,
                              self.n_samples, self.depth, self.offsets,
                              np.ascontiguousarray(X, dtype=float),
                              np.asarray(depths, dtype=np.int64), np.asarray(splits, dtype=np.int64))


def _grow(X, y, mtry, seed, n_trees, bootstrap=True, jobs=1):
    n = len(y)
    plans = []
    keys = seed if isinstance(seed, tuple) else (seed,)
    for t in range(n_trees):
        rng = stream("forest", *keys, t)
        b = rng.integers(0, n, n) if bootstrap else np.arange(n)
        plans.append((b, int(rng.integers(0, 2**63))))

    def one(plan):
        b, k = plan
        return _build_tree(X[b], y[b], mtry, np.uint64(k))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            parts = list(ex.map(one, plans))
    else:
        parts = [one(pl) for pl in plans]
    return Trees.concat(parts, np.array([pl[0] for pl in plans]).reshape(n_trees, n))


def dataset_hash(X, y, names=()):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(y, dtype="<f8").tobytes())
    h.update(json.dumps(list(names)).encode())
    return h.hexdigest()


@dataclass
class RegressionForest:
    trees: Trees
    hyper: HyperParams
    seed: int
    feature_names: tuple = ()
    impute_values: np.ndarray = None
    dataset_hash: str = ""
    oob_mse: float = float("nan")
    cv_mse: float = float("nan")

    @property
    def n_features(self):
        return len(self.impute_values)

    def tree_predictions(self, X):
        X = self._prepare(X)
        P = self.trees.predict_grid(X, [self.hyper.depth_limit], [self.hyper.min_samples_split])
        return P[0, 0]

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _forest_mean(self.tree_predictions(X))

    def _prepare(self, X):
        X = np.array(np.atleast_2d(X), dtype=float)
        if X.shape[1] != self.n_features:
            raise SchemaError(f"expected {self.n_features} features, got {X.shape[1]}")
        bad = ~np.isfinite(X)
        if bad.any():
            X[bad] = np.broadcast_to(self.impute_values, X.shape)[bad]
        return X


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or len(y) != len(X):
        raise ValueError("X must be 2-D with one row per target")
    if len(y) == 0:
        raise ValueError("empty training set")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("X and y must be finite; impute invalid features first")
    return X, y


def _oob_mse(trees, X, y, hyper):
    P = trees.predict_grid(X, [hyper.depth_limit], [hyper.min_samples_split])[0, 0]
    n = len(y)
    inbag = np.zeros((trees.n_trees, n), dtype=bool)
    for t in range(trees.n_trees):
        inbag[t, trees.boot[t]] = True
    oob = ~inbag.T
    k = oob.sum(axis=1)
    ok = k > 0
    if not ok.any():
        return float("nan")
    pred = np.where(oob, P, 0.0).sum(axis=1)[ok] / k[ok]
    return float(np.mean((pred - y[ok]) ** 2))


def fit_forest(X, y, hyper=HyperParams(), seed=0, feature_names=(), bootstrap=True, jobs=1):
    """Fit a forest on finite ``X``; constant ``y`` gives single-leaf trees."""
    X, y = _check_xy(X, y)
    trees = _grow(X, y, hyper.mtry(X.shape[1]), seed, hyper.n_estimators, bootstrap, jobs)
    seed = tuple(seed) if isinstance(seed, tuple) else int(seed)
    f = RegressionForest(trees, hyper, seed, tuple(feature_names), np.median(X, axis=0),
                         dataset_hash(X, y, feature_names))
    if bootstrap:
        f.oob_mse = _oob_mse(trees, X, y, hyper)
    return f


# --------------------------------------------------------------------------
# grid search


def group_folds(groups, k, seed):
    """Fold index per row; whole groups are assigned round-robin after a seeded shuffle."""
    groups = list(groups)
    uniq = sorted(set(groups), key=repr)
    if len(uniq) < 2:
        # single group: fall back to row folds
        uniq = list(range(len(groups)))
        groups = uniq
    k = min(k, len(uniq))
    order = stream("cv", seed).permutation(len(uniq))
    fold_of = {uniq[g]: i % k for i, g in enumerate(order)}
    return np.array([fold_of[g] for g in groups]), k


@dataclass
class GridResult:
    best: HyperParams
    forest: RegressionForest
    cv_mse: dict = field(default_factory=dict)  # HyperParams -> mean CV MSE

    def ranked(self):
        return sorted(self.cv_mse.items(), key=lambda kv: (kv[1], kv[0].tie_key()))


def grid_search(X, y, grid=FULL_GRID, k_folds=5, seed=0, groups=None, feature_names=(),
                jobs=1, progress=None):
    """Mean K-fold CV squared error for every grid point; refit the argmin.

    ``groups`` keeps rows of one group in the same fold.  ``progress`` is
    called with ``(done, total)`` as configurations are scored.
    """
    X, y = _check_xy(X, y)
    n, p = X.shape
    configs = grid.configs()
    groups = range(n) if groups is None else groups
    fold, k = group_folds(groups, k_folds, seed)
    depths = sorted({c.depth_limit for c in configs})
    splits = sorted({c.min_samples_split for c in configs})
    n_max = max(grid.n_estimators)
    sse = {c: 0.0 for c in configs}

    tasks = [(i, mf) for i in range(k) for mf in grid.max_features]

    def run(task):
        i, mf = task
        tr, te = fold != i, fold == i
        mtry = HyperParams(max_features=mf).mtry(p)
        trees = _grow(X[tr], y[tr], mtry, (seed, k, i), n_max)
        P = trees.predict_grid(X[te], depths, splits)
        out = {}
        for c in configs:
            if c.max_features != mf:
                continue
            pred = _forest_mean(P[depths.index(c.depth_limit), splits.index(c.min_samples_split), :, : c.n_estimators])
            out[c] = float(np.sum((pred - y[te]) ** 2))
        return out

    done = 0
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(run, tasks))
    else:
        results = []
        for t in tasks:
            results.append(run(t))
            done += sum(1 for c in configs if c.max_features == t[1])
            if progress is not None:
                progress(done // k, len(configs))
    for r in results:
        for c, v in r.items():
            sse[c] += v
    cv = {c: sse[c] / n for c in configs}
    best = min(configs, key=lambda c: (cv[c], c.tie_key()))
    forest = fit_forest(X, y, best, seed, feature_names)
    forest.cv_mse = cv[best]
    return GridResult(best, forest, cv)


# --------------------------------------------------------------------------
# bundle


class SchemaError(ValueError):
    """Feature columns do not match the model schema."""

    def __init__(self, msg, missing=(), extra=()):
        super().__init__(msg)
        self.missing = tuple(missing)
        self.extra = tuple(extra)


class MissingModel(KeyError):
    pass


def check_schema(expected, got):
    expected, got = tuple(expected), tuple(got)
    if expected == got:
        return
    missing = [n for n in expected if n not in got]
    extra = [n for n in got if n not in expected]
    dup = sorted({n for n in got if got.count(n) > 1})
    extra += [f"{n} (duplicate)" for n in dup]
    if not missing and not extra:
        raise SchemaError("feature columns are out of order", (), ())
    raise SchemaError(f"feature schema mismatch; missing {missing}, extra {extra}", missing, extra)


@dataclass
class ModelBundle:
    """Forests keyed by ``(AlgorithmId, a2_budget, mode)`` plus one schema per mode."""

    models: dict = field(default_factory=dict)
    schemas: dict = field(default_factory=dict)  # mode -> feature names

    def add(self, alg, budget, mode, forest):
        mode = str(mode)
        if mode in self.schemas:
            check_schema(self.schemas[mode], forest.feature_names)
        else:
            self.schemas[mode] = tuple(forest.feature_names)
        self.models[(AlgorithmId(alg), int(budget), mode)] = forest

    def validate(self):
        for b, m in {(b, m) for (_, b, m) in self.models}:
            missing = [a.name for a in AlgorithmId if (a, b, m) not in self.models]
            if missing:
                raise MissingModel(f"bundle lacks {missing} for budget {b}, mode {m}")

    def forests(self, budget, mode):
        try:
            return [self.models[(a, int(budget), str(mode))] for a in AlgorithmId]
        except KeyError:
            raise MissingModel(f"no trained models for budget {budget}, mode {mode}") from None

    def predict_matrix(self, mode, budget, names, X):
        if str(mode) not in self.schemas:
            raise MissingModel(f"no models for mode {mode}")
        check_schema(self.schemas[str(mode)], names)
        return np.column_stack([f.predict(X) for f in self.forests(budget, mode)])

    # -- serialization -------------------------------------------------------

    def save(self, path):
        entries, arrays = [], {}
        for i, ((a, b, m), f) in enumerate(sorted(self.models.items(), key=lambda kv: (kv[0][2], kv[0][1], kv[0][0]))):
            entries.append({
                "algorithm": a.name, "a2_budget": b, "mode": m, "hyper": asdict(f.hyper),
                "seed": f.seed, "feature_names": list(f.feature_names), "dataset_hash": f.dataset_hash,
                "oob_mse": f.oob_mse, "cv_mse": f.cv_mse,
            })
            for name in _ARRAYS + ("offsets", "boot"):
                arrays[f"{i}/{name}"] = getattr(f.trees, name)
            arrays[f"{i}/impute"] = f.impute_values
        write_container(path, MODEL_MAGIC, {"kind": "model-bundle", "entries": entries}, arrays)
        return path

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            header, arrays = parse_container(fh.read(), MODEL_MAGIC)
        bundle = cls()
        for i, e in enumerate(header["entries"]):
            trees = Trees(*(arrays[f"{i}/{n}"] for n in _ARRAYS + ("offsets", "boot")))
            f = RegressionForest(trees, HyperParams(**e["hyper"]), e["seed"], tuple(e["feature_names"]),
                                 arrays[f"{i}/impute"], e["dataset_hash"], e["oob_mse"], e["cv_mse"])
            bundle.add(AlgorithmId[e["algorithm"]], e["a2_budget"], e["mode"], f)
        return bundle


def predict(bundle, mode, a2_budget, features):
    """Six predicted log-precisions for one feature vector (FeatureVector or mapping)."""
    if hasattr(features, "names") and hasattr(features, "values"):
        names, values = tuple(features.names), np.asarray(features.values, dtype=float)
    else:
        names, values = tuple(features), np.array([features[k] for k in features], dtype=float)
    return bundle.predict_matrix(mode, a2_budget, names, values[None, :])[0]
