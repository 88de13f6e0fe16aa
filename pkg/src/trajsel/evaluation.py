"""Fold construction, per-fold training and selection, reports and similarity analysis."""

import enum
import json
import logging
import math
import os
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .optimizers.portfolio import AlgorithmId
from .perf_model import (
    FEATURE_MODES,
    FULL_GRID,
    ModelBundle,
    SchemaError,
    grid_search,
    target_transform,
)
from .rng import name_key, stream
from .selector import BaselineKind, build_baselines, ratios_for_choices
from .trajectory_store import RunKey, _atomic_write
from .ts_features import impute_median, select_features

__all__ = [
    "Dataset",
    "FoldSpec",
    "PipelineSettings",
    "ScenarioReport",
    "Scheme",
    "SimilarityResult",
    "TransferReport",
    "best_algorithm_fractions",
    "evaluate_scenario",
    "make_folds",
    "select_ts_features",
    "similarity_analysis",
    "train_bundle",
    "transfer_evaluate",
    "write_reports",
]

log = logging.getLogger("trajsel")

TRAIN_FRACTION = 0.7


class Scheme(enum.Enum):
    LEAVE_INSTANCE_OUT = "LEAVE_INSTANCE_OUT"
    LEAVE_RUN_OUT = "LEAVE_RUN_OUT"


# --------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldSpec:
    scheme: Scheme
    repeat: int
    seed: int
    train: tuple
    test: tuple
    train_fraction: float = TRAIN_FRACTION

    def __post_init__(self):
        if set(self.train) & set(self.test):
            raise ValueError("train and test overlap")

    def to_dict(self):
        return {"scheme": self.scheme.value, "repeat": self.repeat, "seed": self.seed,
                "train_fraction": self.train_fraction,
                "train": [asdict(k) for k in self.train], "test": [asdict(k) for k in self.test]}

    @classmethod
    def from_dict(cls, d):
        return cls(Scheme(d["scheme"]), d["repeat"], d["seed"],
                   tuple(RunKey(**k) for k in d["train"]), tuple(RunKey(**k) for k in d["test"]),
                   d["train_fraction"])


def n_train(n, fraction=TRAIN_FRACTION):
    """Round-half-up share of ``n``, kept inside [1, n-1] when n >= 2."""
    k = math.floor(fraction * n + 0.5)
    return min(max(k, 1), n - 1) if n >= 2 else k


def make_folds(keys, scheme, repeats=5, seed=0, train_fraction=TRAIN_FRACTION):
    """Stratified 70/30 splits per function, one per repeat.

    LEAVE_INSTANCE_OUT splits each function's instances (all runs follow
    their instance); LEAVE_RUN_OUT splits each function's runs.
    """
    scheme = Scheme(scheme)
    by_fn = defaultdict(list)
    for k in sorted(keys, key=RunKey.sort_key):
        by_fn[k.group_function].append(k)
    folds = []
    for r in range(repeats):
        train, test = [], []
        for fn, ks in sorted(by_fn.items(), key=lambda kv: kv[1][0].sort_key()):
            rng = stream("folds", seed, r, name_key(scheme.value), name_key(repr(fn)))
            if scheme is Scheme.LEAVE_INSTANCE_OUT:
                units = sorted({k.instance_id for k in ks})
                if len(units) < 2:
                    raise ValueError(f"{fn}: leave-instance-out needs at least 2 instances, got {len(units)}")
            else:
                units = list(ks)
            perm = rng.permutation(len(units))
            chosen = {units[i] for i in perm[: n_train(len(units), train_fraction)]}
            for k in ks:
                unit = k.instance_id if scheme is Scheme.LEAVE_INSTANCE_OUT else k
                (train if unit in chosen else test).append(k)
        folds.append(FoldSpec(scheme, r, int(seed), tuple(train), tuple(test), train_fraction))
    return folds


# --------------------------------------------------------------------------
# datasets and training


@dataclass
class Dataset:
    perf: object  # PerformanceTable
    ela: object = None  # FeatureMatrix
    ts: object = None  # FeatureMatrix over the full TS catalog

    def __post_init__(self):
        for fm in (self.ela, self.ts):
            if fm is not None and set(fm.keys) != set(self.perf.keys):
                raise ValueError("feature matrix and performance table cover different runs")

    @property
    def keys(self):
        return self.perf.keys

    def matrix(self, mode, keys, ts_names=None):
        parts = []
        if mode in ("ELA", "ELA+TS"):
            parts.append(self.ela.subset(keys))
        if mode in ("TS", "ELA+TS"):
            ts = self.ts.subset(keys)
            parts.append(ts.columns(ts_names) if ts_names is not None else ts)
        fm = parts[0]
        for p in parts[1:]:
            fm = fm.hstack(p)
        return fm.names, fm.values


@dataclass(frozen=True)
class PipelineSettings:
    grid: object = FULL_GRID
    k_folds: int = 5
    seed: int = 0
    ts_threshold: float = 2e-3
    ts_fallback: int = 20
    jobs: int = 1


def function_labels(keys):
    """Function id of each run, the class label for TS feature selection."""
    return np.array([_fn_label(k) for k in keys])


def select_ts_features(dataset, keys, settings):
    labels = function_labels(keys)
    X = dataset.ts.subset(keys).values
    if len(set(labels.tolist())) < 2:
        log.info("ts_selection_single_class", extra={"fields": {"n": len(keys)}})
        return list(dataset.ts.names)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        sel = select_features(X, labels, dataset.ts.names, settings.ts_threshold, settings.seed,
                              fallback=settings.ts_fallback)
    return list(sel.names)


def train_bundle(dataset, keys, budgets, modes, settings=PipelineSettings(), progress=None):
    """Grid-searched forests for every (algorithm, budget, mode) on ``keys``.

    Returns ``(bundle, ts_names, chosen)``; ``chosen`` maps model keys to the
    selected hyperparameters.
    """
    keys = list(keys)
    ts_names = select_ts_features(dataset, keys, settings) if any(m != "ELA" for m in modes) else None
    groups = [k.group_instance for k in keys]
    perf = dataset.perf.subset(keys)
    bundle, chosen = ModelBundle(), {}
    for mode in modes:
        names, X = dataset.matrix(mode, keys, ts_names)
        Xi, med = impute_median(X)
        for b in budgets:
            P = perf.at_budget(b)
            for a in AlgorithmId:
                res = grid_search(Xi, target_transform(P[:, a]), settings.grid, settings.k_folds,
                                  settings.seed, groups, names, settings.jobs)
                res.forest.impute_values = med
                bundle.add(a, b, mode, res.forest)
                chosen[(a, b, mode)] = res.best
                if progress is not None:
                    progress(a, b, mode, res)
    return bundle, ts_names, chosen


def predict_choices(bundle, dataset, keys, budget, mode, ts_names):
    names, X = dataset.matrix(mode, keys, ts_names)
    pred = bundle.predict_matrix(mode, budget, names, X)
    return np.argmin(pred, axis=1), pred


# --------------------------------------------------------------------------
# scenario evaluation


def best_algorithm_fractions(perf, budgets=None):
    """Per budget, the fraction of runs on which each algorithm attains the run minimum."""
    budgets = perf.budgets if budgets is None else budgets
    out = {}
    for b in budgets:
        P = perf.at_budget(b)
        out[int(b)] = (P == P.min(axis=1, keepdims=True)).mean(axis=0) if len(P) else np.zeros(P.shape[1])
    return out


def _policy_choices(policies, keys):
    return {kind.value: policies[kind].choose(keys) for kind in BaselineKind}


def _fn_label(k):
    return f"{k.suite}:{k.function_id}"


def _run_fold(dataset, fold, budget, modes, settings):
    keys = list(fold.test)
    P = dataset.perf.subset(keys).at_budget(budget)
    out = {"scheme": fold.scheme.value, "repeat": fold.repeat, "n_train": len(fold.train),
           "n_test": len(keys), "flagged": False}
    try:
        bundle, ts_names, chosen = train_bundle(dataset, fold.train, [budget], modes, settings)
        choices = _policy_choices(build_baselines(dataset.perf.subset(keys), budget), keys)
        for mode in modes:
            choices[mode] = predict_choices(bundle, dataset, keys, budget, mode, ts_names)[0]
        out["ts_features"] = ts_names
        out["configs"] = {f"{m}/{a.name}": h.label() for (a, b, m), h in sorted(chosen.items(), key=lambda kv: (kv[0][2], kv[0][0]))}
    except Exception as exc:  # flagged, report stays partial
        log.warning("fold_failed", extra={"fields": {"scheme": fold.scheme.value, "repeat": fold.repeat, "error": repr(exc)}})
        out.update(flagged=True, error=repr(exc))
        return out, None
    ratios = {name: ratios_for_choices(P, c) for name, c in choices.items()}
    out["mean_ratio"] = {name: float(r.mean()) for name, r in ratios.items()}
    return out, ratios


@dataclass
class ScenarioReport:
    dimension: int
    a2_budget: int
    modes: tuple
    schemes: dict = field(default_factory=dict)  # scheme -> {"mean_ratio", "per_function"}
    best_fractions: dict = field(default_factory=dict)
    folds: list = field(default_factory=list)

    @property
    def name(self):
        return f"{self.dimension}d_{self.a2_budget}"

    @property
    def flagged(self):
        return any(f.get("flagged") for f in self.folds)

    def to_json(self):
        d = {"dimension": self.dimension, "a2_budget": self.a2_budget, "modes": list(self.modes),
             "schemes": self.schemes, "best_fractions": self.best_fractions, "folds": self.folds,
             "flagged": self.flagged}
        return json.dumps(d, indent=1, sort_keys=True)


def evaluate_scenario(dataset, folds, budget, modes=FEATURE_MODES, settings=PipelineSettings()):
    """Train per fold, select on the test split and average performance ratios over folds."""
    dims = {k.dimension for k in dataset.keys}
    if len(dims) != 1:
        raise ValueError(f"a scenario covers one dimension, got {sorted(dims)}")
    rep = ScenarioReport(dims.pop(), int(budget), tuple(modes))
    fr = best_algorithm_fractions(dataset.perf, [budget])[int(budget)]
    rep.best_fractions = {a.name: float(fr[a]) for a in AlgorithmId}

    def one(fold):
        return _run_fold(dataset, fold, budget, modes, settings)

    if settings.jobs > 1:
        with ThreadPoolExecutor(settings.jobs) as ex:
            results = list(ex.map(one, folds))
    else:
        results = [one(f) for f in folds]

    per_scheme = defaultdict(lambda: {"fold_means": defaultdict(list), "per_function": defaultdict(lambda: defaultdict(list))})
    for fold, (summary, ratios) in zip(folds, results):
        log.info("fold_done", extra={"fields": {"scenario": rep.name, "scheme": fold.scheme.value,
                                                 "repeat": fold.repeat, "flagged": summary["flagged"]}})
        rep.folds.append(summary)
        if ratios is None:
            continue
        acc = per_scheme[fold.scheme.value]
        for name, r in ratios.items():
            acc["fold_means"][name].append(float(r.mean()))
            for k, v in zip(fold.test, r):
                acc["per_function"][_fn_label(k)][name].append(float(v))
    for scheme, acc in sorted(per_scheme.items()):
        rep.schemes[scheme] = {
            "n_folds": len(next(iter(acc["fold_means"].values()))),
            "mean_ratio": {n: float(np.mean(v)) for n, v in acc["fold_means"].items()},
            "per_function": {fn: {n: float(np.mean(v)) for n, v in d.items()}
                             for fn, d in sorted(acc["per_function"].items())},
        }
    return rep


def write_reports(reports, out_dir):
    """``report_<scenario>.json`` per scenario plus the flat ``fig3.csv`` and ``fig4.csv``."""
    os.makedirs(out_dir, exist_ok=True)
    fig3 = ["dimension,a2_budget,algorithm,fraction"]
    fig4 = ["scheme,dimension,a2_budget,selector,mean_ratio"]
    for rep in sorted(reports, key=lambda r: (r.dimension, r.a2_budget)):
        _atomic_write(os.path.join(out_dir, f"report_{rep.name}.json"), rep.to_json())
        for a, v in rep.best_fractions.items():
            fig3.append(f"{rep.dimension},{rep.a2_budget},{a},{v!r}")
        for scheme, d in rep.schemes.items():
            for name, v in d["mean_ratio"].items():
                fig4.append(f"{scheme},{rep.dimension},{rep.a2_budget},{name},{v!r}")
    _atomic_write(os.path.join(out_dir, "fig3.csv"), "\n".join(fig3) + "\n")
    _atomic_write(os.path.join(out_dir, "fig4.csv"), "\n".join(fig4) + "\n")


# --------------------------------------------------------------------------
# transfer


@dataclass
class TransferReport:
    dimension: int
    a2_budget: int
    mean_ratio: dict = field(default_factory=dict)
    per_function: dict = field(default_factory=dict)  # fn -> mode -> {"optimal": {...}, "selected": {...}}
    ts_features: list = field(default_factory=list)

    @property
    def name(self):
        return f"{self.dimension}d_{self.a2_budget}"

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    def fig5_rows(self):
        for fn, modes in self.per_function.items():
            for mode, d in modes.items():
                for a in AlgorithmId:
                    yield (mode, self.dimension, self.a2_budget, fn, a.name,
                           d["optimal"][a.name], d["selected"][a.name])


def _check_same_schema(a, b, what):
    if a is None or b is None:
        return
    if tuple(a.names) != tuple(b.names):
        missing = [n for n in a.names if n not in b.names]
        extra = [n for n in b.names if n not in a.names]
        raise SchemaError(f"{what} feature schema differs between suites", missing, extra)


def transfer_evaluate(train, test, budget, modes=FEATURE_MODES, settings=PipelineSettings()):
    """Train on every run of ``train`` and select on every run of ``test``."""
    _check_same_schema(train.ela, test.ela, "ELA")
    _check_same_schema(train.ts, test.ts, "TS")
    bundle, ts_names, _ = train_bundle(train, train.keys, [budget], modes, settings)
    keys = list(test.keys)
    P = test.perf.at_budget(budget)
    choices = _policy_choices(build_baselines(test.perf, budget), keys)
    for mode in modes:
        choices[mode] = predict_choices(bundle, test, keys, budget, mode, ts_names)[0]
    rep = TransferReport(keys[0].dimension, int(budget), ts_features=list(ts_names or []))
    rep.mean_ratio = {n: float(ratios_for_choices(P, c).mean()) for n, c in choices.items()}
    opt = P == P.min(axis=1, keepdims=True)
    fns = np.array([_fn_label(k) for k in keys])
    for fn in sorted(set(fns.tolist())):
        m = fns == fn
        rep.per_function[fn] = {}
        for mode in modes:
            sel = np.bincount(choices[mode][m], minlength=len(AlgorithmId)) / m.sum()
            rep.per_function[fn][mode] = {
                "optimal": {a.name: float(opt[m, a].mean()) for a in AlgorithmId},
                "selected": {a.name: float(sel[a]) for a in AlgorithmId},
            }
    return rep


def write_transfer(reports, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    rows = ["mode,dimension,a2_budget,function,algorithm,optimal_fraction,selected_fraction"]
    for rep in sorted(reports, key=lambda r: (r.dimension, r.a2_budget)):
        _atomic_write(os.path.join(out_dir, f"transfer_{rep.name}.json"), rep.to_json())
        rows += [",".join(str(c) if not isinstance(c, float) else repr(c) for c in r) for r in rep.fig5_rows()]
    _atomic_write(os.path.join(out_dir, "fig5.csv"), "\n".join(rows) + "\n")


# --------------------------------------------------------------------------
# similarity


@dataclass
class SimilarityResult:
    labels: list
    n_train: int
    corr: np.ndarray
    rank: int
    dropped: list

    def fig6_rows(self):
        n = self.n_train
        for i in range(n):
            for j in range(n):
                yield self.labels[i], self.labels[j], float(self.corr[i, j])


def problem_medians(fm, level="function"):
    """Per-problem nanmedian rows; a problem is a function (or an instance)."""
    grp = (lambda k: _fn_label(k)) if level == "function" else (lambda k: f"{_fn_label(k)}:{k.instance_id}")
    labels = sorted({grp(k) for k in fm.keys}, key=lambda s: [int(t) if t.isdigit() else t for t in s.split(":")])
    g = np.array([grp(k) for k in fm.keys])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        M = np.array([np.nanmedian(fm.values[g == lab], axis=0) for lab in labels]).reshape(len(labels), len(fm.names))
    return labels, M


def similarity_analysis(train_rows, test_rows=None, names=(), train_labels=None, test_labels=None):
    """Pearson correlations of problem vectors projected onto the train SVD basis.

    ``train_rows``/``test_rows`` are per-problem feature matrices (e.g. from
    :func:`problem_medians`).  Columns are standardized with train statistics;
    features with zero or undefined train variance are dropped.
    """
    A = np.asarray(train_rows, dtype=float)
    B = np.empty((0, A.shape[1])) if test_rows is None else np.asarray(test_rows, dtype=float)
    names = list(names) or [f"f{i}" for i in range(A.shape[1])]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mu = np.nanmean(A, axis=0)
        sd = np.nanstd(A, axis=0)
    keep = np.isfinite(sd) & (sd > 0) & np.all(np.isfinite(A), axis=0) & np.all(np.isfinite(B), axis=0)
    dropped = [n for n, k in zip(names, keep) if not k]
    if dropped:
        log.info("similarity_dropped", extra={"fields": {"features": dropped}})
    ZA = (A[:, keep] - mu[keep]) / sd[keep]
    ZB = (B[:, keep] - mu[keep]) / sd[keep]
    _, s, Vt = np.linalg.svd(ZA, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0])) if len(s) and s[0] > 0 else 0
    V = Vt[:rank].T
    proj = np.vstack([ZA @ V, ZB @ V])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        C = np.corrcoef(proj) if len(proj) > 1 else np.ones((1, 1))
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    labels = list(train_labels or [f"train:{i}" for i in range(len(A))]) + \
        list(test_labels or [f"test:{i}" for i in range(len(B))])
    return SimilarityResult(labels, len(A), C, rank, dropped)


def write_similarity(res, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    rows = ["row,col,correlation"] + [f"{a},{b},{c!r}" for a, b, c in res.fig6_rows()]
    _atomic_write(os.path.join(out_dir, "fig6.csv"), "\n".join(rows) + "\n")
    _atomic_write(os.path.join(out_dir, "similarity.json"), json.dumps(
        {"labels": res.labels, "n_train": res.n_train, "rank": res.rank, "dropped": res.dropped,
         "corr": res.corr.tolist()}, indent=0))
