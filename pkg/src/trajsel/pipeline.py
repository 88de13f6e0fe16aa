"""Command implementations shared by the CLI and the tests.

Output layout under the data root::

    data/<label>-<D>d/<suite>/<fid>/<iid>/<run>.trj   runs (+ manifest.json)
    data/<label>-<D>d/<suite>/performance.csv          precision table
    data/<label>-<D>d/<suite>/features_{ela,ts}.csv    feature matrices
    data/<label>-<D>d/ts_selected.json                 selected TS features
    models/<label>-<D>d.model                          model bundle
    reports/<label>/...                                reports and fig CSVs
"""

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor

from .bench_suite import ProblemId, Suite, make_problem
from .ela_features import ELA_CATALOG_VERSION, compute_ela
from .evaluation import (
    Dataset,
    PipelineSettings,
    Scheme,
    evaluate_scenario,
    make_folds,
    problem_medians,
    select_ts_features,
    similarity_analysis,
    train_bundle,
    transfer_evaluate,
    write_reports,
    write_similarity,
    write_transfer,
)
from .featvec import FeatureVector
from .optimizers.portfolio import PortfolioSettings, collect_portfolio_runs, run_seed
from .perf_model import FULL_GRID, REDUCED_GRID, MissingModel, ModelBundle
from .selector import select
from .trajectory_store import (
    FeatureMatrix,
    PerformanceTable,
    RunKey,
    RunRecord,
    TrajectoryStore,
    _atomic_write,
    decode_run,
)
from .ts_features import TS_CATALOG_VERSION, compute_ts_features

__all__ = [
    "MissingArtifact",
    "cmd_collect",
    "cmd_evaluate",
    "cmd_features",
    "cmd_select",
    "cmd_similarity",
    "cmd_train",
    "cmd_transfer",
    "extract_features",
]

log = logging.getLogger("trajsel")


class MissingArtifact(FileNotFoundError):
    """An upstream artifact is absent; the message names the producing command."""


def _need(path, command):
    if not os.path.exists(path):
        raise MissingArtifact(f"{path} not found; run `trajsel {command}` first")
    return path


def _store(cfg, root, dim, suite):
    return TrajectoryStore(os.path.join(root, "data", cfg.scenario(dim)), suite)


def _settings(cfg, jobs=1):
    return PipelineSettings(grid=FULL_GRID if cfg.grid == "full" else REDUCED_GRID,
                            seed=cfg.seed_base, ts_threshold=cfg.ts_threshold, jobs=jobs)


def problems(cfg, dim, suite):
    if suite == "train":
        return [ProblemId(Suite.TRAIN, f, i, dim) for f in cfg.functions for i in range(cfg.n_instances)]
    return [ProblemId(Suite.TRANSFER, n, i, dim) for n in cfg.transfer_functions for i in range(cfg.transfer_instances)]


# --------------------------------------------------------------------------
# collect


def _collect_problem(args):
    pid, runs, cfg = args
    p = make_problem(pid)
    D = pid.dimension
    seeds = [run_seed(cfg.seed_base, pid.key, r) for r in runs]
    results = collect_portfolio_runs(p, seeds=seeds, a1_budget=cfg.a1_budget(D),
                                     a2_budgets=cfg.a2_budgets(D), settings=PortfolioSettings())
    out = []
    for r, res in zip(runs, results):
        key = RunKey.of(pid, r, res.seed)
        out.append(RunRecord(key, res.a1_log, res.series, res.split_precision, res.precisions,
                             {"a1_budget": cfg.a1_budget(D)}))
    return out


def cmd_collect(cfg, root, jobs=1):
    """Run the A1 prefix and all branches for every missing run; resumable."""
    summary = {}
    for dim in cfg.dimensions:
        for suite in cfg.suites:
            store = _store(cfg, root, dim, suite)
            todo = []
            for pid in problems(cfg, dim, suite):
                missing = [r for r in range(cfg.n_runs)
                           if RunKey.of(pid, r, run_seed(cfg.seed_base, pid.key, r)) not in store]
                if missing:
                    todo.append((pid, missing, cfg))
            done = 0
            if jobs > 1 and todo:
                with ProcessPoolExecutor(jobs) as ex:
                    batches = ex.map(_collect_problem, todo)
                    for batch in batches:
                        store.commit([store.write_run(rec) for rec in batch])
                        done += len(batch)
            else:
                for t in todo:
                    batch = _collect_problem(t)
                    store.commit([store.write_run(rec) for rec in batch])
                    done += len(batch)
                    log.info("collected", extra={"fields": {"problem": t[0].key, "runs": len(batch)}})
            store.commit(sealed=True)
            perf_path = os.path.join(store.root, "performance.csv")
            table, quarantine = store.export_performance_table(perf_path, cfg.a2_budgets(dim))
            summary[(dim, suite)] = {"new_runs": done, "runs": len(table), "quarantined": len(quarantine)}
            log.info("sealed", extra={"fields": {"scenario": cfg.scenario(dim), "suite": suite,
                                                  "runs": len(table), "new_runs": done}})
    return summary


# --------------------------------------------------------------------------
# features


def extract_features(rec):
    """``(ela, ts)`` feature vectors of one stored run."""
    ela = compute_ela(rec.log.X, rec.log.f)
    ts = compute_ts_features(rec.series)
    return ela, ts


def cmd_features(cfg, root, jobs=1):
    """ELA and TS matrices per suite plus the selected TS artifact on the train suite."""
    out = {}
    for dim in cfg.dimensions:
        for suite in cfg.suites:
            store = _store(cfg, root, dim, suite)
            _need(store.manifest_path, "collect")
            if not store.sealed:
                raise MissingArtifact(f"dataset {store.root} is not sealed; rerun `trajsel collect`")
            keys = store.keys()
            recs = [store.read_run(k) for k in keys]
            vecs = [extract_features(r) for r in recs]
            ela = FeatureMatrix.from_vectors(keys, [v[0] for v in vecs], ELA_CATALOG_VERSION)
            ts = FeatureMatrix.from_vectors(keys, [v[1] for v in vecs], TS_CATALOG_VERSION)
            ela.write(os.path.join(store.root, "features_ela.csv"))
            ts.write(os.path.join(store.root, "features_ts.csv"))
            out[(dim, suite)] = (ela, ts)
            log.info("features", extra={"fields": {"scenario": cfg.scenario(dim), "suite": suite,
                                                    "runs": len(keys), "ela": len(ela.names), "ts": len(ts.names)}})
        if "train" in cfg.suites:
            ds = load_dataset(cfg, root, dim, "train")
            names = select_ts_features(ds, ds.keys, _settings(cfg))
            _atomic_write(os.path.join(root, "data", cfg.scenario(dim), "ts_selected.json"),
                          json.dumps({"names": names, "threshold": cfg.ts_threshold,
                                      "seed": cfg.seed_base}, indent=1))
    return out


def load_dataset(cfg, root, dim, suite):
    store = _store(cfg, root, dim, suite)
    perf = PerformanceTable.read(_need(os.path.join(store.root, "performance.csv"), "collect"))
    ela = FeatureMatrix.read(_need(os.path.join(store.root, "features_ela.csv"), "features"))
    ts = FeatureMatrix.read(_need(os.path.join(store.root, "features_ts.csv"), "features"))
    for fm, version in ((ela, ELA_CATALOG_VERSION), (ts, TS_CATALOG_VERSION)):
        if fm.catalog_version != version:
            raise MissingArtifact(f"features in {store.root} use catalog {fm.catalog_version!r}, "
                                  f"this build expects {version!r}; rerun `trajsel features`")
    return Dataset(perf, ela.subset(perf.keys), ts.subset(perf.keys))


# --------------------------------------------------------------------------
# train / evaluate / transfer / similarity


def model_path(cfg, root, dim):
    return os.path.join(root, "models", f"{cfg.scenario(dim)}.model")


def cmd_train(cfg, root, jobs=1, echo=print):
    """Fit the bundle on all train-suite runs; prints the chosen config per model."""
    paths = []
    for dim in cfg.dimensions:
        ds = load_dataset(cfg, root, dim, "train")
        settings = _settings(cfg, jobs)
        n_grid = len(settings.grid)

        def progress(a, b, mode, res):
            echo(f"{cfg.scenario(dim)} budget={b} mode={mode} {a.name}: {n_grid}-config grid done, "
                 f"best {res.best.label()} cv_mse={res.cv_mse[res.best]:.6g}")

        bundle, _, _ = train_bundle(ds, ds.keys, cfg.a2_budgets(dim), cfg.modes, settings, progress)
        path = model_path(cfg, root, dim)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        bundle.save(path)
        paths.append(path)
    return paths


def reports_dir(cfg, root):
    return os.path.join(root, "reports", cfg.label)


def cmd_evaluate(cfg, root, jobs=1):
    """Both fold schemes over ``repeats`` repeats for every (dimension, budget) scenario."""
    reports = []
    out = reports_dir(cfg, root)
    os.makedirs(out, exist_ok=True)
    for dim in cfg.dimensions:
        ds = load_dataset(cfg, root, dim, "train")
        folds = []
        for scheme in Scheme:
            folds += make_folds(ds.keys, scheme, cfg.repeats, cfg.seed_base)
        _atomic_write(os.path.join(out, f"folds_{dim}d.json"),
                      json.dumps([f.to_dict() for f in folds], sort_keys=True))
        for b in cfg.a2_budgets(dim):
            rep = evaluate_scenario(ds, folds, b, cfg.modes, _settings(cfg, jobs))
            reports.append(rep)
            log.info("scenario", extra={"fields": {"scenario": rep.name, "flagged": rep.flagged}})
    write_reports(reports, out)
    return reports


def cmd_transfer(cfg, root, jobs=1):
    reports = []
    for dim in cfg.dimensions:
        train = load_dataset(cfg, root, dim, "train")
        test = load_dataset(cfg, root, dim, "transfer")
        for b in cfg.a2_budgets(dim):
            reports.append(transfer_evaluate(train, test, b, cfg.modes, _settings(cfg, jobs)))
    write_transfer(reports, reports_dir(cfg, root))
    return reports


def cmd_similarity(cfg, root, jobs=1):
    results = []
    for dim in cfg.dimensions:
        train = load_dataset(cfg, root, dim, "train")
        tl, tm = problem_medians(train.ela)
        sl, sm = [], None
        if "transfer" in cfg.suites:
            test = load_dataset(cfg, root, dim, "transfer")
            sl, sm = problem_medians(test.ela)
        res = similarity_analysis(tm, sm, train.ela.names, tl, sl)
        out = os.path.join(reports_dir(cfg, root), f"similarity_{dim}d")
        write_similarity(res, out)
        results.append(res)
    return results


# --------------------------------------------------------------------------
# one-shot selection


def cmd_select(trj_path, model, budget, mode):
    """Chosen algorithm for one stored trajectory file."""
    with open(trj_path, "rb") as fh:
        rec = decode_run(fh.read())
    bundle = ModelBundle.load(model) if isinstance(model, str) else model
    ela, ts = extract_features(rec)
    full = ela.concat(ts)
    names = bundle.schemas.get(mode)
    if names is None:
        raise MissingModel(f"model has no mode {mode}; available {sorted(bundle.schemas)}")
    idx = {n: i for i, n in enumerate(full.names)}
    vec = FeatureVector(names, full.values[[idx[n] for n in names]])
    return select(vec, bundle, budget, mode, rec.key)
