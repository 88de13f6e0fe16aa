import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trajsel.bench_suite import EvalBudgetMeter, make_problem, precision
from trajsel.optimizers import (
    CMAES,
    AlgorithmId,
    CmaCheckpoint,
    collect_portfolio_runs,
    default_popsize,
    run_a1_cma,
    run_seed,
    run_uninterrupted_cma,
    warm_start_run,
)
from trajsel.optimizers.local import nearest_better_heads
from trajsel.rng import stream


def test_popsize():
    assert default_popsize(5) == 8
    assert default_popsize(10) == 10
    assert default_popsize(2) == 6


@pytest.mark.parametrize("fid,seed", [(1, 0), (8, 3), (15, 11), (21, 5)])
def test_switch_identity(fid, seed):
    p = make_problem(f"train:{fid}:0:5")
    a1 = 150
    _, payload, _ = run_a1_cma(p, a1, seed)
    branch = warm_start_run(AlgorithmId.CMA_NONELITIST, payload, p, 350, seed)
    ref = run_uninterrupted_cma(p, a1 + 350, seed)
    assert np.array_equal(branch.X, ref.X) and np.array_equal(branch.f, ref.f)


def test_switch_identity_mid_generation():
    # A1 budget not a multiple of lambda: a generation is in flight at the switch
    p = make_problem("train:10:1:5")
    _, payload, _ = run_a1_cma(p, 77, 2)
    assert len(payload.cma.pending_f) == 77 % 8
    branch = warm_start_run(AlgorithmId.CMA_NONELITIST, payload, p, 100, 2)
    ref = run_uninterrupted_cma(p, 177, 2)
    assert np.array_equal(branch.X, ref.X)


def test_a1_series_rows():
    p = make_problem("train:8:0:5")
    log, payload, series = run_a1_cma(p, None, 1)
    assert len(log) == 150 and payload.a1_budget_used == 150
    assert series.rows.shape == (150 // 8, 10)
    assert log.split_index is None
    p10 = make_problem("train:8:0:10")
    _, _, s10 = run_a1_cma(p10, None, 1)
    assert s10.rows.shape == (300 // 10, 10)


@pytest.mark.parametrize("alg", list(AlgorithmId))
def test_branch_budget_exact_and_incumbent(alg):
    p = make_problem("train:20:0:5")
    _, payload, _ = run_a1_cma(p, 150, 9)
    log = warm_start_run(alg, payload, p, 350, 9)
    assert len(log) == 500 and log.split_index == 150
    assert np.array_equal(log.X[:150], payload.archive_X)
    split_best = payload.best[1]
    assert log.best_at(500) <= split_best
    assert np.all(np.abs(log.X) <= 5.0)


def test_branches_deterministic():
    p = make_problem("train:3:0:5")
    _, payload, _ = run_a1_cma(p, 150, 4)
    for a in AlgorithmId:
        x1 = warm_start_run(a, payload, p, 200, 4).X
        x2 = warm_start_run(a, payload, p, 200, 4).X
        assert np.array_equal(x1, x2)


def test_elitist_parent_never_lost():
    p = make_problem("train:2:0:5")
    es = CMAES(5, stream("t", 0), np.zeros(5), elitist=True)
    means = []
    es.on_generation = lambda row, rep: means.append(es.parents_f.min() if es.parents_f is not None else np.inf)
    try:
        es.run(p, EvalBudgetMeter(400))
    except Exception:
        pass
    assert np.all(np.diff([m for m in means if np.isfinite(m)]) <= 0)


def test_checkpoint_invariants():
    p = make_problem("train:1:0:5")
    _, payload, _ = run_a1_cma(p, 150, 0)
    cp = payload.cma
    assert cp.lam == 8 and cp.sigma > 0
    with pytest.raises(ValueError):
        CmaCheckpoint(**{**cp.__dict__, "sigma": 0.0})
    with pytest.raises(ValueError):
        CmaCheckpoint(**{**cp.__dict__, "lam": 3})


def test_budget_oblivious_prefix():
    # the precision at a smaller budget equals a run with that smaller budget
    p = make_problem("train:7:0:5")
    _, payload, _ = run_a1_cma(p, 150, 6)
    for a in AlgorithmId:
        long = warm_start_run(a, payload, p, 850, 6)
        short = warm_start_run(a, payload, p, 100, 6)
        assert np.array_equal(long.X[:250], short.X)


def test_collect_precisions():
    p = make_problem("train:5:1:5")
    res = collect_portfolio_runs(p, n_runs=2, a2_budgets=[100, 350])
    assert len(res) == 2 and res[0].seed != res[1].seed
    for r in res:
        assert set(r.precisions) == {(a, b) for a in AlgorithmId for b in (100, 350)}
        for a in AlgorithmId:
            assert r.precisions[(a, 350)] <= r.precisions[(a, 100)] <= r.split_precision


def test_run_seed_distinct():
    seeds = {run_seed(0, f"train:{f}:0:5", r) for f in range(1, 25) for r in range(20)}
    assert len(seeds) == 480
    assert run_seed(0, "k", 1) == run_seed(0, "k", 1)


def test_nearest_better_heads_two_basins():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [4.0, 4.0], [4.1, 4.0]])
    f = np.array([0.0, 1.0, 1.0, 0.5, 2.0])
    heads = nearest_better_heads(X, f)
    assert heads[0] == 0 and 3 in heads and 1 not in heads


def test_algorithm_parse():
    assert AlgorithmId.parse("de") is AlgorithmId.DE
    assert AlgorithmId.parse(5) is AlgorithmId.MLSL


@given(st.integers(1, 24), st.integers(0, 2**32))
def test_a1_archive_best(fid, seed):
    p = make_problem(f"train:{fid}:0:2")
    log, payload, _ = run_a1_cma(p, 60, seed)
    assert payload.best[1] == log.f.min()
    assert precision(p, payload.best[1]) >= 0
