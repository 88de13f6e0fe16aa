"""The six-member portfolio, the A1 CMA-ES run and warm-started A2 branches."""

import enum
import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..bench_suite import LOWER, UPPER, BudgetExhausted, EvalBudgetMeter, precision
from ..rng import stream
from ..runlog import RunLog
from ..ts_features import CmaStateSeries
from .cma import CMAES, CmaCheckpoint, default_popsize
from .local import run_mlsl, run_quasi_newton
from .population import run_de, run_pso

__all__ = [
    "AlgorithmId",
    "PortfolioSettings",
    "RunResult",
    "WarmStartPayload",
    "collect_portfolio_runs",
    "run_a1_cma",
    "run_seed",
    "run_uninterrupted_cma",
    "warm_start_run",
]


class AlgorithmId(enum.IntEnum):
    CMA_NONELITIST = 0
    CMA_ELITIST = 1
    DE = 2
    PSO = 3
    QUASI_NEWTON = 4
    MLSL = 5

    @classmethod
    def parse(cls, s):
        if isinstance(s, cls):
            return s
        if isinstance(s, (int, np.integer)):
            return cls(int(s))
        return cls[str(s).upper()]


@dataclass(frozen=True)
class PortfolioSettings:
    de_pop_per_dim: int = 5
    pso_swarm: int = 40
    mlsl_local_cap_per_dim: int = 30
    mlsl_batch_per_dim: int = 10
    sigma0: float = 2.0
    reseed_on_switch: bool = False


@dataclass
class WarmStartPayload:
    archive_X: np.ndarray
    archive_f: np.ndarray
    best: tuple  # (x, f)
    cma: CmaCheckpoint
    a1_budget_used: int

    def __post_init__(self):
        if len(self.archive_f) != self.a1_budget_used:
            raise ValueError("archive length must equal the A1 budget used")
        if len(self.archive_f) and self.best[1] != float(np.min(self.archive_f)):
            raise ValueError("best must be the archive minimum")


def _a1_rng(seed):
    return stream("a1", seed)


def _start_cma(p, seed, settings):
    rng = _a1_rng(seed)
    x0 = rng.uniform(LOWER + 1.0, UPPER - 1.0, p.dimension)
    return CMAES(p.dimension, rng, x0, sigma0=settings.sigma0, lam=default_popsize(p.dimension))


def run_a1_cma(p, budget=None, seed=0, settings=PortfolioSettings()):
    """Run the default non-elitist CMA-ES for ``budget`` (default 30*D) evaluations.

    Returns ``(RunLog, WarmStartPayload, CmaStateSeries)``.  Only completed
    generations contribute a state row.
    """
    budget = 30 * p.dimension if budget is None else int(budget)
    es = _start_cma(p, seed, settings)
    if budget < es.lam:
        raise ValueError(f"A1 budget {budget} is smaller than the population size {es.lam}")
    log = RunLog(p.id, seed)
    rows, flags = [], []
    es.on_generation = lambda row, rep: (rows.append(row), flags.append(rep))
    meter = EvalBudgetMeter(budget, log=log)
    try:
        es.run(p, meter)
    except BudgetExhausted:
        pass
    es.on_generation = None
    X, f = log.X, log.f
    payload = WarmStartPayload(X, f, log.best(), es.checkpoint(), len(log))
    return log, payload, CmaStateSeries(np.array(rows).reshape(-1, 10), np.array(flags, dtype=bool))


def run_uninterrupted_cma(p, budget, seed=0, settings=PortfolioSettings()):
    """Plain non-elitist CMA-ES run; the reference for the switch-identity check."""
    es = _start_cma(p, seed, settings)
    log = RunLog(p.id, seed)
    try:
        es.run(p, EvalBudgetMeter(budget, log=log))
    except BudgetExhausted:
        pass
    return log


def warm_start_run(a, payload, p, a2_budget, seed=0, settings=PortfolioSettings()):
    """Continue a run with algorithm ``a`` for ``a2_budget`` evaluations.

    The returned RunLog holds the A1 archive followed by the A2 evaluations,
    with ``split_index`` at the handover, so its best-so-far curve never
    loses the incumbent.
    """
    a = AlgorithmId.parse(a)
    log = RunLog(p.id, seed, split_index=payload.a1_budget_used)
    for x, fx in zip(payload.archive_X, payload.archive_f):
        log.append(x, fx)
    meter = EvalBudgetMeter(int(a2_budget), log=log)
    rng = stream("branch", seed, int(a))
    D = p.dimension
    try:
        if a in (AlgorithmId.CMA_NONELITIST, AlgorithmId.CMA_ELITIST):
            es = CMAES.from_checkpoint(
                payload.cma,
                elitist=a is AlgorithmId.CMA_ELITIST,
                rng=rng if settings.reseed_on_switch else None,
            )
            es.run(p, meter)
        elif a is AlgorithmId.DE:
            run_de(p, meter, rng, payload.archive_X, payload.archive_f, settings.de_pop_per_dim * D)
        elif a is AlgorithmId.PSO:
            run_pso(p, meter, rng, payload.archive_X, payload.archive_f, settings.pso_swarm)
        elif a is AlgorithmId.QUASI_NEWTON:
            x0, f0 = payload.best
            run_quasi_newton(p, meter, rng, payload.archive_X, payload.archive_f, x0, f0)
        elif a is AlgorithmId.MLSL:
            run_mlsl(
                p, meter, rng, payload.archive_X, payload.archive_f,
                local_cap=settings.mlsl_local_cap_per_dim * D,
                batch=settings.mlsl_batch_per_dim * D,
            )
    except BudgetExhausted:
        pass
    if meter.used != meter.cap:
        raise RuntimeError(f"{a.name} stopped after {meter.used} of {meter.cap} evaluations")
    return log


def run_seed(seed_base, key, run_index):
    """Distinct, reproducible 48-bit seed for one run of a problem."""
    h = hashlib.sha256(f"{seed_base}|{key}|{run_index}".encode()).digest()
    return int.from_bytes(h[:6], "little")


@dataclass
class RunResult:
    problem: object
    run_index: int
    seed: int
    a1_log: RunLog
    series: CmaStateSeries
    split_precision: float
    precisions: dict = field(default_factory=dict)  # (AlgorithmId, a2_budget) -> precision


def collect_portfolio_runs(p, n_runs=None, seeds=None, a1_budget=None, a2_budgets=None,
                           seed_base=0, settings=PortfolioSettings()):
    """A1 prefix plus six warm-started branches per run.

    Each branch runs once to the largest A2 budget and is read off at every
    smaller budget; every algorithm is budget-oblivious, so the prefix equals
    a separate run with the smaller budget.
    """
    D = p.dimension
    a1_budget = 30 * D if a1_budget is None else a1_budget
    a2_budgets = sorted(a2_budgets or [20 * D, 70 * D, 170 * D])
    if seeds is None:
        seeds = [run_seed(seed_base, p.id.key, r) for r in range(n_runs)]
    if len(set(seeds)) != len(seeds):
        raise ValueError("run seeds must be distinct")
    out = []
    for r, seed in enumerate(seeds):
        log, payload, series = run_a1_cma(p, a1_budget, seed, settings)
        res = RunResult(p.id, r, seed, log, series, precision(p, payload.best[1]))
        for a in AlgorithmId:
            branch = warm_start_run(a, payload, p, a2_budgets[-1], seed, settings)
            for b in a2_budgets:
                res.precisions[(a, b)] = precision(p, branch.best_at(a1_budget + b))
        out.append(res)
    return out
