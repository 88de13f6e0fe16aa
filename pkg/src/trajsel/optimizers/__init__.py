"""Algorithm portfolio: CMA-ES (two variants), DE, PSO, BFGS and MLSL."""

from .cma import CMAES, CmaCheckpoint, default_popsize
from .portfolio import (
    AlgorithmId,
    PortfolioSettings,
    RunResult,
    WarmStartPayload,
    collect_portfolio_runs,
    run_a1_cma,
    run_seed,
    run_uninterrupted_cma,
    warm_start_run,
)

__all__ = [
    "AlgorithmId",
    "CMAES",
    "CmaCheckpoint",
    "PortfolioSettings",
    "RunResult",
    "WarmStartPayload",
    "collect_portfolio_runs",
    "default_popsize",
    "run_a1_cma",
    "run_seed",
    "run_uninterrupted_cma",
    "warm_start_run",
]
