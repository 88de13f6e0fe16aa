"""Differential evolution and particle swarm, warm-started from an archive."""

import numpy as np

from ..bench_suite import LOWER, UPPER, evaluate

__all__ = ["best_archive_points", "run_de", "run_pso"]


def best_archive_points(archive_X, archive_f, k):
    """The ``k`` best archive entries (ties keep archive order)."""
    order = np.argsort(archive_f, kind="stable")[:k]
    return archive_X[order].copy(), np.asarray(archive_f, dtype=float)[order].copy()


def _fill(problem, meter, rng, X, f, size):
    # Top up a too-small initial population with uniform samples.
    while len(f) < size:
        x = rng.uniform(LOWER, UPPER, problem.dimension)
        fx = evaluate(problem, x, meter)
        X = np.vstack([X, x])
        f = np.append(f, fx)
    return X, f


def run_de(problem, meter, rng, archive_X, archive_f, pop_size, F=0.5, CR=0.9):
    """DE/rand/1/bin with generational replacement; runs until the budget ends."""
    D = problem.dimension
    X, f = best_archive_points(archive_X, archive_f, pop_size)
    X, f = _fill(problem, meter, rng, X, f, max(4, min(pop_size, len(f))))
    n = len(f)
    while True:
        trials = np.empty_like(X)
        for i in range(n):
            others = [j for j in range(n) if j != i]
            r1, r2, r3 = rng.choice(others, size=3, replace=False)
            mutant = X[r1] + F * (X[r2] - X[r3])
            cross = rng.random(D) < CR
            cross[rng.integers(D)] = True
            trials[i] = np.clip(np.where(cross, mutant, X[i]), LOWER, UPPER)
        for i in range(n):
            ft = evaluate(problem, trials[i], meter)
            if ft <= f[i]:
                X[i], f[i] = trials[i], ft


def run_pso(problem, meter, rng, archive_X, archive_f, swarm, w=0.7298, c1=1.49618, c2=1.49618):
    """Global-best PSO with zero initial velocities and clipped positions."""
    D = problem.dimension
    X, f = best_archive_points(archive_X, archive_f, swarm)
    X, f = _fill(problem, meter, rng, X, f, max(2, min(swarm, len(f))))
    V = np.zeros_like(X)
    P, pf = X.copy(), f.copy()
    g = int(np.argmin(pf))
    while True:
        for i in range(len(X)):
            r1, r2 = rng.random(D), rng.random(D)
            V[i] = w * V[i] + c1 * r1 * (P[i] - X[i]) + c2 * r2 * (P[g] - X[i])
            X[i] = np.clip(X[i] + V[i], LOWER, UPPER)
            fx = evaluate(problem, X[i], meter)
            if fx < pf[i]:
                P[i], pf[i] = X[i], fx
                if fx < pf[g]:
                    g = i
