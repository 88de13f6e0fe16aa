"""Quasi-Newton (BFGS) local search and a reduced multi-level single linkage.

Gradients are forward differences paid for from the budget meter.  Steps
leaving the box are evaluated at the clipped point and penalised by the
squared distance to the box.
"""

import numpy as np

from ..bench_suite import LOWER, UPPER, evaluate

__all__ = ["Penalized", "bfgs", "nearest_better_heads", "run_mlsl", "run_quasi_newton"]

ARMIJO_C = 1e-4
MAX_HALVINGS = 30
MAX_STEP = 5.0
NBC_PHI = 2.0


class _LocalLimit(Exception):
    pass


class Penalized:
    """Box-penalised objective that evaluates through the meter."""

    def __init__(self, problem, meter, on_eval=None):
        self.problem = problem
        self.meter = meter
        self.on_eval = on_eval
        self.count = 0
        self.limit = None

    def __call__(self, x):
        if self.limit is not None and self.count >= self.limit:
            raise _LocalLimit
        xc = np.clip(x, LOWER, UPPER)
        f = evaluate(self.problem, xc, self.meter)
        self.count += 1
        if self.on_eval is not None:
            self.on_eval(xc, f)
        d = x - xc
        return f + float(d @ d)


def fd_gradient(phi, x, fx):
    h = 1e-8 * np.maximum(1.0, np.abs(x))
    g = np.empty_like(x)
    for i in range(len(x)):
        xi = x.copy()
        xi[i] += h[i]
        g[i] = (phi(xi) - fx) / (xi[i] - x[i])
    return g


def bfgs(phi, x0, f0):
    """BFGS with backtracking Armijo line search, starting from a known ``(x0, f0)``.

    Returns ``(x, f)`` once the line search stalls or the local limit of
    ``phi`` is hit.  BudgetExhausted from the meter propagates.
    """
    x, fx = np.array(x0, dtype=float), float(f0)
    D = len(x)
    H = np.eye(D)
    try:
        g = fd_gradient(phi, x, fx)
        while True:
            d = -H @ g
            slope = float(g @ d)
            if not slope < 0:
                H = np.eye(D)
                d = -g
                slope = -float(g @ g)
                if slope == 0:
                    return x, fx
            alpha = min(1.0, MAX_STEP / np.linalg.norm(d))
            for _ in range(MAX_HALVINGS):
                xn = x + alpha * d
                fn = phi(xn)
                if fn <= fx + ARMIJO_C * alpha * slope:
                    break
                alpha *= 0.5
            else:
                return x, fx
            s = xn - x
            if np.linalg.norm(s) <= 1e-14 * (1.0 + np.linalg.norm(x)):
                return xn, fn
            gn = fd_gradient(phi, xn, fn)
            y = gn - g
            sy = float(s @ y)
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                rho = 1.0 / sy
                I = np.eye(D)
                H = (I - rho * np.outer(s, y)) @ H @ (I - rho * np.outer(y, s)) + rho * np.outer(s, s)
            x, fx, g = xn, fn, gn
    except _LocalLimit:
        return x, fx


def run_quasi_newton(problem, meter, rng, archive_X, archive_f, x0, f0):
    """BFGS from ``(x0, f0)``, restarting from a random archive point on convergence."""
    phi = Penalized(problem, meter)
    x, fx = x0, f0
    while True:
        bfgs(phi, x, fx)
        i = int(rng.integers(len(archive_f)))
        x, fx = archive_X[i], float(archive_f[i])


def nearest_better_heads(X, f, phi=NBC_PHI):
    """Indices of nearest-better cluster heads, best first.

    A point heads a cluster when it is the global best or when its edge to
    the nearest strictly better point is longer than ``phi`` times the mean
    nearest-better edge length.
    """
    X = np.asarray(X)
    f = np.asarray(f)
    n = len(f)
    order = np.lexsort((np.arange(n), f))
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    dist = np.sqrt(np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=2))
    better = rank[None, :] < rank[:, None]
    dnb = np.where(better, dist, np.inf).min(axis=1)
    finite = np.isfinite(dnb)
    if not finite.any():
        return [int(order[0])]
    cut = phi * dnb[finite].mean()
    heads = [i for i in order if not finite[i] or dnb[i] > cut]
    return [int(i) for i in heads]


def run_mlsl(problem, meter, rng, archive_X, archive_f, local_cap, batch):
    """Local searches from nearest-better cluster heads of a growing sample.

    The archive seeds the sample; each head starts at most one BFGS run of
    at most ``local_cap`` evaluations.  When every head has been used, a
    batch of uniform points is added and the clustering redone.
    """
    D = problem.dimension
    SX = [np.array(x, dtype=float) for x in archive_X]
    Sf = [float(v) for v in archive_f]
    used = set()
    phi = Penalized(problem, meter)
    while True:
        todo = [h for h in nearest_better_heads(np.array(SX), np.array(Sf)) if h not in used]
        if not todo:
            for _ in range(batch):
                x = rng.uniform(LOWER, UPPER, D)
                SX.append(x)
                Sf.append(evaluate(problem, x, meter))
            continue
        h = todo[0]
        used.add(h)
        phi.limit = phi.count + local_cap
        x_loc, f_loc = bfgs(phi, SX[h], Sf[h])
        phi.limit = None
        used.add(len(Sf))
        SX.append(np.clip(x_loc, LOWER, UPPER))
        Sf.append(float(f_loc))
