"""(mu/mu_w, lambda)-CMA-ES with an optional (mu + lambda) elitist mode.

The engine evaluates one point at a time through the budget meter, so it can
be interrupted at any evaluation (including mid-generation) and resumed from
a :class:`CmaCheckpoint` without changing the sequence of sampled points.
"""

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from ..bench_suite import LOWER, UPPER, evaluate
from ..ts_features import snapshot_state

__all__ = ["CMAES", "CmaCheckpoint", "default_popsize"]

MAX_RESAMPLE = 100
SIGMA_BOUNDS = (1e-20, 1e5)


def default_popsize(D):
    return 4 + int(math.floor(3.0 * math.log(D)))


@dataclass
class CmaCheckpoint:
    m: np.ndarray
    sigma: float
    C: np.ndarray
    p_c: np.ndarray
    p_sigma: np.ndarray
    eigenvalues: np.ndarray
    B: np.ndarray
    generation: int
    rng_state: dict
    lam: int
    best: tuple  # (x, f)
    # generation in flight: sampled points and values obtained so far
    pending_X: np.ndarray = None
    pending_f: list = field(default_factory=list)
    # selected points of the last completed generation (elitist parents)
    parents_X: np.ndarray = None
    parents_f: np.ndarray = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.lam < 4:
            raise ValueError("population size must be at least 4")
        if not np.allclose(self.C, self.C.T):
            raise ValueError("C must be symmetric")
        if np.any(self.eigenvalues <= 0):
            raise ValueError("C must be positive definite")

    def copy(self):
        return copy.deepcopy(self)


class CMAES:
    """Stateful CMA-ES; ``run`` loops until the meter raises BudgetExhausted."""

    def __init__(self, D, rng, x0, sigma0=2.0, lam=None, elitist=False):
        self.D = D
        self.rng = rng
        self.elitist = elitist
        self.lam = lam or default_popsize(D)
        self._set_constants()
        self.m = np.array(x0, dtype=float)
        self.sigma = float(sigma0)
        self.C = np.eye(D)
        self.B = np.eye(D)
        self.eigenvalues = np.ones(D)
        self.p_c = np.zeros(D)
        self.p_sigma = np.zeros(D)
        self.generation = 0
        self.best = (None, math.inf)
        self.pending_X = None
        self.pending_f = []
        self.parents_X = None
        self.parents_f = None
        self.on_generation = None  # callback(row, repaired)

    def _set_constants(self):
        D, lam = self.D, self.lam
        mu = lam // 2
        w = math.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
        self.mu = mu
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)
        mueff = self.mueff
        self.cs = (mueff + 2.0) / (D + mueff + 5.0)
        self.ds = 1.0 + 2.0 * max(0.0, math.sqrt((mueff - 1.0) / (D + 1.0)) - 1.0) + self.cs
        self.cc = (4.0 + mueff / D) / (D + 4.0 + 2.0 * mueff / D)
        self.c1 = 2.0 / ((D + 1.3) ** 2 + mueff)
        self.cmu = min(1.0 - self.c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((D + 2.0) ** 2 + mueff))
        self.chiN = math.sqrt(D) * (1.0 - 1.0 / (4.0 * D) + 1.0 / (21.0 * D * D))

    # -- checkpointing ------------------------------------------------------

    def checkpoint(self):
        return CmaCheckpoint(
            m=self.m.copy(),
            sigma=self.sigma,
            C=self.C.copy(),
            p_c=self.p_c.copy(),
            p_sigma=self.p_sigma.copy(),
            eigenvalues=self.eigenvalues.copy(),
            B=self.B.copy(),
            generation=self.generation,
            rng_state=copy.deepcopy(self.rng.bit_generator.state),
            lam=self.lam,
            best=(None if self.best[0] is None else self.best[0].copy(), self.best[1]),
            pending_X=None if self.pending_X is None else self.pending_X.copy(),
            pending_f=list(self.pending_f),
            parents_X=None if self.parents_X is None else self.parents_X.copy(),
            parents_f=None if self.parents_f is None else self.parents_f.copy(),
        )

    @classmethod
    def from_checkpoint(cls, cp, elitist=False, rng=None):
        """Resume from ``cp``; the stored RNG state is restored unless ``rng`` is given."""
        cp = cp.copy()
        if rng is None:
            bg = np.random.Philox()
            bg.state = cp.rng_state
            rng = np.random.Generator(bg)
        D = len(cp.m)
        self = cls(D, rng, cp.m, cp.sigma, lam=cp.lam, elitist=elitist)
        self.C, self.B, self.eigenvalues = cp.C, cp.B, cp.eigenvalues
        self.p_c, self.p_sigma = cp.p_c, cp.p_sigma
        self.generation = cp.generation
        self.best = cp.best
        self.pending_X, self.pending_f = cp.pending_X, cp.pending_f
        self.parents_X, self.parents_f = cp.parents_X, cp.parents_f
        return self

    # -- sampling / update ----------------------------------------------------

    def _sample(self):
        D, lam = self.D, self.lam
        sd = np.sqrt(self.eigenvalues)
        X = np.empty((lam, D))
        for k in range(lam):
            for _ in range(MAX_RESAMPLE):
                z = self.rng.standard_normal(D)
                x = self.m + self.sigma * (self.B @ (sd * z))
                if np.all((x >= LOWER) & (x <= UPPER)):
                    break
            else:
                x = np.clip(x, LOWER, UPPER)
            X[k] = x
        return X

    def _tell(self, X, f):
        m_old, sigma_old, C_old = self.m, self.sigma, self.C
        row, repaired = snapshot_state(X, m_old, sigma_old, C_old, self.p_sigma, self.p_c)

        if self.elitist and self.parents_X is not None:
            pool_X = np.vstack([self.parents_X, X])
            pool_f = np.concatenate([self.parents_f, f])
        else:
            pool_X, pool_f = X, f
        order = np.argsort(pool_f, kind="stable")[: self.mu]
        sel_X, sel_f = pool_X[order], pool_f[order]
        self.parents_X, self.parents_f = sel_X.copy(), sel_f.copy()

        Y = (sel_X - m_old) / sigma_old
        yw = self.weights @ Y
        self.m = m_old + sigma_old * yw

        inv_sqrt = (self.B / np.sqrt(self.eigenvalues)) @ self.B.T
        self.p_sigma = (1.0 - self.cs) * self.p_sigma + math.sqrt(
            self.cs * (2.0 - self.cs) * self.mueff
        ) * (inv_sqrt @ yw)
        g = self.generation + 1
        ps_norm = np.linalg.norm(self.p_sigma)
        hsig = ps_norm / math.sqrt(1.0 - (1.0 - self.cs) ** (2 * g)) < (1.4 + 2.0 / (self.D + 1.0)) * self.chiN
        self.p_c = (1.0 - self.cc) * self.p_c + hsig * math.sqrt(
            self.cc * (2.0 - self.cc) * self.mueff
        ) * yw

        rank_mu = (Y * self.weights[:, None]).T @ Y
        c1a = self.c1 * (1.0 - (1.0 - hsig) * self.cc * (2.0 - self.cc))
        C = (1.0 - c1a - self.cmu) * C_old + self.c1 * np.outer(self.p_c, self.p_c) + self.cmu * rank_mu
        C = 0.5 * (C + C.T)
        v, B = np.linalg.eigh(C)
        if v.min() <= 0:
            v = np.maximum(v, 1e-14 * max(v.max(), 1e-300))
            C = (B * v) @ B.T
            C = 0.5 * (C + C.T)
        self.C, self.B, self.eigenvalues = C, B, v

        self.sigma = float(
            np.clip(sigma_old * math.exp((self.cs / self.ds) * (ps_norm / self.chiN - 1.0)), *SIGMA_BOUNDS)
        )
        self.generation = g
        if self.on_generation is not None:
            self.on_generation(row, repaired)

    def run(self, problem, meter):
        """Sample, evaluate and adapt until the meter is exhausted."""
        while True:
            if self.pending_X is None:
                self.pending_X = self._sample()
                self.pending_f = []
            while len(self.pending_f) < self.lam:
                x = self.pending_X[len(self.pending_f)]
                fx = evaluate(problem, x, meter)
                self.pending_f.append(fx)
                if fx < self.best[1]:
                    self.best = (x.copy(), fx)
            X, f = self.pending_X, np.asarray(self.pending_f)
            self.pending_X, self.pending_f = None, []
            self._tell(X, f)
