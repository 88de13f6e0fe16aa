"""Evaluation history of a single optimizer run."""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RunLog"]


@dataclass
class RunLog:
    """Ordered record of every evaluation made during one run.

    ``split_index`` marks the A1/A2 handover (number of evaluations that
    belong to the initial algorithm), or ``None`` for a plain run.
    """

    problem: object
    seed: int
    xs: list = field(default_factory=list)
    fs: list = field(default_factory=list)
    split_index: int | None = None

    def append(self, x, f):
        self.xs.append(np.array(x, dtype=float))
        self.fs.append(float(f))

    def __len__(self):
        return len(self.fs)

    @property
    def X(self):
        if not self.xs:
            return np.empty((0, self.problem.dimension))
        return np.vstack(self.xs)

    @property
    def f(self):
        return np.asarray(self.fs, dtype=float)

    @property
    def best_so_far(self):
        f = self.f
        return np.minimum.accumulate(f) if f.size else f

    def best(self):
        """Return ``(x, f)`` of the first evaluation attaining the minimum."""
        i = int(np.argmin(self.fs))
        return self.xs[i].copy(), self.fs[i]

    def best_at(self, n_evals):
        """Best-so-far value after the first ``n_evals`` evaluations."""
        if n_evals <= 0 or not self.fs:
            raise ValueError("no evaluations in the requested prefix")
        return float(np.min(self.fs[:n_evals]))

    def __eq__(self, other):
        if not isinstance(other, RunLog):
            return NotImplemented
        return (
            self.problem == other.problem
            and self.seed == other.seed
            and self.split_index == other.split_index
            and len(self) == len(other)
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.f, other.f)
        )
