"""Per-run selection from predicted precisions, oracle baselines and the performance ratio."""

import enum
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .optimizers.portfolio import AlgorithmId
from .perf_model import PRECISION_FLOOR, predict

__all__ = [
    "BaselineKind",
    "BaselinePolicy",
    "SelectionDecision",
    "argmin_choice",
    "build_baselines",
    "performance_ratio",
    "ratios_for_choices",
    "select",
]


class BaselineKind(enum.Enum):
    VBS_RUN = "VBS_RUN"
    VBS_IID = "VBS_IID"
    VBS_FID = "VBS_FID"
    SBS = "SBS"


@dataclass(frozen=True)
class SelectionDecision:
    run_key: object
    a2_budget: int
    mode: str
    predictions: tuple
    chosen: AlgorithmId
    tie: bool


def argmin_choice(values):
    """``(index, tie)``: first minimum by ordinal, and whether it is shared."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or len(v) == 0 or not np.all(np.isfinite(v)):
        raise ValueError("need a non-empty vector of finite values")
    i = int(np.argmin(v))
    return i, bool(np.count_nonzero(v == v[i]) > 1)


def select(features, bundle, a2_budget, mode, run_key=None):
    """Choose the algorithm with the lowest predicted log-precision."""
    preds = predict(bundle, mode, a2_budget, features)
    i, tie = argmin_choice(preds)
    return SelectionDecision(run_key, int(a2_budget), str(mode), tuple(float(p) for p in preds),
                             AlgorithmId(i), tie)


def performance_ratio(vbs_precision, chosen_precision):
    """VBS precision over chosen precision, both floored at 1e-12; in [0, 1]."""
    v = np.maximum(np.asarray(vbs_precision, dtype=float), PRECISION_FLOOR)
    c = np.maximum(np.asarray(chosen_precision, dtype=float), PRECISION_FLOOR)
    r = v / c
    return float(r) if r.ndim == 0 else r


def ratios_for_choices(P, choices):
    """Per-run ratio of row-minimum over chosen entry; ``P`` is (runs, algorithms)."""
    P = np.asarray(P, dtype=float)
    choices = np.asarray(choices, dtype=int)
    return performance_ratio(P.min(axis=1), P[np.arange(len(P)), choices])


@dataclass
class BaselinePolicy:
    kind: BaselineKind
    choices: dict = field(default_factory=dict)  # group -> AlgorithmId
    winners: dict = field(default_factory=dict)  # VBS_RUN only: run -> all tied best
    win_counts: tuple = ()  # SBS only

    def group_of(self, key):
        if self.kind is BaselineKind.VBS_RUN:
            return key
        if self.kind is BaselineKind.VBS_IID:
            return key.group_instance
        if self.kind is BaselineKind.VBS_FID:
            return key.group_function
        return None

    def choice(self, key):
        return self.choices[self.group_of(key)]

    def choose(self, keys):
        return np.array([int(self.choice(k)) for k in keys])


def _group_best(P, groups):
    # algorithm maximizing mean per-run ratio within each group; lowest ordinal on ties
    R = performance_ratio(P.min(axis=1)[:, None], P)
    rows = defaultdict(list)
    for i, g in enumerate(groups):
        rows[g].append(i)
    out = {}
    for g, idx in rows.items():
        m = R[idx].mean(axis=0)
        out[g] = AlgorithmId(int(np.argmax(m)))
    return out


def build_baselines(perf, a2_budget):
    """The four oracle policies on ``perf`` at one A2 budget, keyed by kind."""
    P = perf.at_budget(a2_budget)
    keys = perf.keys
    best = P.min(axis=1, keepdims=True)
    wins = P == best
    vbs_run = BaselinePolicy(BaselineKind.VBS_RUN)
    for k, row in zip(keys, wins):
        tied = tuple(AlgorithmId(int(a)) for a in np.flatnonzero(row))
        vbs_run.winners[k] = tied
        vbs_run.choices[k] = tied[0]
    iid = BaselinePolicy(BaselineKind.VBS_IID, _group_best(P, [k.group_instance for k in keys]))
    fid = BaselinePolicy(BaselineKind.VBS_FID, _group_best(P, [k.group_function for k in keys]))
    counts = wins.sum(axis=0)
    sbs = BaselinePolicy(BaselineKind.SBS, {None: AlgorithmId(int(np.argmax(counts)))},
                         win_counts=tuple(int(c) for c in counts))
    return {p.kind: p for p in (vbs_run, iid, fid, sbs)}
