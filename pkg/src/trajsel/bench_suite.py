"""Benchmark problems: the 24 noiseless BBOB-style functions and a transfer suite.

All raw functions are vectorised over a batch ``X`` of shape ``(n, D)``.
Instance parameters (optimum, rotations, peak layouts, offsets) are drawn
from a Philox stream keyed by ``(function_id, instance_id, dimension)``, so
a :class:`ProblemId` maps to exactly one function.  The draws are not
bit-compatible with COCO; only the structure of the definitions is.
"""

import enum
import math
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .rng import name_key, stream

__all__ = [
    "BBOB_NAMES",
    "BudgetExhausted",
    "EvalBudgetMeter",
    "LOWER",
    "ProblemId",
    "ProblemInstance",
    "Suite",
    "TRANSFER_NAMES",
    "UPPER",
    "evaluate",
    "make_problem",
    "make_transfer_problem",
    "parse_key",
    "precision",
]

LOWER, UPPER = -5.0, 5.0
MIN_DIM, MAX_DIM = 2, 40


class Suite(str, enum.Enum):
    TRAIN = "train"
    TRANSFER = "transfer"


BBOB_NAMES = {
    1: "sphere",
    2: "ellipsoid_separable",
    3: "rastrigin_separable",
    4: "bueche_rastrigin",
    5: "linear_slope",
    6: "attractive_sector",
    7: "step_ellipsoid",
    8: "rosenbrock",
    9: "rosenbrock_rotated",
    10: "ellipsoid",
    11: "discus",
    12: "bent_cigar",
    13: "sharp_ridge",
    14: "different_powers",
    15: "rastrigin",
    16: "weierstrass",
    17: "schaffers_f7",
    18: "schaffers_f7_ill",
    19: "griewank_rosenbrock",
    20: "schwefel",
    21: "gallagher_101",
    22: "gallagher_21",
    23: "katsuura",
    24: "lunacek_bi_rastrigin",
}


class BudgetExhausted(Exception):
    """Raised by :func:`evaluate` when the meter has reached its cap."""


@dataclass(frozen=True)
class ProblemId:
    suite: Suite
    function_id: object  # int for TRAIN, catalog name for TRANSFER
    instance_id: int
    dimension: int

    def __post_init__(self):
        object.__setattr__(self, "suite", Suite(self.suite))
        if not MIN_DIM <= int(self.dimension) <= MAX_DIM:
            raise ValueError(
                f"unsupported dimension {self.dimension}; expected {MIN_DIM}..{MAX_DIM}"
            )
        if self.instance_id < 0:
            raise ValueError(f"instance_id must be non-negative, got {self.instance_id}")
        if self.suite is Suite.TRAIN:
            if not isinstance(self.function_id, (int, np.integer)) or not 1 <= self.function_id <= 24:
                raise ValueError(f"TRAIN function_id must be in 1..24, got {self.function_id!r}")
            object.__setattr__(self, "function_id", int(self.function_id))
        elif self.function_id not in TRANSFER_NAMES:
            raise ValueError(
                f"unknown transfer function {self.function_id!r}; known: {', '.join(TRANSFER_NAMES)}"
            )

    @property
    def key(self):
        return f"{self.suite.value}:{self.function_id}:{self.instance_id}:{self.dimension}"

    def __str__(self):
        return self.key


def parse_key(key):
    """Parse ``"<suite>:<fid>:<iid>:<dim>"`` into a :class:`ProblemId`."""
    parts = key.split(":")
    if len(parts) != 4:
        raise ValueError(f"problem key must look like '<suite>:<fid>:<iid>:<dim>', got {key!r}")
    suite, fid, iid, dim = parts
    suite = Suite(suite.lower())
    if suite is Suite.TRAIN:
        fid = int(fid)
    return ProblemId(suite, fid, int(iid), int(dim))


@dataclass
class EvalBudgetMeter:
    cap: int
    used: int = 0
    log: object = None  # RunLog receiving every evaluation, if attached

    def __post_init__(self):
        if self.cap < 0:
            raise ValueError("cap must be non-negative")

    @property
    def remaining(self):
        return self.cap - self.used


class ProblemInstance:
    """An immutable, evaluatable problem with known optimum."""

    def __init__(self, pid, x_opt, f_opt, raw, params):
        self.id = pid
        self.x_opt = np.array(x_opt, dtype=float)
        self.x_opt.setflags(write=False)
        self.f_opt = float(f_opt)
        self._raw = raw
        for v in params.values():
            if isinstance(v, np.ndarray):
                v.setflags(write=False)
        self.transform_params = MappingProxyType(dict(params))

    @property
    def dimension(self):
        return self.id.dimension

    def __call__(self, X):
        """Unmetered evaluation of a point or a batch of points."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dimension:
            raise ValueError(f"expected points of dimension {self.dimension}, got {X.shape}")
        if X.ndim == 1:
            return float(self._raw(X[None, :], self.transform_params)[0] + self.f_opt)
        return self._raw(X, self.transform_params) + self.f_opt

    def __repr__(self):
        return f"ProblemInstance({self.id.key})"


def evaluate(p, x, meter):
    """Metered single evaluation; appends to ``meter.log`` when attached."""
    if meter.used >= meter.cap:
        raise BudgetExhausted(f"budget of {meter.cap} evaluations exhausted")
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dimension,):
        raise ValueError(f"expected a point of shape ({p.dimension},), got {x.shape}")
    f = p(x)
    meter.used += 1
    if meter.log is not None:
        meter.log.append(x, f)
    return f


def precision(p, y):
    """Distance of ``y`` to the optimal value, clamped below at zero."""
    return max(float(y) - p.f_opt, 0.0)


# --------------------------------------------------------------------------
# transformations


def t_osz(x):
    x = np.asarray(x, dtype=float)
    nz = x != 0
    xh = np.zeros_like(x)
    xh[nz] = np.log(np.abs(x[nz]))
    c1 = np.where(x > 0, 10.0, 5.5)
    c2 = np.where(x > 0, 7.9, 3.1)
    return np.sign(x) * np.exp(xh + 0.049 * (np.sin(c1 * xh) + np.sin(c2 * xh)))


def t_asy(x, beta):
    D = x.shape[-1]
    e = np.arange(D) / (D - 1)
    pos = x > 0
    xp = np.where(pos, x, 0.0)
    return np.where(pos, np.power(xp, 1.0 + beta * e * np.sqrt(xp)), x)


def lam(alpha, D):
    return np.power(float(alpha), 0.5 * np.arange(D) / (D - 1))


def f_pen(X):
    return np.sum(np.maximum(0.0, np.abs(X) - 5.0) ** 2, axis=-1)


def _rot(X, M):
    return X @ M.T


def _rastrigin_core(z):
    D = z.shape[-1]
    return 10.0 * (D - np.sum(np.cos(2 * np.pi * z), axis=-1)) + np.sum(z * z, axis=-1)


# --------------------------------------------------------------------------
# raw BBOB functions (without f_opt)


def _f1(X, P):
    z = X - P["x_opt"]
    return np.sum(z * z, axis=1)


def _f2(X, P):
    D = X.shape[1]
    z = t_osz(X - P["x_opt"])
    return np.sum(10.0 ** (6.0 * np.arange(D) / (D - 1)) * z * z, axis=1)


def _f3(X, P):
    D = X.shape[1]
    z = lam(10, D) * t_asy(t_osz(X - P["x_opt"]), 0.2)
    return _rastrigin_core(z)


def _f4(X, P):
    D = X.shape[1]
    z = t_osz(X - P["x_opt"])
    base = 10.0 ** (0.5 * np.arange(D) / (D - 1))
    even = (np.arange(D) % 2) == 0  # 1-based odd coordinates
    s = np.where((z > 0) & even, 10.0 * base, base)
    z = s * z
    return _rastrigin_core(z) + 100.0 * f_pen(X)


def _f5(X, P):
    D = X.shape[1]
    xo = P["x_opt"]
    z = np.where(X * xo < 25.0, X, xo)
    s = np.sign(xo) * 10.0 ** (np.arange(D) / (D - 1))
    return np.sum(5.0 * np.abs(s) - s * z, axis=1)


def _f6(X, P):
    D = X.shape[1]
    z = _rot(_rot(X - P["x_opt"], P["R"]) * lam(10, D), P["Q"])
    s = np.where(z * P["x_opt"] > 0, 100.0, 1.0)
    return t_osz(np.sum((s * z) ** 2, axis=1)) ** 0.9


def _f7(X, P):
    D = X.shape[1]
    zh = _rot(X - P["x_opt"], P["R"]) * lam(10, D)
    zt = np.where(np.abs(zh) > 0.5, np.floor(0.5 + zh), np.floor(0.5 + 10.0 * zh) / 10.0)
    z = _rot(zt, P["Q"])
    core = np.sum(10.0 ** (2.0 * np.arange(D) / (D - 1)) * z * z, axis=1)
    return 0.1 * np.maximum(np.abs(zh[:, 0]) / 1e4, core) + f_pen(X)


def _rosen_core(z):
    return np.sum(100.0 * (z[:, :-1] ** 2 - z[:, 1:]) ** 2 + (z[:, :-1] - 1.0) ** 2, axis=1)


def _f8(X, P):
    D = X.shape[1]
    z = max(1.0, math.sqrt(D) / 8.0) * (X - P["x_opt"]) + 1.0
    return _rosen_core(z)


def _f9(X, P):
    D = X.shape[1]
    z = max(1.0, math.sqrt(D) / 8.0) * _rot(X, P["R"]) + 0.5
    return _rosen_core(z)


def _f10(X, P):
    D = X.shape[1]
    z = t_osz(_rot(X - P["x_opt"], P["R"]))
    return np.sum(10.0 ** (6.0 * np.arange(D) / (D - 1)) * z * z, axis=1)


def _f11(X, P):
    z = t_osz(_rot(X - P["x_opt"], P["R"]))
    return 1e6 * z[:, 0] ** 2 + np.sum(z[:, 1:] ** 2, axis=1)


def _f12(X, P):
    R = P["R"]
    z = _rot(t_asy(_rot(X - P["x_opt"], R), 0.5), R)
    return z[:, 0] ** 2 + 1e6 * np.sum(z[:, 1:] ** 2, axis=1)


def _f13(X, P):
    D = X.shape[1]
    z = _rot(_rot(X - P["x_opt"], P["R"]) * lam(10, D), P["Q"])
    return z[:, 0] ** 2 + 100.0 * np.sqrt(np.sum(z[:, 1:] ** 2, axis=1))


def _f14(X, P):
    D = X.shape[1]
    z = _rot(X - P["x_opt"], P["R"])
    return np.sqrt(np.sum(np.abs(z) ** (2.0 + 4.0 * np.arange(D) / (D - 1)), axis=1))


def _f15(X, P):
    D = X.shape[1]
    R, Q = P["R"], P["Q"]
    z = t_asy(t_osz(_rot(X - P["x_opt"], R)), 0.2)
    z = _rot(_rot(z, Q) * lam(10, D), R)
    return _rastrigin_core(z)


_WEIER_K = np.arange(12)
_WEIER_F0 = float(np.sum(0.5 ** _WEIER_K * np.cos(np.pi * 3.0 ** _WEIER_K)))


def _f16(X, P):
    D = X.shape[1]
    R, Q = P["R"], P["Q"]
    z = t_osz(_rot(X - P["x_opt"], R))
    z = _rot(_rot(z, Q) * lam(0.01, D), R)
    terms = np.sum(
        0.5 ** _WEIER_K * np.cos(2 * np.pi * 3.0 ** _WEIER_K * (z[..., None] + 0.5)), axis=-1
    )
    return 10.0 * (np.mean(terms, axis=1) - _WEIER_F0) ** 3 + 10.0 / D * f_pen(X)


def _schaffer(X, P, alpha):
    D = X.shape[1]
    z = _rot(t_asy(_rot(X - P["x_opt"], P["R"]), 0.5), P["Q"]) * lam(alpha, D)
    s = np.sqrt(z[:, :-1] ** 2 + z[:, 1:] ** 2)
    rs = np.sqrt(s)
    inner = np.sum(rs + rs * np.sin(50.0 * s ** 0.2) ** 2, axis=1) / (D - 1)
    return inner ** 2 + 10.0 * f_pen(X)


def _f17(X, P):
    return _schaffer(X, P, 10)


def _f18(X, P):
    return _schaffer(X, P, 1000)


def _f19(X, P):
    D = X.shape[1]
    z = max(1.0, math.sqrt(D) / 8.0) * _rot(X, P["R"]) + 0.5
    s = 100.0 * (z[:, :-1] ** 2 - z[:, 1:]) ** 2 + (z[:, :-1] - 1.0) ** 2
    return 10.0 / (D - 1) * np.sum(s / 4000.0 - np.cos(s), axis=1) + 10.0


SCHWEFEL_CONST = 4.189828872724339


def _f20(X, P):
    D = X.shape[1]
    xo = P["x_opt"]
    two_abs = 2.0 * np.abs(xo)
    xh = 2.0 * P["signs"] * X
    zh = xh.copy()
    zh[:, 1:] += 0.25 * (xh[:, :-1] - two_abs[:-1])
    z = 100.0 * (lam(10, D) * (zh - two_abs) + two_abs)
    return (
        -np.sum(z * np.sin(np.sqrt(np.abs(z))), axis=1) / (100.0 * D)
        + SCHWEFEL_CONST
        + 100.0 * f_pen(z / 100.0)
    )


def _gallagher(X, P):
    D = X.shape[1]
    R = P["R"]
    Y, C, w = P["peaks"], P["peak_scales"], P["weights"]
    out = np.empty(X.shape[0])
    for lo in range(0, X.shape[0], 2048):
        Xc = X[lo : lo + 2048]
        d = Xc[:, None, :] - Y[None, :, :]
        r = d @ R.T
        q = np.sum(C[None, :, :] * r * r, axis=2)
        out[lo : lo + 2048] = np.max(w[None, :] * np.exp(-q / (2.0 * D)), axis=1)
    return t_osz(10.0 - out) ** 2 + f_pen(X)


def _f23(X, P):
    D = X.shape[1]
    z = _rot(_rot(X - P["x_opt"], P["R"]) * lam(100, D), P["Q"])
    p2 = 2.0 ** np.arange(1, 33)
    v = z[..., None] * p2
    inner = np.sum(np.abs(v - np.rint(v)) / p2, axis=-1)
    prod = np.prod((1.0 + np.arange(1, D + 1) * inner) ** (10.0 / D ** 1.2), axis=1)
    return 10.0 / D ** 2 * prod - 10.0 / D ** 2 + f_pen(X)


LUNACEK_MU0 = 2.5


def _f24(X, P):
    D = X.shape[1]
    mu0, d = LUNACEK_MU0, 1.0
    s = 1.0 - 1.0 / (2.0 * math.sqrt(D + 20.0) - 8.2)
    mu1 = -math.sqrt((mu0 ** 2 - d) / s)
    xh = 2.0 * np.sign(P["x_opt"]) * X
    z = _rot(_rot(xh - mu0, P["R"]) * lam(100, D), P["Q"])
    left = np.sum((xh - mu0) ** 2, axis=1)
    right = d * D + s * np.sum((xh - mu1) ** 2, axis=1)
    return (
        np.minimum(left, right)
        + 10.0 * (D - np.sum(np.cos(2 * np.pi * z), axis=1))
        + 1e4 * f_pen(X)
    )


_RAW = {
    1: _f1, 2: _f2, 3: _f3, 4: _f4, 5: _f5, 6: _f6, 7: _f7, 8: _f8,
    9: _f9, 10: _f10, 11: _f11, 12: _f12, 13: _f13, 14: _f14, 15: _f15, 16: _f16,
    17: _f17, 18: _f18, 19: _f19, 20: _f20, 21: _gallagher, 22: _gallagher, 23: _f23, 24: _f24,
}


def random_orthogonal(rng, D):
    """Haar-distributed orthogonal matrix via sign-corrected QR."""
    A = rng.standard_normal((D, D))
    Qm, Rm = np.linalg.qr(A)
    return Qm * np.sign(np.diag(Rm))


def _signs(rng, D):
    return np.where(rng.random(D) < 0.5, -1.0, 1.0)


def _gallagher_params(rng, D, n_peaks, alpha_best, x_opt):
    n_other = n_peaks - 1
    alphas = 1000.0 ** (2.0 * np.arange(n_other) / (n_other - 1))
    alphas = np.concatenate([[alpha_best], rng.permutation(alphas)])
    scales = np.empty((n_peaks, D))
    for i, a in enumerate(alphas):
        scales[i] = rng.permutation(lam(a, D)) / a ** 0.25
    peaks = np.vstack([x_opt, rng.uniform(-4.9, 4.9, size=(n_other, D))])
    weights = np.concatenate([[10.0], 1.1 + 8.0 * np.arange(n_other) / (n_other - 1)])
    return {"peaks": peaks, "peak_scales": scales, "weights": weights}


def make_problem(pid):
    """Build the TRAIN-suite problem for ``pid`` (deterministic in ``pid``)."""
    if not isinstance(pid, ProblemId):
        pid = parse_key(pid)
    if pid.suite is not Suite.TRAIN:
        return make_transfer_problem(pid.function_id, pid.dimension, pid.instance_id)
    fid, D = pid.function_id, pid.dimension
    rng = stream("bbob", fid, pid.instance_id, D)
    x_opt = rng.uniform(-4.0, 4.0, D)
    f_opt = round(float(rng.uniform(-1000.0, 1000.0)), 2)
    R = random_orthogonal(rng, D)
    Q = random_orthogonal(rng, D)
    params = {"R": R, "Q": Q}
    c = max(1.0, math.sqrt(D) / 8.0)
    if fid == 4:
        x_opt[::2] = np.abs(x_opt[::2])
    elif fid == 5:
        x_opt = 5.0 * np.where(x_opt < 0, -1.0, 1.0)
    elif fid == 8:
        x_opt = 0.75 * x_opt
    elif fid in (9, 19):
        x_opt = R.T @ np.full(D, 0.5 / c)
    elif fid == 20:
        signs = _signs(rng, D)
        params["signs"] = signs
        x_opt = 4.2096874633 / 2.0 * signs
    elif fid == 21:
        params.update(_gallagher_params(rng, D, 101, 1000.0, x_opt))
    elif fid == 22:
        params.update(_gallagher_params(rng, D, 21, 1000.0 ** 2, x_opt))
    elif fid == 24:
        x_opt = LUNACEK_MU0 / 2.0 * _signs(rng, D)
    params["x_opt"] = x_opt
    return ProblemInstance(pid, x_opt, f_opt, _RAW[fid], params)


# --------------------------------------------------------------------------
# transfer suite: classical functions on z = scale * (x - x_opt) + z_star


def _ackley(z):
    D = z.shape[1]
    a = -20.0 * np.exp(-0.2 * np.sqrt(np.sum(z * z, axis=1) / D))
    return a - np.exp(np.sum(np.cos(2 * np.pi * z), axis=1) / D) + 20.0 + math.e


def _griewank(z):
    i = np.arange(1, z.shape[1] + 1)
    return 1.0 + np.sum(z * z, axis=1) / 4000.0 - np.prod(np.cos(z / np.sqrt(i)), axis=1)


def _levy(z):
    w = 1.0 + (z - 1.0) / 4.0
    head = np.sin(np.pi * w[:, 0]) ** 2
    mid = np.sum((w[:, :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:, :-1] + 1.0) ** 2), axis=1)
    tail = (w[:, -1] - 1.0) ** 2 * (1.0 + np.sin(2 * np.pi * w[:, -1]) ** 2)
    return head + mid + tail


def _rastrigin_plain(z):
    return _rastrigin_core(z)


def _salomon(z):
    r = np.sqrt(np.sum(z * z, axis=1))
    return 1.0 - np.cos(2 * np.pi * r) + 0.1 * r


def _alpine1(z):
    return np.sum(np.abs(z * np.sin(z) + 0.1 * z), axis=1)


def _zakharov(z):
    i = np.arange(1, z.shape[1] + 1)
    s = np.sum(0.5 * i * z, axis=1)
    return np.sum(z * z, axis=1) + s ** 2 + s ** 4


def _styblinski_g(z):
    return 0.5 * (z ** 4 - 16.0 * z ** 2 + 5.0 * z)


def _styblinski_root():
    z = -2.9
    for _ in range(50):
        z -= (4 * z ** 3 - 32 * z + 5) / (12 * z ** 2 - 32)
    return z


STYBLINSKI_ZSTAR = _styblinski_root()


def _styblinski_tang(z):
    return np.sum(_styblinski_g(z) - _styblinski_g(STYBLINSKI_ZSTAR), axis=1)


def _dixon_price(z):
    i = np.arange(2, z.shape[1] + 1)
    return (z[:, 0] - 1.0) ** 2 + np.sum(i * (2.0 * z[:, 1:] ** 2 - z[:, :-1]) ** 2, axis=1)


def _dixon_price_zstar(D):
    i = np.arange(1, D + 1)
    return 2.0 ** (-(2.0 ** i - 2.0) / 2.0 ** i)


def _schwefel_1_2(z):
    return np.sum(np.cumsum(z, axis=1) ** 2, axis=1)


# name -> (function of z, scale mapping the [-5,5] box onto the classical domain, z_star(D))
_TRANSFER = {
    "ackley": (_ackley, 32.768 / 5.0, lambda D: np.zeros(D)),
    "griewank": (_griewank, 100.0 / 5.0, lambda D: np.zeros(D)),
    "levy": (_levy, 10.0 / 5.0, lambda D: np.ones(D)),
    "rastrigin": (_rastrigin_plain, 5.12 / 5.0, lambda D: np.zeros(D)),
    "salomon": (_salomon, 100.0 / 5.0, lambda D: np.zeros(D)),
    "alpine1": (_alpine1, 10.0 / 5.0, lambda D: np.zeros(D)),
    "zakharov": (_zakharov, 10.0 / 5.0, lambda D: np.zeros(D)),
    "styblinski_tang": (_styblinski_tang, 1.0, lambda D: np.full(D, STYBLINSKI_ZSTAR)),
    "dixon_price": (_dixon_price, 10.0 / 5.0, _dixon_price_zstar),
    "schwefel_1_2": (_schwefel_1_2, 100.0 / 5.0, lambda D: np.zeros(D)),
}
TRANSFER_NAMES = tuple(_TRANSFER)


def _transfer_raw(X, P):
    z = P["scale"] * (X - P["x_opt"]) + P["z_star"]
    return _TRANSFER[P["name"]][0](z)


def make_transfer_problem(name, dimension, instance_id=0):
    """Transfer-suite instance; instances differ in the shift ``x_opt`` (f_opt = 0)."""
    if name not in _TRANSFER:
        raise ValueError(f"unknown transfer function {name!r}; known: {', '.join(TRANSFER_NAMES)}")
    pid = ProblemId(Suite.TRANSFER, name, int(instance_id), dimension)
    _, scale, zstar = _TRANSFER[name]
    rng = stream("transfer", name_key(name), int(instance_id), dimension)
    x_opt = rng.uniform(-4.0, 4.0, dimension)
    params = {"name": name, "scale": scale, "z_star": zstar(dimension), "x_opt": x_opt}
    return ProblemInstance(pid, x_opt, 0.0, _transfer_raw, params)
