"""Cheap exploratory landscape analysis (ELA) features of a trajectory sample.

Only the points an optimizer already evaluated are used; nothing here has
access to the objective function.  Every feature set works on the sample in
a canonical row order (ascending y, ties broken lexicographically on X), so
all features are exactly invariant to row permutations of the input.

The 38-entry catalog in :data:`ELA_CATALOG` is the versioned contract used
by downstream code; ``docs/ela_catalog.md`` lists it with definitions.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .featvec import FeatureVector, Invalid, collect

__all__ = [
    "ELA_CATALOG",
    "ELA_CATALOG_VERSION",
    "IC_EPSILONS",
    "Sample",
    "canonical_order",
    "compute_ela",
    "ela_dispersion",
    "ela_distribution",
    "ela_information_content",
    "ela_levelset",
    "ela_meta_model",
    "ela_nbc",
    "nbc_distances",
    "nbc_stats",
    "nn_tour",
    "pairwise_distances",
]

LEVELSET_QUANTILES = (0.10, 0.25, 0.50)
DISPERSION_QUANTILES = (0.02, 0.05, 0.10, 0.25)
IC_EPSILONS = np.concatenate([[0.0], 10.0 ** np.linspace(-5, 15, 1000)])
IC_SETTLING = 0.05
CV_FOLDS = 5


@dataclass
class Sample:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y must have the same number of rows")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("sample contains missing or non-finite values")

    @property
    def n(self):
        return len(self.y)

    @property
    def dim(self):
        return self.X.shape[1]


def _as_sample(s, y=None):
    if isinstance(s, Sample):
        return s
    return Sample(s, y)


def canonical_order(X, y):
    """Row order by ascending y, ties broken lexicographically on the columns of X."""
    keys = [X[:, j] for j in range(X.shape[1] - 1, -1, -1)] + [y]
    return np.lexsort(keys)


def _canonical(s):
    o = canonical_order(s.X, s.y)
    return Sample(s.X[o], s.y[o])


def pairwise_distances(X):
    """Euclidean distance matrix, accumulated column by column."""
    n = X.shape[0]
    d2 = np.zeros((n, n))
    for j in range(X.shape[1]):
        diff = X[:, None, j] - X[None, :, j]
        d2 += diff * diff
    return np.sqrt(d2)


# --------------------------------------------------------------------------
# y-distribution


def _kde_peaks(y):
    n = len(y)
    sd = float(np.std(y, ddof=1))
    iqr = float(np.subtract(*np.quantile(y, [0.75, 0.25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    h = 0.9 * spread * n ** -0.2
    grid = np.linspace(y.min() - 3 * h, y.max() + 3 * h, 512)
    dens = np.exp(-0.5 * ((grid[:, None] - y[None, :]) / h) ** 2).sum(axis=1)
    inner = (dens[1:-1] > dens[:-2]) & (dens[1:-1] >= dens[2:])
    return int(np.count_nonzero(inner & (dens[1:-1] > 0.1 * dens.max())))


def ela_distribution(s, y=None):
    s = _canonical(_as_sample(s, y))
    yv = s.y
    constant = bool(np.all(yv == yv[0]))

    def moment(fn):
        if constant:
            raise Invalid("constant_y")
        return fn(yv)

    return collect([
        ("distr_skewness", lambda: moment(lambda v: stats.skew(v))),
        ("distr_kurtosis", lambda: moment(lambda v: stats.kurtosis(v))),
        ("distr_n_peaks", lambda: 1 if constant else _kde_peaks(yv)),
    ])


# --------------------------------------------------------------------------
# levelset


def _regularized_inverse(S, D):
    """Inverse and log-determinant of a covariance, ridge-regularized if needed."""
    for ridge in (0.0, 1e-6 * np.trace(S) / D):
        A = S + ridge * np.eye(D)
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            continue
        if np.min(np.diag(L)) ** 2 <= 1e-12 * np.max(np.diag(L)) ** 2:
            continue
        Linv = np.linalg.inv(L)
        return Linv.T @ Linv, 2.0 * float(np.sum(np.log(np.diag(L))))
    raise Invalid("singular_covariance")


def _discriminant_errors(Xtr, ltr, Xte, lte, quadratic):
    D = Xtr.shape[1]
    classes = (False, True)
    scores = np.empty((len(Xte), 2))
    if not quadratic:
        pooled = np.zeros((D, D))
        for c in classes:
            Z = Xtr[ltr == c] - Xtr[ltr == c].mean(axis=0)
            pooled += Z.T @ Z
        dof = len(Xtr) - 2
        if dof <= 0:
            raise Invalid("too_few_points")
        P, _ = _regularized_inverse(pooled / dof, D)
    for k, c in enumerate(classes):
        Xc = Xtr[ltr == c]
        if len(Xc) < 2:
            raise Invalid("degenerate_classes")
        mu = Xc.mean(axis=0)
        prior = math.log(len(Xc) / len(Xtr))
        if quadratic:
            Z = Xc - mu
            P, logdet = _regularized_inverse(Z.T @ Z / (len(Xc) - 1), D)
        else:
            logdet = 0.0
        d = Xte - mu
        scores[:, k] = -0.5 * np.einsum("ij,jk,ik->i", d, P, d) - 0.5 * logdet + prior
    pred = scores[:, 1] > scores[:, 0]
    return float(np.mean(pred != lte))


def _cv_mmce(X, labels, quadratic):
    folds = np.empty(len(labels), dtype=int)
    for c in (False, True):
        idx = np.flatnonzero(labels == c)
        folds[idx] = np.arange(len(idx)) % CV_FOLDS
    errs = []
    for k in range(CV_FOLDS):
        te = folds == k
        if not te.any():
            continue
        errs.append(_discriminant_errors(X[~te], labels[~te], X[te], labels[te], quadratic))
    return float(np.mean(errs))


def ela_levelset(s, y=None, quantiles=LEVELSET_QUANTILES):
    s = _canonical(_as_sample(s, y))
    pairs = []
    for q in quantiles:
        tag = f"q{int(round(q * 100)):02d}"
        labels = s.y <= np.quantile(s.y, q)
        n_low = int(labels.sum())
        degenerate = min(n_low, len(labels) - n_low) < 2
        cache = {}

        def mmce(quadratic, labels=labels, degenerate=degenerate, cache=cache):
            if degenerate:
                raise Invalid("degenerate_classes")
            if quadratic not in cache:
                try:
                    cache[quadratic] = _cv_mmce(s.X, labels, quadratic)
                except Invalid as exc:
                    cache[quadratic] = exc
            if isinstance(cache[quadratic], Invalid):
                raise cache[quadratic]
            return cache[quadratic]

        def ratio(mmce=mmce):
            den = mmce(True)
            if den == 0:
                raise Invalid("zero_denominator")
            return mmce(False) / den

        pairs += [
            (f"levelset_mmce_lda_{tag}", lambda mmce=mmce: mmce(False)),
            (f"levelset_mmce_qda_{tag}", lambda mmce=mmce: mmce(True)),
            (f"levelset_ratio_lda_qda_{tag}", ratio),
        ]
    return collect(pairs)


# --------------------------------------------------------------------------
# meta-model


def _design(X, kind):
    n, D = X.shape
    cols = [np.ones(n)] + [X[:, j] for j in range(D)]
    if kind in ("quad", "quad_interact"):
        cols += [X[:, j] ** 2 for j in range(D)]
    if kind in ("lin_interact", "quad_interact"):
        cols += [X[:, i] * X[:, j] for i in range(D) for j in range(i + 1, D)]
    return np.column_stack(cols)


def _fit(X, y, kind):
    A = _design(X, kind)
    n, k = A.shape
    if n <= k:
        raise Invalid("too_few_points")
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0:
        raise Invalid("constant_y")
    r2 = 1.0 - float(resid @ resid) / sst
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k)
    return coef, adj


def ela_meta_model(s, y=None):
    s = _canonical(_as_sample(s, y))
    D = s.dim
    cache = {}

    def fit(kind):
        if kind not in cache:
            try:
                cache[kind] = _fit(s.X, s.y, kind)
            except Invalid as exc:
                cache[kind] = exc
        if isinstance(cache[kind], Invalid):
            raise cache[kind]
        return cache[kind]

    def lin_abs():
        return np.abs(fit("lin")[0][1 : D + 1])

    def ratio(v):
        lo = float(v.min())
        if lo == 0:
            raise Invalid("zero_denominator")
        return float(v.max()) / lo

    return collect([
        ("meta_adjr2_lin", lambda: fit("lin")[1]),
        ("meta_adjr2_lin_interact", lambda: fit("lin_interact")[1]),
        ("meta_adjr2_quad", lambda: fit("quad")[1]),
        ("meta_adjr2_quad_interact", lambda: fit("quad_interact")[1]),
        ("meta_lin_coef_min", lambda: lin_abs().min()),
        ("meta_lin_coef_max", lambda: lin_abs().max()),
        ("meta_lin_coef_max_by_min", lambda: ratio(lin_abs())),
        ("meta_quad_cond", lambda: ratio(np.abs(fit("quad")[0][D + 1 : 2 * D + 1]))),
    ])


# --------------------------------------------------------------------------
# dispersion


def ela_dispersion(s, y=None, quantiles=DISPERSION_QUANTILES):
    s = _canonical(_as_sample(s, y))
    n = s.n
    dist = pairwise_distances(s.X)
    iu = np.triu_indices(n, 1)
    all_d = dist[iu]
    full_mean, full_median = float(all_d.mean()), float(np.median(all_d))
    pairs = []
    for q in quantiles:
        tag = f"q{int(round(q * 100)):02d}"
        k = int(math.ceil(q * n - 1e-9))
        if k >= 2:
            sub = dist[:k, :k][np.triu_indices(k, 1)]
            m_q, med_q = float(sub.mean()), float(np.median(sub))
        else:
            m_q = med_q = None

        def stat(which, kind, m_q=m_q, med_q=med_q):
            if m_q is None:
                raise Invalid("too_few_points")
            a, b = (m_q, full_mean) if which == "mean" else (med_q, full_median)
            if kind == "diff":
                return a - b
            if b == 0:
                raise Invalid("zero_denominator")
            return a / b

        for kind in ("ratio", "diff"):
            for which in ("mean", "median"):
                pairs.append((f"disp_{kind}_{which}_{tag}", lambda w=which, k_=kind, st=stat: st(w, k_)))
    return collect(pairs)


# --------------------------------------------------------------------------
# information content


def nn_tour(X, dist=None):
    """Nearest-neighbour chain starting at row 0; ties go to the lower row index."""
    n = X.shape[0]
    dist = pairwise_distances(X) if dist is None else dist
    visited = np.zeros(n, dtype=bool)
    tour = [0]
    visited[0] = True
    for _ in range(n - 1):
        d = np.where(visited, np.inf, dist[tour[-1]])
        nxt = int(np.argmin(d))
        tour.append(nxt)
        visited[nxt] = True
    return np.array(tour)


def ic_symbols(ratios, eps):
    """Symbol sequences in {-1, 0, 1} for each epsilon (rows) and step (columns)."""
    r = np.asarray(ratios)[None, :]
    e = np.asarray(eps, dtype=float)[:, None]
    return np.where(r > e, 1, np.where(r < -e, -1, 0))


def ic_entropy(sym):
    """Entropy (base 6) of consecutive unequal symbol pairs, per row."""
    sym = np.atleast_2d(sym)
    a, b = sym[:, :-1] + 1, sym[:, 1:] + 1
    codes = a * 3 + b
    m = codes.shape[1]
    H = np.zeros(sym.shape[0])
    for c in range(9):
        if c // 3 == c % 3:
            continue
        p = np.count_nonzero(codes == c, axis=1) / m
        with np.errstate(divide="ignore", invalid="ignore"):
            H -= np.where(p > 0, p * np.log(p) / math.log(6.0), 0.0)
    return H


def ic_partial_information(sym):
    """Length of the sequence with zeros and repeats removed, over the sequence length."""
    sym = np.asarray(sym)
    nz = sym[sym != 0]
    if nz.size == 0:
        return 0.0
    mu = 1 + int(np.count_nonzero(nz[1:] != nz[:-1]))
    return mu / len(sym)


def ela_information_content(s, y=None):
    s = _canonical(_as_sample(s, y))
    tour = nn_tour(s.X)
    dx = np.sqrt(np.sum(np.diff(s.X[tour], axis=0) ** 2, axis=1))
    dy = np.diff(s.y[tour])
    keep = dx > 0
    ratios = dy[keep] / dx[keep]
    usable = ratios.size >= 5
    if usable:
        H = ic_entropy(ic_symbols(ratios, IC_EPSILONS))
        imax = int(np.argmax(H))
        settled = np.flatnonzero(H < IC_SETTLING)

    def guarded(fn):
        def g():
            if not usable:
                raise Invalid("too_few_steps")
            return fn()
        return g

    def log_eps(e):
        if e <= 0:
            raise Invalid("zero_epsilon")
        return math.log10(e)

    def eps_s():
        if settled.size == 0:
            raise Invalid("not_settled")
        return log_eps(IC_EPSILONS[settled[0]])

    return collect([
        ("ic_h_max", guarded(lambda: H[imax])),
        ("ic_eps_s", guarded(eps_s)),
        ("ic_eps_max", guarded(lambda: log_eps(IC_EPSILONS[imax]))),
        ("ic_eps_ratio", guarded(lambda: ic_eps_ratio(H, settled, imax))),
        ("ic_m0", guarded(lambda: ic_partial_information(ic_symbols(ratios, [0.0])[0]))),
    ])


def ic_eps_ratio(H, settled, imax):
    if settled.size == 0:
        raise Invalid("not_settled")
    e_max, e_s = IC_EPSILONS[imax], IC_EPSILONS[settled[0]]
    if e_max <= 0 or e_s <= 0:
        raise Invalid("zero_epsilon")
    return math.log10(e_max / e_s)


# --------------------------------------------------------------------------
# nearest-better clustering


def nbc_distances(X, y):
    """Nearest-neighbour and nearest-better distances of a canonically ordered sample.

    Row ``i`` is better than row ``j`` when ``i < j`` (the sample is sorted by
    y with deterministic tie-breaking).  Returns ``(d_nn, d_nb, nb_index)``;
    the best point gets ``d_nb = max`` of the others and ``nb_index = -1``.
    """
    n = len(y)
    dist = pairwise_distances(X)
    d_nn = np.where(np.eye(n, dtype=bool), np.inf, dist).min(axis=1)
    d_nb = np.empty(n)
    nb = np.full(n, -1)
    for i in range(1, n):
        j = int(np.argmin(dist[i, :i]))
        nb[i], d_nb[i] = j, dist[i, j]
    d_nb[0] = d_nb[1:].max() if n > 1 else 0.0
    return d_nn, d_nb, nb


def nbc_stats(d_nn, d_nb, nb):
    """The five NBC features from the per-point distances."""
    n = len(d_nn)
    indeg = np.bincount(nb[nb >= 0], minlength=n).astype(float)
    rank = np.arange(n, dtype=float)

    def sd_ratio():
        den = np.std(d_nb, ddof=1)
        if den == 0:
            raise Invalid("zero_variance")
        return np.std(d_nn, ddof=1) / den

    def cor(a, b):
        if np.std(a) == 0 or np.std(b) == 0:
            raise Invalid("zero_variance")
        return float(np.corrcoef(a, b)[0, 1])

    def mean_ratio():
        den = np.mean(d_nb)
        if den == 0:
            raise Invalid("zero_denominator")
        return np.mean(d_nn) / den

    def cv_ratio():
        if np.any(d_nn == 0):
            raise Invalid("duplicate_points")
        r = d_nb / d_nn
        return np.std(r, ddof=1) / np.mean(r)

    return collect([
        ("nbc_nn_nb_sd_ratio", sd_ratio),
        ("nbc_nn_nb_mean_ratio", mean_ratio),
        ("nbc_nn_nb_cor", lambda: cor(d_nn, d_nb)),
        ("nbc_dist_ratio_coeff_var", cv_ratio),
        ("nbc_nb_fitness_cor", lambda: cor(indeg, rank)),
    ])


def ela_nbc(s, y=None):
    s = _canonical(_as_sample(s, y))
    if s.n < 5:
        raise ValueError("nearest-better clustering needs at least 5 points")
    return nbc_stats(*nbc_distances(s.X, s.y))


# --------------------------------------------------------------------------
# catalog


ELA_CATALOG_VERSION = "ela-catalog-1"
ELA_CATALOG = (
    "distr_skewness", "distr_kurtosis", "distr_n_peaks",
    "levelset_mmce_lda_q10", "levelset_mmce_qda_q10", "levelset_ratio_lda_qda_q10",
    "levelset_mmce_lda_q25", "levelset_mmce_qda_q25", "levelset_ratio_lda_qda_q25",
    "levelset_mmce_lda_q50", "levelset_mmce_qda_q50", "levelset_ratio_lda_qda_q50",
    "meta_adjr2_lin", "meta_adjr2_lin_interact", "meta_adjr2_quad", "meta_adjr2_quad_interact",
    "meta_lin_coef_min", "meta_lin_coef_max", "meta_lin_coef_max_by_min", "meta_quad_cond",
    "disp_ratio_mean_q02", "disp_ratio_median_q02",
    "disp_ratio_mean_q05", "disp_ratio_median_q05",
    "disp_ratio_mean_q10", "disp_ratio_median_q10",
    "disp_ratio_mean_q25", "disp_ratio_median_q25",
    "ic_h_max", "ic_eps_s", "ic_eps_max", "ic_eps_ratio", "ic_m0",
    "nbc_nn_nb_sd_ratio", "nbc_nn_nb_mean_ratio", "nbc_nn_nb_cor",
    "nbc_dist_ratio_coeff_var", "nbc_nb_fitness_cor",
)


def compute_ela(s, y=None, catalog=ELA_CATALOG):
    """All catalog features for one run's trajectory sample.

    Degenerate inputs never raise; affected entries are NaN with a reason code.
    """
    s = _canonical(_as_sample(s, y))
    full = ela_distribution(s)
    for block in (ela_levelset, ela_meta_model, ela_dispersion, ela_information_content):
        full = full.concat(block(s))
    if s.n >= 5:
        full = full.concat(ela_nbc(s))
    values, reasons = [], {}
    for name in catalog:
        if name in full.names:
            values.append(full[name])
            if name in full.reasons:
                reasons[name] = full.reasons[name]
        else:
            values.append(np.nan)
            reasons[name] = "too_few_points"
    return FeatureVector(tuple(catalog), np.array(values), reasons)
