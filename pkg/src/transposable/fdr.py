"""Step-up procedures, permutation q-values, an empirical-null local fdr and
true-FDP bookkeeping over rejection counts."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre
from scipy import special, stats as sps

from .core import rng_for
from .errors import DegenerateDensityError, NumericalWarning, ParameterError
from .sphere import central_window, rank_rows
from .stats import TestStatVector

PROCEDURES = ("bh", "by", "perm", "enull")
PERM_KEY = 0x9E7
Z_CLIP = 8.5
HIST_BINS = 60
POLY_DEGREE = 7
ENULL_WINDOW = 0.5


@dataclass(frozen=True)
class FdrReport:
    """FDR estimates and true FDP for rejecting the top ``k`` ranked rows.

    Index ``k - 1`` of every vector refers to ``k`` rejections.
    """

    ranking: np.ndarray
    perProcedure: dict = field(default_factory=dict)
    trueFdp: np.ndarray | None = None
    truthSet: np.ndarray | None = None

    @property
    def m(self):
        return self.ranking.size

    def at(self, k):
        """Row of values at ``k`` rejections: true FDP then each procedure."""
        if not 1 <= k <= self.m:
            raise ParameterError(f"k must lie in [1, {self.m}]")
        row = {"true_fdp": np.nan if self.trueFdp is None else float(self.trueFdp[k - 1])}
        for name in PROCEDURES:
            est = self.perProcedure.get(name)
            row[name] = np.nan if est is None else float(est[k - 1])
        return row


def _check_p(p):
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0:
        raise ParameterError("p must be nonempty")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ParameterError("p-values must lie in [0, 1]")
    return p


def _check_q(q):
    if not 0 < q < 1:
        raise ParameterError("q must lie in (0, 1)")


def harmonic(m):
    return float(np.sum(1.0 / np.arange(1, m + 1)))


def _stepup(p, level):
    m = p.size
    order = np.argsort(p, kind="stable")
    below = np.flatnonzero(p[order] <= level * np.arange(1, m + 1) / m)
    if below.size == 0:
        return np.array([], dtype=np.intp)
    return np.sort(order[: below[-1] + 1])


def bh_stepup(p, q):
    """Indices rejected by the Benjamini-Hochberg step-up rule at level ``q``."""
    p = _check_p(p)
    _check_q(q)
    return _stepup(p, q)


def by_stepup(p, q):
    """Benjamini-Yekutieli step-up: BH at level ``q / H_m``."""
    p = _check_p(p)
    _check_q(q)
    return _stepup(p, q / harmonic(p.size))


def _qcurve(sorted_p, factor):
    m = sorted_p.size
    raw = factor * m * sorted_p / np.arange(1, m + 1)
    return np.minimum(np.minimum.accumulate(raw[::-1])[::-1], 1.0)


def bh_curve(p):
    """BH estimate of FDR when rejecting the ``k`` smallest p-values, k = 1..m."""
    return _qcurve(np.sort(_check_p(p)), 1.0)


def by_curve(p):
    """BY estimate (BH times ``H_m``) for k = 1..m rejections."""
    p = _check_p(p)
    return _qcurve(np.sort(p), harmonic(p.size))


def qvalues(p, pi0=1.0):
    """Step-up q-values ``min_{j >= rank} pi0 m p_(j) / j`` in input order."""
    p = _check_p(p)
    order = np.argsort(p, kind="stable")
    q = np.empty_like(p)
    q[order] = _qcurve(p[order], pi0)
    return q


def pi0_estimate(p):
    """``2 * fraction(p > 0.5)`` clamped to ``[0.05, 1]``."""
    p = _check_p(p)
    return float(np.clip(2.0 * np.mean(p > 0.5), 0.05, 1.0))


@dataclass(frozen=True)
class PermutationResult:
    p: np.ndarray
    q: np.ndarray
    pi0: float
    B: int


def _abs_t_for_labels(X, labels, n1):
    # labels: (b, n) 0/1 indicators of class one
    n = X.shape[1]
    n2 = n - n1
    L1 = labels.T.astype(float)
    L2 = 1.0 - L1
    s1 = X @ L1
    s2 = X @ L2
    q1 = (X * X) @ L1
    q2 = (X * X) @ L2
    ss = q1 - s1 * s1 / n1 + q2 - s2 * s2 / n2
    ss = np.maximum(ss, 0.0)
    diff = s1 / n1 - s2 / n2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.abs(diff) / np.sqrt(ss / (n - 2) * (1.0 / n1 + 1.0 / n2))
    t[~np.isfinite(t)] = np.inf
    return t


TIE_RTOL = 1e-10


def permutation_labels(n, n1, B, seed):
    """``B`` class-one indicator rows, permutation ``b`` drawn from ``(seed, b)``."""
    labels = np.zeros((B, n), dtype=bool)
    for b in range(B):
        labels[b, rng_for(seed, PERM_KEY, b).permutation(n)[:n1]] = True
    return labels


def permutation_fdr(x, B, seed=0, chunk=250):
    """Pooled-permutation p-values, ``pi0`` and q-values for every row.

    Each of the ``B`` permutations relabels the columns at random, keeping the
    class sizes, and recomputes every row's ``|T|``. The p-value of row ``i``
    is ``(1 + #{b, j: |T*_bj| >= |T_i|} / m) / (B + 1)``.
    """
    if B < 1:
        raise ParameterError("B must be positive")
    if B < 100:
        warnings.warn(f"B={B} permutations give p-values no finer than "
                      f"{1 / (B + 1):.3g}", NumericalWarning, stacklevel=2)
    c1, c2 = x.require_classes()
    X = x.values
    m, n = X.shape
    n1 = c1.size
    observed = np.zeros((1, n), dtype=bool)
    observed[0, c1] = True
    t_obs = _abs_t_for_labels(X, observed, n1)[:, 0]
    labels = permutation_labels(n, n1, B, seed)
    null = np.concatenate([_abs_t_for_labels(X, labels[i:i + chunk], n1).ravel()
                           for i in range(0, B, chunk)])
    null.sort()
    # relabelings equivalent to the observed one must tie despite rounding
    exceed = null.size - np.searchsorted(null, t_obs * (1 - TIE_RTOL), side="left")
    p = (1.0 + exceed / m) / (B + 1.0)
    p = np.minimum(p, 1.0)
    pi0 = pi0_estimate(p)
    return PermutationResult(p, qvalues(p, pi0), pi0, int(B))


def permutation_curve(perm):
    """Permutation q-value at the ``k``-th smallest p-value, k = 1..m."""
    return _qcurve(np.sort(perm.p), perm.pi0)


def to_z(stats):
    """Map statistics to the normal scale through their null CDF."""
    v = np.asarray(stats.values, dtype=float)
    if stats.kind == "z":
        z = v.copy()
    else:
        # work in the lower tail for accuracy on both sides
        z = np.where(v > 0, -special.ndtri(special.stdtr(stats.df, -v)),
                     special.ndtri(special.stdtr(stats.df, v)))
    z[np.isnan(z)] = 0.0
    return np.clip(z, -Z_CLIP, Z_CLIP)


def truncated_normal_var(pi0):
    """Variance of N(0,1) restricted to its central ``pi0`` mass."""
    c = special.ndtri((1.0 + pi0) / 2.0)
    return 1.0 - 2.0 * c * sps.norm.pdf(c) / pi0


@dataclass(frozen=True)
class EmpiricalNullResult:
    z: np.ndarray
    delta: float
    sigma: float
    pi0: float
    local_fdr: np.ndarray
    degree: int


def _lindsey_density(z, bins, degree):
    import statsmodels.api as sm

    lo, hi = z.min(), z.max()
    counts, edges = np.histogram(z, bins=bins, range=(lo, hi))
    width = edges[1] - edges[0]
    mids = (edges[:-1] + edges[1:]) / 2

    def scaled(u):
        return 2.0 * (np.clip(u, lo, hi) - lo) / (hi - lo) - 1.0

    for deg in range(degree, 0, -1):
        design = legendre.legvander(scaled(mids), deg)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                res = sm.GLM(counts, design, family=sm.families.Poisson()).fit()
        except Exception:
            continue
        if res.converged and np.all(np.isfinite(res.params)):
            break
    else:
        raise DegenerateDensityError("density fit failed at every degree")
    if deg < degree:
        warnings.warn(f"density fit reduced to degree {deg}", NumericalWarning,
                      stacklevel=3)
    coef = res.params

    def density(u):
        mu = np.exp(legendre.legvander(scaled(u), deg) @ coef)
        return mu / (z.size * width)

    return density, deg


def empirical_null_fdr(stats, pi0_window=ENULL_WINDOW, bins=HIST_BINS, degree=POLY_DEGREE):
    """Local fdr under a normal null fitted to the central statistics.

    Statistics are mapped to z-scores. The null ``N(delta, sigma^2)`` matches
    the mean and variance of the z-scores inside the central ``pi0_window``
    quantile range, correcting the variance for truncation. The mixture
    density comes from a Poisson regression of histogram counts on a
    degree-``degree`` polynomial. ``local_fdr = min(1, pi0 f0 / f)``.
    """
    if not isinstance(stats, TestStatVector):
        raise ParameterError("stats must be a TestStatVector")
    if not 0 < pi0_window < 1:
        raise ParameterError("pi0_window must lie in (0, 1)")
    z = to_z(stats)
    m = z.size
    if m < 100:
        raise ParameterError("empirical null needs at least 100 statistics")
    if np.ptp(z) == 0:
        raise DegenerateDensityError("all statistics are equal")
    lo, hi = np.quantile(z, central_window(pi0_window))
    central = z[(z >= lo) & (z <= hi)]
    if central.size < 10 or np.ptp(central) == 0:
        raise DegenerateDensityError("central window is degenerate")
    delta = float(central.mean())
    sigma = float(np.sqrt(central.var(ddof=1) / truncated_normal_var(pi0_window)))
    null_mass = sps.norm.cdf(hi, delta, sigma) - sps.norm.cdf(lo, delta, sigma)
    pi0 = float(min(1.0, central.size / (m * null_mass)))
    density, deg = _lindsey_density(z, bins, degree)
    f = density(z)
    f0 = sps.norm.pdf(z, delta, sigma)
    tiny = np.finfo(float).tiny
    if np.any(f < tiny):
        warnings.warn("fitted density underflows; clamped", NumericalWarning,
                      stacklevel=2)
        f = np.maximum(f, tiny)
    lfdr = np.minimum(1.0, pi0 * f0 / f)
    return EmpiricalNullResult(z, delta, sigma, pi0, lfdr, deg)


def enull_curve(result, ranking):
    """Average local fdr over the top ``k`` ranked rows, k = 1..m."""
    lf = result.local_fdr[ranking]
    return np.cumsum(lf) / np.arange(1, lf.size + 1)


def true_fdp(ranking, truth):
    """``|top-k minus truth| / k`` for k = 1..m."""
    ranking = np.asarray(ranking)
    null = ~np.isin(ranking, np.asarray(truth))
    return np.cumsum(null) / np.arange(1, ranking.size + 1)


def fdr_curve(ranking, estimates, truth=None):
    """Assemble an :class:`FdrReport` from a ranking and per-procedure curves."""
    ranking = np.asarray(ranking, dtype=np.intp)
    m = ranking.size
    if not np.array_equal(np.sort(ranking), np.arange(m)):
        raise ParameterError("ranking must be a permutation of the rows")
    per = {}
    for name, est in estimates.items():
        if name not in PROCEDURES:
            raise ParameterError(f"unknown procedure {name!r}")
        est = np.asarray(est, dtype=float)
        if est.shape != (m,):
            raise ParameterError(f"{name} curve must have length {m}")
        per[name] = np.clip(est, 0.0, 1.0)
    if truth is None:
        return FdrReport(ranking, per)
    truth = np.unique(np.asarray(truth, dtype=np.intp))
    return FdrReport(ranking, per, true_fdp(ranking, truth), truth)


def run_procedures(stats, p, data=None, methods=PROCEDURES, perms=1000, seed=0,
                   pi0_window=ENULL_WINDOW, truth=None):
    """Rank rows by ``|stats|`` and compute every requested FDR curve.

    ``data`` is needed for the permutation procedure.
    """
    ranking = rank_rows(stats.values)
    est = {}
    for name in methods:
        if name == "bh":
            est[name] = bh_curve(p)
        elif name == "by":
            est[name] = by_curve(p)
        elif name == "perm":
            if data is None:
                raise ParameterError("the permutation procedure needs the data matrix")
            est[name] = permutation_curve(permutation_fdr(data, perms, seed))
        elif name == "enull":
            est[name] = enull_curve(empirical_null_fdr(stats, pi0_window), ranking)
        else:
            raise ParameterError(f"unknown procedure {name!r}")
    return fdr_curve(ranking, est, truth)
