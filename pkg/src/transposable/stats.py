"""Two-sample row statistics, the column-correlation variance factor and p-values."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import DataMatrix, rng_for, sym_power
from .errors import NumericalWarning, ParameterError

KINDS = ("z", "t", "t_sphered", "t_central_matched")


@dataclass(frozen=True)
class TestStatVector:
    """Per-row statistics.

    Rows whose pooled variance is zero are flagged; their value is
    ``+inf`` or ``-inf`` following the sign of the mean difference
    (``+inf`` when the difference is also zero).
    """

    __test__ = False  # keep pytest from collecting this class

    values: np.ndarray
    kind: str
    df: int
    c_n: float
    flags: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown statistic kind {self.kind!r}")
        if self.kind != "z" and self.df <= 0:
            raise ParameterError("t statistics need df > 0")
        values = np.asarray(self.values, dtype=float)
        flags = (np.zeros(values.shape, bool) if self.flags is None
                 else np.asarray(self.flags, dtype=bool))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flags", flags)

    def __len__(self):
        return self.values.size

    def replace(self, values, kind=None):
        return TestStatVector(values, kind or self.kind, self.df, self.c_n, self.flags)


def _class_means(x):
    c1, c2 = x.require_classes()
    X = x.values
    return X[:, c1], X[:, c2]


def c_n(n1, n2):
    return 1.0 / n1 + 1.0 / n2


def row_t_stats(x, kind="t"):
    """Pooled-variance two-sample t statistic for every row."""
    x1, x2 = _class_means(x)
    n1, n2 = x1.shape[1], x2.shape[1]
    diff = x1.mean(axis=1) - x2.mean(axis=1)
    ss = ((x1 - x1.mean(axis=1, keepdims=True)) ** 2).sum(axis=1) \
        + ((x2 - x2.mean(axis=1, keepdims=True)) ** 2).sum(axis=1)
    df = n1 + n2 - 2
    cn = c_n(n1, n2)
    s = np.sqrt(ss / df)
    flags = s == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = diff / (s * np.sqrt(cn))
    if flags.any():
        t[flags] = np.where(diff[flags] < 0, -np.inf, np.inf)
        warnings.warn(f"{int(flags.sum())} row(s) have zero pooled variance; "
                      "flagged as infinite", NumericalWarning, stacklevel=2)
    return TestStatVector(t, kind, df, cn, flags)


def row_z_stats(x, sigma):
    """Two-sample z statistic with known per-row standard deviations."""
    x1, x2 = _class_means(x)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (x1.shape[0],))
    if np.any(sigma <= 0):
        raise ParameterError("sigma must be positive")
    n1, n2 = x1.shape[1], x2.shape[1]
    cn = c_n(n1, n2)
    z = (x1.mean(axis=1) - x2.mean(axis=1)) / (sigma * np.sqrt(cn))
    return TestStatVector(z, "z", n1 + n2 - 2, cn)


def class_weights(n, class1, class2):
    w = np.zeros(n)
    class1 = np.asarray(class1)
    class2 = np.asarray(class2)
    w[class1] = 1.0 / class1.size
    w[class2] = -1.0 / class2.size
    return w


def eta(delta, class1, class2):
    """Variance inflation of the mean difference, ``w' Delta w``.

    ``w`` is ``1/n1`` on class one and ``-1/n2`` on class two, so the
    two-sample z statistic has variance ``eta / c_n``.
    """
    delta = np.asarray(delta, dtype=float)
    w = class_weights(delta.shape[0], class1, class2)
    return float(w @ delta @ w)


def eta_blocked(delta1, delta2):
    """``eta`` for block-diagonal column covariance (no cross-class correlation)."""
    d1 = np.asarray(delta1, dtype=float)
    d2 = np.asarray(delta2, dtype=float)
    return float(d1.sum() / d1.shape[0] ** 2 + d2.sum() / d2.shape[0] ** 2)


def t_null_variance_mc(delta, class1, class2, reps=100_000, seed=0, chunk=20_000):
    """Monte-Carlo variance of the null t statistic under column covariance ``delta``.

    Simulates ``reps`` independent rows ``x ~ N(0, delta)`` and returns the
    sample variance of their t statistics and its standard error.
    """
    if reps < 10_000:
        raise ParameterError("reps must be at least 1e4")
    delta = np.asarray(delta, dtype=float)
    n = delta.shape[0]
    root, _ = sym_power(delta, 0.5)
    rng = rng_for(seed)
    parts = []
    done = 0
    while done < reps:
        k = min(chunk, reps - done)
        rows = rng.standard_normal((k, n)) @ root
        t = row_t_stats(DataMatrix(rows, class1, class2)).values
        parts.append(t)
        done += k
    t = np.concatenate(parts)
    var = t.var(ddof=1)
    # se of a sample variance from the fourth central moment
    m4 = np.mean((t - t.mean()) ** 4)
    se = np.sqrt(max(m4 - var ** 2, 0.0) / t.size)
    return float(var), float(se)


def t_cdf(x, df):
    """Central t CDF via the regularized incomplete beta function."""
    return special.stdtr(df, x)


def p_values(stats, reference="t_df", scale=1.0):
    """Two-sided p-values against ``t_df`` or a scaled ``t_df``.

    Flagged statistics get p = 0.
    """
    if stats.df <= 0:
        raise ParameterError("df must be positive")
    if reference == "t_df":
        scale = 1.0
    elif reference != "scaled_t":
        raise ParameterError(f"unknown reference {reference!r}")
    if scale <= 0:
        raise ParameterError("scale must be positive")
    a = np.abs(stats.values) / scale
    p = 2.0 * special.stdtr(stats.df, -a)
    p = np.clip(p, 0.0, 1.0)
    if stats.flags.any():
        p[stats.flags] = 0.0
        warnings.warn(f"{int(stats.flags.sum())} flagged statistic(s) mapped to p = 0",
                      NumericalWarning, stacklevel=2)
    return p

