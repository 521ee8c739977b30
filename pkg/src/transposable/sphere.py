"""De-correlating rows and columns of the noise, and central-portion rescaling."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats as sps

from .core import DataMatrix, decompose, sym_power
from .errors import NumericalWarning, ParameterError
from .stats import TestStatVector, row_t_stats

DEFAULT_PI0 = 0.8


def sym_inv_sqrt(A):
    """Symmetric inverse square root ``P diag(lam^-1/2) P'``.

    Eigenvalues below ``1e-12 * lam_max`` are floored to that value, with a
    :class:`NumericalWarning`.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError("A must be square")
    if not np.allclose(A, A.T, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise ParameterError("A must be symmetric")
    R, floored = sym_power(A, -0.5)
    if floored:
        warnings.warn(f"{floored} eigenvalue(s) floored before inverse square root",
                      NumericalWarning, stacklevel=2)
    return (R + R.T) / 2


@dataclass(frozen=True)
class SpheredData:
    data: DataMatrix
    fit: object
    signalMatrix: np.ndarray
    noise: np.ndarray

    @property
    def values(self):
        return self.data.values


def sphere(x, fit, rescale_columns=False):
    """Sphere the noise of ``x`` with a fitted row/column covariance pair.

    The noise from :func:`decompose` is transformed to
    ``SigmaHat^-1/2 N DeltaHat^-1/2``, centered again the same way (column,
    row and per-class row means removed) and the estimated signal is added
    back. Re-centering keeps each row's class-mean difference equal to the
    original estimate ``psi1Hat - psi2Hat``.

    With ``rescale_columns`` the sphered noise columns are also scaled to a
    common root-mean-square, which removes any remaining diagonal column
    covariance.
    """
    m, n = x.shape
    if fit.SigmaHat.shape != (m, m) or fit.DeltaHat.shape != (n, n):
        raise ParameterError(f"fit is {fit.SigmaHat.shape[0]}x{fit.DeltaHat.shape[0]}, "
                             f"data is {m}x{n}")
    dec = decompose(x)
    raw = sym_inv_sqrt(fit.SigmaHat) @ dec.noise @ sym_inv_sqrt(fit.DeltaHat)
    noise = decompose(x.with_values(raw)).noise
    if rescale_columns:
        rms = np.sqrt(np.mean(noise ** 2, axis=0))
        noise = noise * (np.sqrt(np.mean(rms ** 2)) / rms)
        noise = decompose(x.with_values(noise)).noise
    return SpheredData(x.with_values(dec.signalMatrix + noise), fit,
                       dec.signalMatrix, noise)


@dataclass(frozen=True)
class CentralMatchResult:
    scaledStats: TestStatVector
    pi0: float
    sigmaCentralObserved: float
    sigmaCentralReference: float

    @property
    def scale(self):
        return self.sigmaCentralReference / self.sigmaCentralObserved


def central_window(pi0):
    return (1.0 - pi0) / 2.0, (1.0 + pi0) / 2.0


def t_central_variance(df, pi0):
    """Variance of ``t_df`` restricted to its central ``pi0`` probability mass."""
    if pi0 == 1.0:
        if df <= 2:
            raise ParameterError("t variance needs df > 2")
        return df / (df - 2.0)
    a = sps.t.ppf((1.0 + pi0) / 2.0, df)
    val, _ = integrate.quad(lambda u: u * u * sps.t.pdf(u, df), -a, a,
                            epsabs=0.0, epsrel=1e-10)
    return val / pi0


def central_match(stats, pi0=DEFAULT_PI0):
    """Rescale statistics so their central portion matches ``t_df``.

    The window runs between the empirical ``(1-pi0)/2`` and ``(1+pi0)/2``
    quantiles (linear interpolation, closed boundaries). Its sample
    variance is matched to the variance of the same central mass of the
    reference t distribution.
    """
    if not 0 < pi0 <= 1:
        raise ParameterError("pi0 must lie in (0, 1]")
    v = stats.values
    ok = ~stats.flags & np.isfinite(v)
    if ok.sum() < 20:
        raise ParameterError("need at least 20 finite statistics")
    finite = v[ok]
    lo, hi = np.quantile(finite, central_window(pi0))
    central = finite[(finite >= lo) & (finite <= hi)]
    if central.size < 10:
        raise ParameterError("fewer than 10 statistics inside the central window")
    obs = float(np.sqrt(central.var(ddof=1)))
    ref = float(np.sqrt(t_central_variance(stats.df, pi0)))
    scaled = stats.replace(v * (ref / obs), kind="t_central_matched")
    return CentralMatchResult(scaled, float(pi0), obs, ref)


def rank_rows(values):
    """Row indices by decreasing ``|value|``, ties broken by row index."""
    a = np.abs(np.asarray(values, dtype=float))
    return np.lexsort((np.arange(a.size), -a))


def filter_rows(x, keep):
    """Keep the ``keep`` rows with largest un-sphered ``|T|``.

    Returns the filtered data (rows in original order) and the original
    indices of the retained rows.
    """
    m = x.shape[0]
    if keep < 2:
        raise ParameterError("keep must be at least 2")
    if keep > m:
        raise ParameterError(f"keep={keep} exceeds the {m} available rows")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericalWarning)
        t = row_t_stats(x)
    index = np.sort(rank_rows(t.values)[:keep])
    return x.take_rows(index), index
