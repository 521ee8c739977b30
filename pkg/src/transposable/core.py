"""Mean-restricted matrix-variate normal model and the mean/signal/noise split.

The model is ``X = M + S + N`` with ``M = nu 1' + 1 mu'``, a two-class signal
``S = [psi1 1' psi2 1']`` and ``vec(N) ~ N(0, Delta kron Sigma)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import DegenerateClassError, NumericalWarning, ParameterError

SYM_TOL = 1e-10
EIG_FLOOR = 1e-12


def _as_index(idx, n):
    idx = np.unique(np.asarray(idx, dtype=np.intp))
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise ParameterError("class index out of range")
    return idx


@dataclass(frozen=True)
class DataMatrix:
    """An m x n matrix with optional two-class column labels.

    ``class1`` and ``class2`` are sorted, disjoint index arrays that together
    cover every column, or both ``None`` for unlabeled data.
    """

    values: np.ndarray
    class1: np.ndarray | None = None
    class2: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ParameterError("values must be a 2-d matrix")
        m, n = values.shape
        if m < 2 or n < 4:
            raise ParameterError(f"need m >= 2 and n >= 4, got {m}x{n}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if (self.class1 is None) != (self.class2 is None):
            raise ParameterError("give both class index sets or neither")
        if self.class1 is not None:
            c1 = _as_index(self.class1, n)
            c2 = _as_index(self.class2, n)
            if np.intersect1d(c1, c2).size or c1.size + c2.size != n:
                raise ParameterError("class labels must partition the columns")
            c1.setflags(write=False)
            c2.setflags(write=False)
            object.__setattr__(self, "class1", c1)
            object.__setattr__(self, "class2", c2)

    @classmethod
    def two_class(cls, values, n1):
        """Label the first ``n1`` columns class one, the rest class two."""
        n = np.shape(values)[1]
        return cls(values, np.arange(n1), np.arange(n1, n))

    @property
    def shape(self):
        return self.values.shape

    @property
    def labeled(self):
        return self.class1 is not None

    def require_classes(self):
        if not self.labeled:
            raise ParameterError("operation needs class labels")
        if self.class1.size < 2 or self.class2.size < 2:
            raise DegenerateClassError("each class needs at least 2 columns")
        return self.class1, self.class2

    def with_values(self, values):
        return DataMatrix(values, self.class1, self.class2)

    def take_rows(self, rows):
        return DataMatrix(self.values[np.asarray(rows)], self.class1, self.class2)


def check_spd(a, name="matrix"):
    """Validate symmetry (1e-10) and positive definiteness; return the array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError(f"{name} must be square")
    if not np.allclose(a, a.T, atol=SYM_TOL, rtol=0):
        raise ParameterError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(a)[0] <= 0:
        raise ParameterError(f"{name} is not positive definite")
    return a


@dataclass(frozen=True)
class MatrixNormalParams:
    nu: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    Delta: np.ndarray

    def __post_init__(self):
        Sigma = check_spd(self.Sigma, "Sigma")
        Delta = check_spd(self.Delta, "Delta")
        m, n = Sigma.shape[0], Delta.shape[0]
        nu = np.broadcast_to(np.asarray(self.nu, dtype=float), (m,)).copy()
        mu = np.broadcast_to(np.asarray(self.mu, dtype=float), (n,)).copy()
        for name, val in (("nu", nu), ("mu", mu), ("Sigma", Sigma), ("Delta", Delta)):
            val = np.array(val)
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def centered(cls, Sigma, Delta):
        return cls(0.0, 0.0, Sigma, Delta)

    @property
    def shape(self):
        return self.Sigma.shape[0], self.Delta.shape[0]


@dataclass(frozen=True)
class SignalSpec:
    """Per-class row means; rows with ``psi1 == psi2`` are null."""

    psi1: np.ndarray
    psi2: np.ndarray

    def __post_init__(self):
        p1 = np.asarray(self.psi1, dtype=float).ravel()
        p2 = np.asarray(self.psi2, dtype=float).ravel()
        if p1.shape != p2.shape:
            raise ParameterError("psi1 and psi2 must have equal length")
        object.__setattr__(self, "psi1", p1)
        object.__setattr__(self, "psi2", p2)

    @classmethod
    def block(cls, m, n_nonnull=50, effect=0.5):
        """First half of the non-null rows +effect/-effect, second half flipped."""
        psi1 = np.zeros(m)
        half = n_nonnull // 2
        psi1[:half] = effect
        psi1[half:n_nonnull] = -effect
        return cls(psi1, -psi1)

    @property
    def nonnull(self):
        return np.flatnonzero(self.psi1 != self.psi2)

    def matrix(self, n1, n2):
        return np.hstack([np.repeat(self.psi1[:, None], n1, axis=1),
                          np.repeat(self.psi2[:, None], n2, axis=1)])


@dataclass(frozen=True)
class DecompositionFit:
    meanMatrix: np.ndarray
    signalMatrix: np.ndarray
    noise: np.ndarray
    nuHat: np.ndarray
    muHat: np.ndarray
    psi1Hat: np.ndarray
    psi2Hat: np.ndarray


def sym_power(a, power, floor=EIG_FLOOR):
    """Symmetric matrix power ``P diag(lam**power) P'``.

    Eigenvalues below ``floor * lam_max`` are raised to that threshold.
    Returns ``(result, floored)`` where ``floored`` counts raised eigenvalues.
    """
    a = np.asarray(a, dtype=float)
    lam, P = np.linalg.eigh((a + a.T) / 2)
    thresh = floor * max(lam[-1], 0.0)
    floored = int(np.sum(lam < thresh))
    if thresh <= 0:
        raise ParameterError("matrix has no positive eigenvalue")
    lam = np.maximum(lam, thresh)
    return (P * lam ** power) @ P.T, floored


def rng_for(seed, *key):
    """Independent generator for ``(seed, *key)``, order-independent."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=int(seed),
                                               spawn_key=tuple(int(k) for k in key))))


def sample_matrix_normal(params, signal=None, seed=0, n1=None):
    """Draw ``X = M + S + Sigma^{1/2} Z Delta^{1/2}`` with iid N(0,1) ``Z``.

    When ``signal`` is given the first ``n1`` columns form class one
    (default ``n // 2``); the returned matrix is labeled accordingly.
    """
    m, n = params.shape
    rng = seed if isinstance(seed, np.random.Generator) else rng_for(seed)
    root_s, _ = sym_power(params.Sigma, 0.5)
    root_d, _ = sym_power(params.Delta, 0.5)
    z = rng.standard_normal((m, n))
    x = params.nu[:, None] + params.mu[None, :] + root_s @ z @ root_d
    if n1 is None:
        n1 = n // 2
    if signal is not None:
        if signal.psi1.size != m:
            raise ParameterError("signal length must equal m")
        x = x + signal.matrix(n1, n - n1)
    return DataMatrix.two_class(x, n1)


def decompose(x):
    """Split labeled data into mean, class signal and residual noise.

    Column means are removed first, then row means of the column-centered
    data, then per-class row means of what is left.
    """
    c1, c2 = x.require_classes()
    X = x.values
    mu_hat = X.mean(axis=0)
    Xc = X - mu_hat
    nu_hat = Xc.mean(axis=1)
    R = Xc - nu_hat[:, None]
    psi1 = R[:, c1].mean(axis=1)
    psi2 = R[:, c2].mean(axis=1)
    mean = nu_hat[:, None] + mu_hat[None, :]
    signal = np.empty_like(X)
    signal[:, c1] = psi1[:, None]
    signal[:, c2] = psi2[:, None]
    noise = X - mean - signal
    return DecompositionFit(mean, signal, noise, nu_hat, mu_hat, psi1, psi2)


def ar1_cov(dim, rho):
    i = np.arange(dim)
    return float(rho) ** np.abs(i[:, None] - i[None, :])


def make_structured_cov(kind, dim, rho, block=None):
    """AR(1) covariance ``rho**|i-j|``, optionally block-diagonal.

    >>> make_structured_cov("ar1", 3, 0.5)[0]
    array([1.  , 0.5 , 0.25])
    """
    if not abs(rho) < 1:
        raise ParameterError(f"|rho| must be < 1, got {rho}")
    if kind == "identity":
        return np.eye(dim)
    if kind == "ar1":
        return ar1_cov(dim, rho)
    if kind == "block_ar1":
        if block is None or block < 1 or dim % block:
            raise ParameterError(f"block size {block} must divide dim {dim}")
        return block_diag(*[ar1_cov(block, rho)] * (dim // block))
    raise ParameterError(f"unknown covariance kind {kind!r}")


def empirical_cov_pair(x):
    """Return ``(X X'/m, X'X/n)`` for a centered m x n matrix.

    Both share the squared singular values of ``X`` up to the 1/m, 1/n scaling.
    """
    X = np.asarray(x, dtype=float)
    m, n = X.shape
    return X @ X.T / m, X.T @ X / n


__all__ = [
    "DataMatrix", "MatrixNormalParams", "SignalSpec", "DecompositionFit",
    "NumericalWarning", "sample_matrix_normal", "decompose",
    "make_structured_cov", "empirical_cov_pair", "sym_power", "rng_for",
    "check_spd",
]
