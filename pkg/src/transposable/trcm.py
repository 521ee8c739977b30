"""L1-penalized matrix-variate normal covariance estimation (TRCM).

The penalized log-likelihood over the row and column concentration matrices
``Theta = Sigma^-1`` and ``Psi = Delta^-1`` is::

    (n/2) log|Theta| + (m/2) log|Psi| - 1/2 tr(Theta N Psi N')
        - lam*m*|Theta|_1 - lam*n*|Psi|_1

with ``|.|_1`` the entrywise absolute sum, diagonal included. It is
maximised by alternating graphical-lasso solves.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import rng_for
from .errors import ConvergenceError, NumericalWarning, ParameterError

log = logging.getLogger(__name__)

GLASSO_TOL = 1e-6
FLIPFLOP_TOL = 1e-5
MAX_ITER = 100
LOADING = 1e-8
CV_TOL = 1e-3
POLISH_AFTER = 50
CV_GLASSO_TOL = GLASSO_TOL


@dataclass(frozen=True)
class TrcmFit:
    SigmaHat: np.ndarray
    DeltaHat: np.ndarray
    SigmaInvHat: np.ndarray
    DeltaInvHat: np.ndarray
    lambda_: float
    iterations: int
    finalObjective: float
    objectiveTrace: tuple = field(default=())
    deltaIsDiagonal: bool = False
    sigmaIsDiagonal: bool = False
    converged: bool = True

    @classmethod
    def from_covariances(cls, Sigma, Delta, lambda_=0.0):
        """Wrap known covariances (e.g. the truth) as a fit, no normalization."""
        Sigma = np.asarray(Sigma, dtype=float)
        Delta = np.asarray(Delta, dtype=float)
        return cls(Sigma, Delta, _spd_inv(Sigma), _spd_inv(Delta), float(lambda_),
                   0, float("nan"), (), _is_diag(Delta), _is_diag(Sigma), True)

    @property
    def shape(self):
        return self.SigmaHat.shape[0], self.DeltaHat.shape[0]


def _spd_inv(a):
    inv = np.linalg.inv(a)
    return (inv + inv.T) / 2


def _is_diag(a):
    off = a - np.diag(np.diag(a))
    return bool(np.all(off == 0))


def _logdet_spd(a, name):
    try:
        c = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise ParameterError(f"{name} is not positive definite") from None
    return 2.0 * np.sum(np.log(np.diag(c)))


def penalized_loglik(N, SigmaInv, DeltaInv, lam):
    """Value of the penalized matrix-normal log-likelihood."""
    N = np.asarray(N, dtype=float)
    m, n = N.shape
    if lam < 0:
        raise ParameterError("lambda must be nonnegative")
    ld_s = _logdet_spd(SigmaInv, "SigmaInv")
    ld_d = _logdet_spd(DeltaInv, "DeltaInv")
    quad = np.sum((SigmaInv @ N) * (N @ DeltaInv))
    return (0.5 * n * ld_s + 0.5 * m * ld_d - 0.5 * quad
            - lam * m * np.abs(SigmaInv).sum() - lam * n * np.abs(DeltaInv).sum())


def glasso_objective(S, Theta, rho):
    """``log|Theta| - tr(Theta S) - rho*|Theta|_1``."""
    return (_logdet_spd(Theta, "Theta") - np.sum(Theta * S)
            - rho * np.abs(Theta).sum())


def _kkt(S, Theta, W, rho):
    G = W - S
    res = np.where(Theta != 0, np.abs(G - rho * np.sign(Theta)),
                   np.maximum(np.abs(G) - rho, 0.0))
    return float(res.max())


def kkt_residual(S, Theta, rho):
    """Max violation of ``Theta^-1 - S in rho * d|Theta|_1``."""
    return _kkt(S, Theta, _spd_inv(Theta), rho)


def _assemble(W, B):
    # row j of B holds the coefficients for column j
    tjj = 1.0 / (np.diag(W) - np.einsum("jk,jk->j", W, B))
    Theta = -B * tjj[:, None]
    Theta[np.diag_indices_from(Theta)] = tjj
    keep = (Theta != 0) & (Theta.T != 0)
    return np.where(keep, (Theta + Theta.T) / 2, 0.0)


def _polish_sweep(W, S, B, rho, tol, max_inner, lasso):
    """Block pass whose lasso solves are finished exactly on the active set.

    Coordinate descent fixes the sign pattern; the nonzero coefficients
    then solve ``W_AA b_A = s_A - rho sign(b_A)`` directly. The exact
    solution is kept only when it satisfies the lasso optimality conditions.
    """
    d = W.shape[0]
    max_dw = 0.0
    for j in range(d):
        beta = B[j]
        beta[j] = 0.0
        nz = np.flatnonzero(beta)
        r = beta[nz] @ W[nz] if nz.size else np.zeros(d)
        lasso(W, S[j], beta, r, j, rho, tol, max_inner)
        act = np.flatnonzero(beta)
        if act.size:
            sgn = np.sign(beta[act])
            try:
                exact = np.linalg.solve(W[np.ix_(act, act)], S[j, act] - rho * sgn)
            except np.linalg.LinAlgError:
                exact = None
            if exact is not None and np.all(np.sign(exact) == sgn):
                grad = S[j] - exact @ W[act]
                grad[act] = 0.0
                grad[j] = 0.0
                if np.all(np.abs(grad) <= rho + tol):
                    beta[act] = exact
            r = beta[act] @ W[act]
        r[j] = W[j, j]
        max_dw = max(max_dw, float(np.max(np.abs(W[j] - r))))
        W[j] = r
        W[:, j] = r
    return max_dw


def _glasso(S, rho, tol, max_iter, backend=None):
    d = S.shape[0]
    kernel = _kernels.get_backend(backend)
    S = np.ascontiguousarray(S)
    # residuals are measured in the units of S
    atol = tol * max(1.0, float(np.mean(np.diag(S))))
    W = S.copy()
    W[np.diag_indices(d)] += rho
    B = np.zeros((d, d))
    resid = np.inf
    dw = np.inf
    tight = False
    for it in range(1, max_iter + 1):
        if tight or it > POLISH_AFTER:
            # slow linear convergence (small rho, ill-conditioned S): finish
            # each block exactly on its active set
            dw = _polish_sweep(W, S, B, rho, atol * 1e-2, 10_000, kernel.lasso_gram)
        else:
            # inner solves need only track the outer change, but must stay
            # accurate enough to keep W positive definite
            inner = min(max(atol * 1e-2, dw * 1e-2), atol * 10)
            dw = kernel.glasso_sweep(W, S, B, rho, inner, 10_000)
        if dw > atol and it % 5 and it < max_iter:
            continue
        Theta = _assemble(W, B)
        try:
            resid = kkt_residual(S, Theta, rho)
        except np.linalg.LinAlgError:
            continue
        if resid <= atol:
            return Theta, it, resid
        tight = tight or dw <= atol
    raise ConvergenceError(f"glasso did not reach KKT residual {atol:g} in "
                           f"{max_iter} sweeps (residual {resid:.3g})",
                           residual=resid, iterations=max_iter)


def glasso(S, rho, tol=GLASSO_TOL, max_iter=2000, backend=None):
    """Sparse inverse covariance: maximise ``log|T| - tr(T S) - rho |T|_1``.

    Block coordinate descent over columns with a lasso inner solve. The
    diagonal is penalized too, so ``inv(T)_ii = S_ii + rho`` at the optimum.
    Convergence means a KKT residual of at most ``tol * max(1, mean(diag S))``.

    Raises
    ------
    ConvergenceError
        When the KKT residual is still above ``tol`` after ``max_iter`` sweeps.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ParameterError("S must be square")
    if not np.allclose(S, S.T, atol=1e-10):
        raise ParameterError("S must be symmetric")
    if rho < 0:
        raise ParameterError("rho must be nonnegative")
    S = (S + S.T) / 2
    if rho == 0:
        return _spd_inv(S)
    if S.shape[0] == 1:
        return 1.0 / (S + rho)
    return _glasso(S, rho, tol, max_iter, backend=backend)[0]


def _load(S):
    d = S.shape[0]
    S = (S + S.T) / 2
    S[np.diag_indices(d)] += LOADING * np.trace(S) / d
    return S


def normalize_pair(Sigma, Delta):
    """Rescale ``(Sigma, Delta) -> (Sigma/c, c*Delta)`` so ``trace(Delta) = n``."""
    c = Delta.shape[0] / np.trace(Delta)
    return Sigma / c, Delta * c


def fit_trcm(N, lam, tol=FLIPFLOP_TOL, max_iter=MAX_ITER, glasso_tol=GLASSO_TOL,
             backend=None, init=None):
    """Fit the L1-penalized row/column covariance model to a noise matrix.

    Alternates ``Theta <- glasso(N Psi N'/n, 2 lam m/n)`` and
    ``Psi <- glasso(N' Theta N/m, 2 lam n/m)`` from ``Psi = I``, stopping
    when the relative objective change drops below ``tol``. The reported
    pair is rescaled so that ``trace(DeltaHat) = n``; the product
    ``DeltaHat kron SigmaHat`` is unaffected.

    Parameters
    ----------
    N : (m, n) array
        Centered noise, typically ``decompose(x).noise``.
    lam : float
        Penalty parameter.
    init : TrcmFit, optional
        Warm start for ``Psi``.
    """
    N = np.asarray(N, dtype=float)
    m, n = N.shape
    if lam < 0:
        raise ParameterError("lambda must be nonnegative")
    if lam == 0 and (m > n or n > m):
        raise ParameterError("lambda must be positive for a rank-deficient N")
    rho_s, rho_d = 2 * lam * m / n, 2 * lam * n / m
    Psi = np.eye(n) if init is None else init.DeltaInvHat.copy()
    trace = []
    converged = False
    it = 0
    prev = None
    for it in range(1, max_iter + 1):
        Theta = glasso(_load(N @ Psi @ N.T / n), rho_s, glasso_tol, backend=backend)
        trace.append(penalized_loglik(N, Theta, Psi, lam))
        Psi = glasso(_load(N.T @ Theta @ N / m), rho_d, glasso_tol, backend=backend)
        trace.append(penalized_loglik(N, Theta, Psi, lam))
        if lam > 0:
            # exact ascent over the split (c*Theta, Psi/c): only the penalty
            # depends on c
            c = np.sqrt(n * np.abs(Psi).sum() / (m * np.abs(Theta).sum()))
            Theta, Psi = Theta * c, Psi / c
            trace.append(penalized_loglik(N, Theta, Psi, lam))
        obj = trace[-1]
        if prev is not None and abs(obj - prev) <= tol * abs(prev):
            converged = True
            break
        prev = obj
    if not converged:
        warnings.warn(f"flip-flop did not converge in {max_iter} iterations",
                      NumericalWarning, stacklevel=2)
    Sigma, Delta = normalize_pair(_spd_inv(Theta), _spd_inv(Psi))
    c = n / np.trace(_spd_inv(Psi))
    return TrcmFit(Sigma, Delta, Theta * c, Psi / c, float(lam), it, float(trace[-1]),
                   tuple(trace), _is_diag(Psi), _is_diag(Theta), converged)


def lambda_max(N):
    """Smallest lambda for which both initial glasso problems are diagonal."""
    N = np.asarray(N, dtype=float)
    m, n = N.shape
    off = lambda a: np.max(np.abs(a - np.diag(np.diag(a)))) if a.shape[0] > 1 else 0.0
    lam_s = off(N @ N.T / n) * n / (2 * m)
    lam_d = off(N.T @ N / m) * m / (2 * n)
    return float(max(lam_s, lam_d))


def lambda_grid(N, num=8, ratio=0.01):
    top = lambda_max(N)
    return np.geomspace(ratio * top, top, num)


def column_folds(n, folds, seed):
    perm = rng_for(seed, 0xC5).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def heldout_loglik(N_test, fit):
    """Gaussian log-likelihood of held-out columns under the fitted rows.

    Held-out columns are treated as independent, each with variance equal
    to the mean diagonal of the fitted column covariance.
    """
    m, nh = N_test.shape
    scale = float(np.mean(np.diag(fit.DeltaHat)))
    Sigma = fit.SigmaHat * scale
    sign, logdet = np.linalg.slogdet(Sigma)
    quad = np.sum((fit.SigmaInvHat / scale) * (N_test @ N_test.T))
    return -0.5 * (nh * logdet + quad + m * nh * np.log(2 * np.pi))


def cross_validate_lambda(N, grid=None, folds=5, seed=0, patience=1, **fit_kw):
    """Choose lambda by column-fold cross-validation.

    The grid is walked from the largest lambda down. Each fold's fit starts
    from that fold's fit at the previous lambda, and the walk stops after
    ``patience`` consecutive drops in the summed held-out score
    (``patience=None`` scores the whole grid). Unvisited points score
    ``-inf``.

    Returns ``(best_lambda, scores)`` with ``scores`` aligned to ``grid``.
    Ties go to the larger lambda.
    """
    N = np.asarray(N, dtype=float)
    m, n = N.shape
    if folds < 2:
        raise ParameterError("folds must be >= 2")
    grid = lambda_grid(N) if grid is None else np.asarray(grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid <= 0):
        raise ParameterError("grid must be nonempty and positive")
    if grid.size == 1:
        warnings.warn("single-point lambda grid; no selection performed",
                      NumericalWarning, stacklevel=2)
        return float(grid[0]), np.array([np.nan])
    # scores only rank the grid, so the fold fits run at looser tolerances
    fit_kw = {"tol": CV_TOL, "glasso_tol": CV_GLASSO_TOL, **fit_kw}
    splits = [(np.setdiff1d(np.arange(n), test), test)
              for test in column_folds(n, folds, seed)]
    fits = [None] * len(splits)
    scores = np.full(grid.size, -np.inf)
    drops = 0
    previous = None
    for g in np.argsort(grid, kind="stable")[::-1]:
        total = 0.0
        for f, (train, test) in enumerate(splits):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NumericalWarning)
                fits[f] = fit_trcm(N[:, train], grid[g], init=fits[f], **fit_kw)
            total += heldout_loglik(N[:, test], fits[f])
        scores[g] = total
        drops = drops + 1 if previous is not None and total < previous else 0
        previous = total
        if patience is not None and drops >= patience:
            break
    best = max(range(grid.size), key=lambda g: (scores[g], grid[g]))
    log.debug("cv scores %s -> lambda %g", scores, grid[best])
    return float(grid[best]), scores
