"""Pure-Python twins of the compiled kernels (same contracts)."""

import numpy as np


def _pass(W, diag, s, beta, r, skip, rho, coords):
    change = 0.0
    for k in coords:
        if k == skip:
            continue
        wkk = diag[k]
        c = s[k] - r[k] + wkk * beta[k]
        if c > rho:
            new = (c - rho) / wkk
        elif c < -rho:
            new = (c + rho) / wkk
        else:
            new = 0.0
        delta = new - beta[k]
        if delta != 0.0:
            beta[k] = new
            r += delta * W[k]
            change = max(change, abs(delta) * wkk)
    return change


def lasso_gram(W, s, beta, r, skip, rho, tol, max_iter):
    """Minimise 0.5 b'Wb - s'b + rho*|b|_1 over coordinates != skip.

    ``r`` must hold ``W @ beta`` on entry and is kept in sync. Returns the
    number of passes used.
    """
    d = W.shape[0]
    diag = np.diagonal(W)
    sweep = 0
    while sweep < max_iter:
        sweep += 1
        if _pass(W, diag, s, beta, r, skip, rho, range(d)) < tol:
            return sweep
        while sweep < max_iter:
            sweep += 1
            if _pass(W, diag, s, beta, r, skip, rho, np.flatnonzero(beta)) < tol:
                break
    return max_iter


def glasso_sweep(W, S, B, rho, tol, max_inner):
    """One block-coordinate pass over all columns; W and B updated in place.

    Row ``j`` of ``B`` holds the lasso coefficients of column ``j``.
    Returns the largest absolute change written into ``W``.
    """
    d = W.shape[0]
    max_dw = 0.0
    for j in range(d):
        beta = B[j]
        beta[j] = 0.0
        nz = np.flatnonzero(beta)
        r = beta[nz] @ W[nz] if nz.size else np.zeros(d)
        lasso_gram(W, S[j], beta, r, j, rho, tol, max_inner)
        r[j] = W[j, j]
        max_dw = max(max_dw, float(np.max(np.abs(W[j] - r))))
        W[j] = r
        W[:, j] = r
    return max_dw
