"""Independent reference solvers used only by the tests."""

import numpy as np


def glasso_dual_objective(S, rho, tol=1e-10, max_iter=200_000):
    """Optimal value of ``max log|T| - tr(TS) - rho |T|_1`` via its dual.

    The dual is ``max log|W|`` over the box ``|W - S| <= rho`` (elementwise,
    diagonal included); the primal optimum equals ``-log|W*| - d``. Solved by
    projected gradient ascent with backtracking.
    """
    d = S.shape[0]
    lo, hi = S - rho, S + rho
    W = S + rho * np.eye(d)
    val = np.linalg.slogdet(W)[1]
    step = 1.0
    for _ in range(max_iter):
        G = np.linalg.inv(W)
        while True:
            cand = np.clip(W + step * G, lo, hi)
            cand = (cand + cand.T) / 2
            sign, new = np.linalg.slogdet(cand)
            if sign > 0 and new >= val - 1e-15:
                break
            step /= 2
            if step < 1e-20:
                return -val - d, W
        moved = np.abs(cand - W).max()
        W, val = cand, new
        step *= 2
        if moved < tol:
            break
    return -val - d, W


def penalized_loglik_expanded(N, A, B, lam):
    """Term-by-term expansion for 2 x 2 inputs."""
    (a11, a12), (_, a22) = A
    (b11, b12), (_, b22) = B
    det_a = a11 * a22 - a12 * a12
    det_b = b11 * b22 - b12 * b12
    quad = 0.0
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    quad += A[i, j] * N[j, k] * B[k, l] * N[i, l]
    return (np.log(det_a) + np.log(det_b) - 0.5 * quad
            - 2 * lam * np.abs(A).sum() - 2 * lam * np.abs(B).sum())
