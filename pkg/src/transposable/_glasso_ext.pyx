# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the graphical-lasso block coordinate descent."""

from libc.math cimport fabs
from libc.stdlib cimport free, malloc


cdef double _pass(double[:, ::1] W, double[::1] s, double[::1] beta, double* r,
                  Py_ssize_t skip, double rho, bint active_only) noexcept nogil:
    cdef Py_ssize_t d = W.shape[0]
    cdef Py_ssize_t k, l
    cdef double wkk, c, new, delta, change = 0.0
    for k in range(d):
        if k == skip or (active_only and beta[k] == 0.0):
            continue
        wkk = W[k, k]
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
            for l in range(d):
                r[l] += delta * W[k, l]
            if fabs(delta) * wkk > change:
                change = fabs(delta) * wkk
    return change


cdef int _lasso(double[:, ::1] W, double[::1] s, double[::1] beta, double* r,
                Py_ssize_t skip, double rho, double tol, int max_iter) noexcept nogil:
    # full passes alternate with inner loops over the nonzero coordinates
    cdef int sweep = 0
    while sweep < max_iter:
        sweep += 1
        if _pass(W, s, beta, r, skip, rho, False) < tol:
            return sweep
        while sweep < max_iter:
            sweep += 1
            if _pass(W, s, beta, r, skip, rho, True) < tol:
                break
    return max_iter


def lasso_gram(double[:, ::1] W, double[::1] s, double[::1] beta,
               double[::1] r, Py_ssize_t skip, double rho, double tol,
               int max_iter):
    """Minimise 0.5 b'Wb - s'b + rho*|b|_1 over coordinates != skip.

    ``r`` must hold ``W @ beta`` on entry and is kept in sync. Returns the
    number of passes used.
    """
    return _lasso(W, s, beta, &r[0], skip, rho, tol, max_iter)


def glasso_sweep(double[:, ::1] W, double[:, ::1] S, double[:, ::1] B,
                 double rho, double tol, int max_inner):
    """One block-coordinate pass over all columns; W and B updated in place.

    Row ``j`` of ``B`` holds the lasso coefficients of column ``j``.
    Returns the largest absolute change written into ``W``.
    """
    cdef Py_ssize_t d = W.shape[0]
    cdef Py_ssize_t j, k, l
    cdef double bk, dw, max_dw = 0.0
    cdef double* r = <double*> malloc(d * sizeof(double))
    if r == NULL:
        raise MemoryError()
    try:
        with nogil:
            for j in range(d):
                B[j, j] = 0.0
                for l in range(d):
                    r[l] = 0.0
                for k in range(d):
                    bk = B[j, k]
                    if bk != 0.0:
                        for l in range(d):
                            r[l] += bk * W[k, l]
                _lasso(W, S[j], B[j], r, j, rho, tol, max_inner)
                for l in range(d):
                    if l == j:
                        continue
                    dw = fabs(W[j, l] - r[l])
                    if dw > max_dw:
                        max_dw = dw
                    W[j, l] = r[l]
                    W[l, j] = r[l]
    finally:
        free(r)
    return max_dw
