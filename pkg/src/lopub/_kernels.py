"""Hot numeric kernels: EM iterations and non-negative Lasso coordinate descent.

Each kernel has a pure-numpy implementation and, when numba is importable,
an ``@njit``-compiled twin with identical semantics. The compiled path is
used by default; set ``LOPUB_DISABLE_NUMBA=1`` to force the numpy fallback
(the benchmark CLI times both). Both paths are deterministic; outputs agree
to floating-point roundoff (summation order differs).
"""

from __future__ import annotations

import os

import numpy as np


def _want_numba() -> bool:
    flag = os.environ.get("LOPUB_DISABLE_NUMBA", "").strip().lower()
    if flag in ("1", "true", "yes"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USING_NUMBA = _want_numba()


# ---------------------------------------------------------------------------
# EM loop. L is the (N, C) per-report likelihood matrix, row-scaled so that
# max_c L[i, c] == 1 (row scaling cancels in the posterior); row_log_scale
# holds the subtracted log factors so the reported log-likelihood is exact.
# Reports whose likelihood is zero on the whole support are skipped.
# ---------------------------------------------------------------------------

def em_loop_numpy(L, p0, row_log_scale, delta, max_iter):
    n = L.shape[0]
    p = p0.copy()
    valid = (L @ p0) > 0.0
    n_eff = int(valid.sum())
    skipped = n - n_eff
    if n_eff == 0:
        return p, 0, np.empty(0), skipped
    Lv = L[valid]
    scale = float(row_log_scale[valid].sum())
    logliks = np.empty(max_iter)
    it = 0
    while it < max_iter:
        w = Lv * p[None, :]
        s = w.sum(axis=1)
        logliks[it] = float(np.log(s).sum()) + scale
        p_next = (w / s[:, None]).sum(axis=0) / n_eff
        change = float(np.abs(p_next - p).max())
        p = p_next
        it += 1
        if change <= delta:
            break
    return p, it, logliks[:it], skipped


def cd_nnlasso_numpy(X, y, lam, beta0, tol, max_sweeps):
    """Cyclic coordinate descent for

        min_{beta >= 0}  0.5 * ||y - X beta||^2 + lam * sum(beta)

    Converges when the largest coordinate change in a sweep is <= tol.
    Returns (beta, sweeps, converged).
    """
    n_cols = X.shape[1]
    beta = beta0.copy()
    col_sq = (X * X).sum(axis=0)
    r = y - X @ beta
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        max_change = 0.0
        for c in range(n_cols):
            xc = X[:, c]
            rho = float(xc @ r) + col_sq[c] * beta[c]
            new = (rho - lam) / col_sq[c]
            if new < 0.0:
                new = 0.0
            diff = new - beta[c]
            if diff != 0.0:
                r -= diff * xc
                beta[c] = new
                if abs(diff) > max_change:
                    max_change = abs(diff)
        sweeps += 1
        if max_change <= tol:
            converged = True
            break
    return beta, sweeps, converged


if USING_NUMBA:
    from numba import njit

    @njit(cache=True, nogil=True)
    def _em_loop_jit(L, p0, row_log_scale, delta, max_iter):  # pragma: no cover
        n, ncand = L.shape
        p = p0.copy()
        valid = np.empty(n, dtype=np.bool_)
        n_eff = 0
        scale = 0.0
        for i in range(n):
            s = 0.0
            for c in range(ncand):
                s += L[i, c] * p0[c]
            valid[i] = s > 0.0
            if valid[i]:
                n_eff += 1
                scale += row_log_scale[i]
        skipped = n - n_eff
        logliks = np.empty(max_iter)
        it = 0
        if n_eff == 0:
            return p, 0, logliks[:0], skipped
        p_next = np.empty(ncand)
        while it < max_iter:
            for c in range(ncand):
                p_next[c] = 0.0
            loglik = 0.0
            for i in range(n):
                if not valid[i]:
                    continue
                s = 0.0
                for c in range(ncand):
                    s += L[i, c] * p[c]
                loglik += np.log(s)
                inv = 1.0 / s
                for c in range(ncand):
                    p_next[c] += L[i, c] * p[c] * inv
            logliks[it] = loglik + scale
            max_change = 0.0
            for c in range(ncand):
                p_next[c] /= n_eff
                ch = abs(p_next[c] - p[c])
                if ch > max_change:
                    max_change = ch
                p[c] = p_next[c]
            it += 1
            if max_change <= delta:
                break
        return p, it, logliks[:it], skipped

    @njit(cache=True, nogil=True)
    def _cd_nnlasso_jit(X, y, lam, beta0, tol, max_sweeps):  # pragma: no cover
        n_rows, n_cols = X.shape
        beta = beta0.copy()
        col_sq = np.empty(n_cols)
        for c in range(n_cols):
            s = 0.0
            for i in range(n_rows):
                s += X[i, c] * X[i, c]
            col_sq[c] = s
        r = y - X @ beta
        sweeps = 0
        converged = False
        while sweeps < max_sweeps:
            max_change = 0.0
            for c in range(n_cols):
                rho = 0.0
                for i in range(n_rows):
                    rho += X[i, c] * r[i]
                rho += col_sq[c] * beta[c]
                new = (rho - lam) / col_sq[c]
                if new < 0.0:
                    new = 0.0
                diff = new - beta[c]
                if diff != 0.0:
                    for i in range(n_rows):
                        r[i] -= diff * X[i, c]
                    beta[c] = new
                    if abs(diff) > max_change:
                        max_change = abs(diff)
            sweeps += 1
            if max_change <= tol:
                converged = True
                break
        return beta, sweeps, converged

    def em_loop_numba(L, p0, row_log_scale, delta, max_iter):
        p, it, logliks, skipped = _em_loop_jit(
            np.ascontiguousarray(L), np.ascontiguousarray(p0),
            np.ascontiguousarray(row_log_scale), float(delta), int(max_iter)
        )
        return p, int(it), logliks, int(skipped)

    def cd_nnlasso_numba(X, y, lam, beta0, tol, max_sweeps):
        beta, sweeps, converged = _cd_nnlasso_jit(
            np.asfortranarray(X), np.ascontiguousarray(y), float(lam),
            np.ascontiguousarray(beta0), float(tol), int(max_sweeps)
        )
        return beta, int(sweeps), bool(converged)

    em_loop = em_loop_numba
    cd_nnlasso = cd_nnlasso_numba
else:
    em_loop = em_loop_numpy
    cd_nnlasso = cd_nnlasso_numpy


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"


def warmup() -> None:
    """Trigger JIT compilation so timings exclude compile cost."""
    L = np.array([[1.0, 0.5], [0.25, 1.0]])
    em_loop(L, np.array([0.5, 0.5]), np.zeros(2), 1e-12, 5)
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    cd_nnlasso(X, np.array([1.0, 2.0, 3.0]), 0.1, np.zeros(2), 1e-10, 50)
