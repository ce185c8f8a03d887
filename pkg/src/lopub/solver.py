"""Non-negative Lasso via cyclic coordinate descent.

Solves min_{beta >= 0} 0.5*||y - X beta||^2 + lambda*sum(beta). The
non-negativity constraint is deliberate: the coefficients are interpreted
as candidate frequencies downstream, and negative frequencies are
meaningless. Columns are 0/1 candidate filters with comparable popcounts,
so no intercept and no standardization (either would break the count
interpretation of beta).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from lopub import _kernels

DEFAULT_TOL = 1e-7


class SolverError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class RegressionProblem:
    """Design matrix (rows = bits, cols = candidates), response, l1 penalty."""

    design: np.ndarray = field(repr=False)
    response: np.ndarray = field(repr=False)
    lam: float = 0.0

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.design, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.response, dtype=np.float64))
        if X.ndim != 2 or X.shape[1] < 1:
            raise SolverError("design must be 2-D with at least one column")
        if y.shape != (X.shape[0],):
            raise SolverError(
                f"response length {y.shape} does not match design rows {X.shape[0]}"
            )
        if self.lam < 0:
            raise SolverError("l1 penalty must be >= 0")
        if (X.sum(axis=0) == 0).any():
            raise SolverError("design has an all-zero column")
        if np.unique(X, axis=1).shape[1] != X.shape[1]:
            raise SolverError("design columns must be pairwise distinct")
        self.design = X
        self.response = y


@dataclass
class Solution:
    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool


def objective_value(X: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float) -> float:
    r = y - X @ beta
    return 0.5 * float(r @ r) + lam * float(np.abs(beta).sum())


def nn_lasso(problem: RegressionProblem, tol: float = DEFAULT_TOL,
             max_iter: int | None = None, beta0: np.ndarray | None = None,
             trace: list | None = None) -> Solution:
    """Solve the non-negative Lasso by cyclic coordinate descent.

    Each coordinate update is beta_c <- max(0, (x_c.(partial residual) -
    lambda) / ||x_c||^2); a sweep visits every coordinate once, and the
    solve stops when the largest coordinate change in a sweep is <= tol.
    Hitting max_iter emits a ConvergenceWarning and returns the best
    iterate. When ``trace`` is given (tests only), the objective after
    every single coordinate update is appended to it; that path always
    runs the plain numpy loop.
    """
    X, y, lam = problem.design, problem.response, problem.lam
    n_cols = X.shape[1]
    if max_iter is None:
        max_iter = 1000 * n_cols
    start = np.zeros(n_cols) if beta0 is None else np.asarray(beta0, dtype=np.float64).copy()
    if trace is not None:
        beta, sweeps, converged = _traced_descent(X, y, lam, start, tol, max_iter, trace)
    else:
        beta, sweeps, converged = _kernels.cd_nnlasso(X, y, lam, start, tol, max_iter)
    if not converged:
        warnings.warn(
            f"coordinate descent hit max_iter={max_iter} before tol={tol}",
            ConvergenceWarning,
        )
    return Solution(beta=beta, objective=objective_value(X, y, beta, lam),
                    iterations=sweeps, converged=converged)


def _traced_descent(X, y, lam, beta, tol, max_sweeps, trace):
    col_sq = (X * X).sum(axis=0)
    r = y - X @ beta
    sweeps = 0
    while sweeps < max_sweeps:
        max_change = 0.0
        for c in range(X.shape[1]):
            xc = X[:, c]
            rho = float(xc @ r) + col_sq[c] * beta[c]
            new = max(0.0, (rho - lam) / col_sq[c])
            diff = new - beta[c]
            if diff != 0.0:
                r -= diff * xc
                beta[c] = new
                max_change = max(max_change, abs(diff))
            trace.append(objective_value(X, y, beta, lam))
        sweeps += 1
        if max_change <= tol:
            return beta, sweeps, True
    return beta, sweeps, False


def kkt_residuals(X: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float):
    """Stationarity gaps at beta: (active-set residual, inactive-set slack).

    For beta_c > 0 optimality needs x_c.(y - X beta) == lambda; for
    beta_c == 0 it needs x_c.(y - X beta) <= lambda.
    """
    grad = X.T @ (y - X @ beta)
    active = beta > 0
    active_gap = float(np.abs(grad[active] - lam).max()) if active.any() else 0.0
    inactive_gap = float((grad[~active] - lam).max()) if (~active).any() else -np.inf
    return active_gap, inactive_gap


def check_kkt(problem: RegressionProblem, beta: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    X, y, lam = problem.design, problem.response, problem.lam
    col_sq = (X * X).sum(axis=0)
    grad = X.T @ (y - X @ beta)
    active = beta > 0
    ok_active = np.all(np.abs(grad[active] - lam) <= tol * col_sq[active] * 10)
    ok_inactive = np.all(grad[~active] <= lam + tol)
    return bool(ok_active and ok_inactive)


def lambda_select(design: np.ndarray, response: np.ndarray, grid_size: int = 10) -> float:
    """Pick the l1 penalty by 5-fold cross-validation over bit rows.

    The grid is geometric from lambda_max = max_c |x_c.y| down three
    decades; folds are round-robin over rows; the path is solved warm from
    the largest lambda down. With fewer than 5 rows there is nothing to
    cross-validate and 0.01*lambda_max is returned.
    """
    if grid_size < 2:
        raise SolverError("grid_size must be >= 2")
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    lam_max = float(np.abs(X.T @ y).max())
    if lam_max == 0.0:
        return 0.0
    n_rows = X.shape[0]
    if n_rows < 5:
        return 0.01 * lam_max
    grid = np.geomspace(lam_max, lam_max * 1e-3, grid_size)
    folds = np.arange(n_rows) % 5
    cv_err = np.zeros(grid_size)
    for k in range(5):
        test = folds == k
        Xtr, ytr = X[~test], y[~test]
        Xte, yte = X[test], y[test]
        keep = Xtr.sum(axis=0) > 0  # a fold may zero out a sparse column
        beta_full = np.zeros(X.shape[1])
        beta = np.zeros(int(keep.sum()))
        for gi, lam in enumerate(grid):
            beta, _, _ = _kernels.cd_nnlasso(
                np.ascontiguousarray(Xtr[:, keep]), ytr, float(lam), beta,
                DEFAULT_TOL, 1000 * X.shape[1]
            )
            beta_full[keep] = beta
            resid = yte - Xte @ beta_full
            cv_err[gi] += float(resid @ resid)
    best = int(np.argmin(cv_err))
    return float(grid[best])
