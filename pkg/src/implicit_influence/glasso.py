"""Sparse inverse covariance estimation by blockwise coordinate descent.

Solves ``max log det(P) - tr(S P) - rho * ||P||_1`` over positive definite
``P``, penalizing every entry (diagonal included). Each sweep visits the
columns in order and solves a lasso subproblem for the off-diagonal part of
the working covariance ``W``; the diagonal is fixed at ``diag(S) + rho``.
"""

import warnings
from dataclasses import dataclass

import numba
import numpy as np

from ._validation import check_nonnegative_scalar, check_symmetric, is_positive_definite


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ContagionPrecision:
    """Precision estimate together with its covariance counterpart ``W``."""

    precision: np.ndarray
    covariance: np.ndarray
    n_iter: int = 0
    converged: bool = True


def soft_threshold(x, rho):
    return np.sign(x) * np.maximum(np.abs(x) - rho, 0.0)


@numba.njit(cache=True)
def _lasso_cd_kernel(A, b, rho, x, tol, max_iter):
    p = b.shape[0]
    r = b - A @ x
    for _ in range(max_iter):
        max_delta = 0.0
        for i in range(p):
            old = x[i]
            z = r[i] + A[i, i] * old
            mag = abs(z) - rho
            new = 0.0
            if mag > 0:
                new = (mag if z > 0 else -mag) / A[i, i]
            if new != old:
                delta = new - old
                for j in range(p):
                    r[j] -= A[j, i] * delta
                x[i] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            return True
    return False


def _lasso_value(A, b, rho, x):
    return 0.5 * x @ A @ x - b @ x + rho * np.sum(np.abs(x))


def _feature_sign(A, b, rho, x, max_steps=None):
    """Active-set (feature-sign) lasso solver started from ``x``.

    Returns the exact minimizer once the KKT conditions hold, or ``None`` if
    ``max_steps`` runs out.
    """
    p = len(b)
    x = x.copy()
    theta = np.sign(x)
    active = x != 0
    slack = 1e-10 * max(1.0, rho, float(np.max(np.abs(b), initial=0.0)))
    for _ in range(max_steps or 10 * p + 50):
        if active.any():
            S = np.flatnonzero(active)
            try:
                sol = np.linalg.solve(A[np.ix_(S, S)], b[S] - rho * theta[S])
            except np.linalg.LinAlgError:
                return None
            target = np.zeros(p)
            target[S] = sol
            d = target - x
            # candidate points: the full step and every zero crossing on the way
            steps = [(1.0, -1)]
            for i in S:
                if x[i] != 0 and x[i] * target[i] < 0:
                    steps.append((x[i] / (x[i] - target[i]), i))
            best_val, best_x, best_t = np.inf, None, None
            for t, i in steps:
                cand = x + t * d
                if i >= 0:
                    cand[i] = 0.0
                val = _lasso_value(A, b, rho, cand)
                if val < best_val:
                    best_val, best_x, best_t = val, cand, t
            x = best_x
            active = x != 0
            stale = np.any(np.sign(x[active]) != theta[active])
            theta = np.sign(x)
            if best_t != 1.0 or stale:
                # re-solve with the updated support and signs
                continue
        grad = b - A @ x
        if np.any(np.abs(grad[active] - rho * theta[active]) > slack):
            continue
        viol = np.where(x == 0, np.abs(grad) - rho, -np.inf)
        i = int(np.argmax(viol))
        if viol[i] <= slack:
            return x
        active[i] = True
        theta[i] = np.sign(grad[i])
    return None


def lasso_cd(A, b, rho, tol=1e-10, max_iter=1000, x0=None, chunk=50):
    """Minimize ``0.5 x'Ax - b'x + rho ||x||_1`` by cyclic coordinate descent.

    If ``chunk`` sweeps do not reach ``tol``, the coordinate-descent iterate
    seeds an exact active-set solve; on ill-conditioned ``A`` this finishes
    long before plain coordinate descent would. Coordinate descent then
    resumes only if the active-set solve fails.

    Returns ``(x, converged)``. Converged means the largest coordinate change
    in the last sweep was below ``tol`` or an exact solution was certified
    by its KKT conditions.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if np.any(np.diag(A) <= 0):
        raise ValueError("A must be positive definite")
    x = np.zeros(len(b)) if x0 is None else np.array(x0, dtype=np.float64)
    n = min(chunk, max_iter)
    if _lasso_cd_kernel(A, b, float(rho), x, float(tol), int(n)):
        return x, True
    z = _feature_sign(A, b, rho, x)
    if z is not None:
        return z, True
    if max_iter > n and _lasso_cd_kernel(A, b, float(rho), x, float(tol),
                                         int(max_iter - n)):
        return x, True
    return x, False


def glasso_fit(S, rho, tol=1e-6, max_iter=200):
    """Graphical lasso estimate of the precision matrix of sample covariance ``S``.

    Stops when the mean absolute change of the off-diagonal entries of ``W``
    over a sweep drops to ``tol`` times the mean absolute off-diagonal of
    ``S``, or after ``max_iter`` sweeps (returned with ``converged=False``
    and a :class:`ConvergenceWarning`).

    With ``rho = 0`` the unpenalized maximizer ``S^{-1}`` is returned, which
    requires ``S`` to be positive definite.
    """
    S = check_symmetric(S, tol=1e-12, name="S")
    rho = check_nonnegative_scalar(rho, "rho")
    S = (S + S.T) / 2
    K = S.shape[0]
    if np.any(np.diag(S) < 0):
        raise ValueError("S must have a nonnegative diagonal")

    if rho == 0:
        try:
            c = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise ValueError("rho = 0 requires a positive definite S") from None
        c_inv = np.linalg.inv(c)
        P = c_inv.T @ c_inv
        return ContagionPrecision((P + P.T) / 2, S.copy(), 0, True)

    W = S + rho * np.eye(K)
    if K == 1:
        return ContagionPrecision(1.0 / W, W, 1, True)

    off = ~np.eye(K, dtype=bool)
    threshold = tol * np.mean(np.abs(S[off]))
    betas = np.zeros((K, K - 1))
    inner_tol = max(tol * 1e-4, 1e-14)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        W_prev = W.copy()
        betas_prev = betas.copy()
        for j in range(K):
            idx = np.arange(K) != j
            W11 = W[np.ix_(idx, idx)]
            beta, _ = lasso_cd(W11, S[idx, j], rho, tol=inner_tol, x0=betas[j])
            betas[j] = beta
            w12 = W11 @ beta
            W[idx, j] = w12
            W[j, idx] = w12
        if not np.all(np.isfinite(W)) or not is_positive_definite(W):
            # numerical breakdown: keep the last positive definite iterate
            W, betas = W_prev, betas_prev
            break
        change = np.mean(np.abs(W[off] - W_prev[off]))
        if change <= threshold:
            # the coefficients of the last sweep must also agree with W
            P = _precision_from(W, betas)
            if _inverse_residual(P, W) <= _inverse_tol(W):
                converged = True
                break
    if not converged:
        warnings.warn(
            f"graphical lasso did not converge in {max_iter} sweeps",
            ConvergenceWarning,
            stacklevel=2,
        )

    P = _precision_from(W, betas)
    if (not np.all(np.isfinite(P)) or not is_positive_definite(P)
            or _inverse_residual(P, W) > 1e-6):
        # recovering P from the lasso coefficients loses accuracy when W is
        # ill-conditioned; W itself stays positive definite
        P = np.linalg.inv(W)
        P = (P + P.T) / 2
    return ContagionPrecision(P, W, n_iter, converged)


def _precision_from(W, betas):
    K = W.shape[0]
    P = np.zeros((K, K))
    for j in range(K):
        idx = np.arange(K) != j
        beta = betas[j]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            p_jj = 1.0 / (W[j, j] - W[idx, j] @ beta)
            P[idx, j] = -beta * p_jj
        P[j, j] = p_jj
    return (P + P.T) / 2


def _inverse_residual(P, W):
    with np.errstate(over="ignore", invalid="ignore"):
        R = np.abs(P @ W - np.eye(len(W)))
    return float(np.max(R)) if np.all(np.isfinite(R)) else np.inf


def _inverse_tol(W):
    # 1e-8, loosened only where round-off in W dominates
    return max(1e-8, 1e-14 * np.linalg.cond(W))


def glasso_objective(P, S, rho):
    """``-log det P + tr(S P) + rho ||P||_1`` (the quantity being minimized)."""
    try:
        c = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return np.inf
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return -logdet + float(np.sum(S * P)) + rho * float(np.sum(np.abs(P)))
