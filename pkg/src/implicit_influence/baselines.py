"""Reference solvers: the shared-influence LIM and the multi-task sparse MSLIM.

LIM learns a single nonnegative influence vector for all contagions.
MSLIM learns one column per contagion with node-level and block-level group
penalties, and is solved with the same incremental proximal iteration as the
copula model so the two differ only in the model.
"""

import warnings

import numpy as np
from sklearn.base import BaseEstimator

from . import prox
from ._incremental import incremental_prox
from ._validation import check_nonnegative_scalar
from .copula import (
    InfluenceRegressorMixin,
    _power_norm,
    _Problem,
    as_designs,
    as_volumes,
    initial_influence,
)


class ConvergenceWarning(UserWarning):
    pass


def _lim_parts(designs, volumes):
    problem = _Problem(designs, volumes, 1)
    D, V = problem.D, problem.V

    def grad(x):
        R = D @ x - V.T  # (K, T)
        return 2.0 * np.einsum("ktj,kt->j", D, R)

    def value(x):
        return float(np.sum((D @ x - V.T) ** 2))

    return D, grad, value


def lim_objective(designs, volumes, influence):
    """``sum_k ||V_k - M_k I||^2`` for a shared influence vector."""
    return _lim_parts(designs, volumes)[2](np.asarray(influence, dtype=np.float64))


def fit_lim(designs, volumes, tol=1e-6, max_iter=20000):
    """Nonnegative shared influence by projected gradient with step ``1/L_f``.

    ``L_f = 2 sum_k ||M_k^T M_k||_2``. Stops once the projected-gradient KKT
    residual ``||I - max(I - grad, 0)||_inf`` is at most ``tol``.

    Returns ``(influence, converged)``; ``influence`` has length ``L*N``.
    """
    D, grad, _ = _lim_parts(designs, volumes)
    n = D.shape[2]
    lipschitz = 2.0 * sum(_power_norm(lambda x, M=M: M.T @ (M @ x), n) for M in D)
    step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    x = np.zeros(n)
    for _ in range(max_iter):
        g = grad(x)
        if np.max(np.abs(x - np.maximum(x - g, 0.0)), initial=0.0) <= tol:
            return x, True
        x = np.maximum(x - step * g, 0.0)
    g = grad(x)
    converged = np.max(np.abs(x - np.maximum(x - g, 0.0)), initial=0.0) <= tol
    if not converged:
        warnings.warn("LIM projected gradient hit max_iter", ConvergenceWarning,
                      stacklevel=2)
    return x, bool(converged)


def mslim_objective(designs, volumes, influence, lam, gamma, lag):
    """``0.5 sum_k ||V_k - M_k I^k||^2 + lam sum_u ||I_u||_F + gamma sum ||I_uk||_2``."""
    problem = _Problem(designs, volumes, lag)
    return _mslim_value(problem, np.asarray(influence, dtype=np.float64), lam, gamma)


def _mslim_value(problem, I, lam, gamma):
    val = 0.5 * problem.data_term(I)
    if lam:
        val += lam * prox.frobenius_block_norm(I, problem.layout)
    if gamma:
        val += gamma * prox.group_l2_norm(I, problem.layout)
    return val


def fit_mslim(designs, volumes, lam, gamma, lag, tol=1e-6, max_iter=5000,
              init="ridge", step=None, callback=None):
    """Solve the MSLIM problem by incremental proximal descent.

    Each cycle: gradient step on the half squared loss, node-slice Frobenius
    shrinkage (``step * lam``), block shrinkage (``step * gamma``), then
    projection onto ``I >= 0``.

    Returns ``(influence, objective, iterations, converged)``.
    """
    lam = check_nonnegative_scalar(lam, "lam")
    gamma = check_nonnegative_scalar(gamma, "gamma")
    problem = _Problem(designs, volumes, lag)
    layout = problem.layout
    if step is None:
        n = problem.D.shape[2]
        lipschitz = max(_power_norm(lambda x, M=M: M.T @ (M @ x), n) for M in problem.D)
        step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    proxes = []
    if lam:
        proxes.append(lambda Z, s: prox.prox_frobenius_block(Z, s * lam, layout))
    if gamma:
        proxes.append(lambda Z, s: prox.prox_group_l2(Z, s * gamma, layout))
    proxes.append(lambda Z, s: prox.project_nonneg(Z))
    I0 = initial_influence(designs, volumes, lag, init)
    I, value, n_iter, converged, _ = incremental_prox(
        I0,
        grad=problem.data_grad,
        proxes=proxes,
        objective=lambda I: _mslim_value(problem, I, lam, gamma),
        step=step,
        tol=tol,
        max_iter=max_iter,
        callback=callback,
    )
    return I, value, n_iter, converged


class LIMRegressor(InfluenceRegressorMixin, BaseEstimator):
    """Linear influence model: one influence profile per node, shared by all contagions.

    ``influence_`` is stored as an ``(L*N, K)`` matrix with identical columns
    so it plugs into the same prediction and ranking code.
    """

    def __init__(self, lag=1, tol=1e-6, max_iter=20000):
        self.lag = lag
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        designs = as_designs(X, self.lag)
        V = as_volumes(X, y)
        x, converged = fit_lim(designs, V, tol=self.tol, max_iter=self.max_iter)
        self.shared_influence_ = x
        self.influence_ = np.tile(x[:, None], (1, V.shape[1]))
        self.converged_ = converged
        self.n_nodes_ = len(x) // self.lag
        return self


class MSLIMRegressor(InfluenceRegressorMixin, BaseEstimator):
    """Multi-task sparse linear influence model.

    Parameters
    ----------
    lam : float
        Node-level penalty on ``||I_u||_F``.
    gamma : float
        Block-level penalty on ``||I_{u,k}||_2``.
    lag : int
    tol, max_iter : convergence controls of the proximal iteration.
    init : {"ridge", "zeros"}
    """

    def __init__(self, lam=0.1, gamma=0.1, lag=1, tol=1e-6, max_iter=5000,
                 init="ridge"):
        self.lam = lam
        self.gamma = gamma
        self.lag = lag
        self.tol = tol
        self.max_iter = max_iter
        self.init = init

    def fit(self, X, y=None):
        designs = as_designs(X, self.lag)
        V = as_volumes(X, y)
        I, value, n_iter, converged = fit_mslim(
            designs, V, self.lam, self.gamma, self.lag, tol=self.tol,
            max_iter=self.max_iter, init=self.init,
        )
        self.influence_ = I
        self.objective_ = value
        self.n_iter_ = n_iter
        self.converged_ = converged
        self.n_nodes_ = I.shape[0] // self.lag
        return self
