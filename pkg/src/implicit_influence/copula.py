"""Multi-task low-rank influence model with a Gaussian-copula contagion prior.

The fitted quantities are the influence matrix ``I`` (``L*N x K``, entrywise
nonnegative), a block-constant mean ``m`` and a sparse contagion precision
``P`` (``K x K``). They minimize::

    sum_k ||V_k - M_k I^k||^2 + lambda1 tr((I - m) P (I - m)^T)
        - lambda2 log det P + lambda3 ||P||_1
        + lambda4 ||I||_* + lambda5 sum_{u,k} ||I_{u,k}||_2,   I >= 0

by alternating an exact mean update, a graphical-lasso precision update and
an incremental proximal descent on ``I``.
"""

import numbers
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from . import prox
from ._incremental import StepSizeError, incremental_prox
from ._validation import (
    check_designs,
    check_finite_matrix,
    check_nonnegative_matrix,
    check_positive_int,
    is_positive_definite,
)
from .data import (
    InfectionLog,
    VolumeSeries,
    build_design,
    build_volume,
    design_predictions,
    predict_volume,
)
from .glasso import ContagionPrecision, glasso_fit, glasso_objective

__all__ = [
    "CopulaInfluenceRegressor",
    "FitResult",
    "Hyperparams",
    "StepSizeError",
    "auto_step",
    "fit",
    "grad_smooth",
    "objective",
    "update_influence",
    "update_mean",
    "update_precision",
]


@dataclass(frozen=True)
class Hyperparams:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.1
    lambda4: float = 1.0
    lambda5: float = 0.1
    lag: int = 1
    step: object = "auto"
    inner_tol: float = 1e-6
    outer_tol: float = 1e-5
    inner_max: int = 500
    outer_max: int = 50

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5"):
            value = getattr(self, name)
            if not isinstance(value, numbers.Real) or not value >= 0:
                raise ValueError(f"{name} must be >= 0, got {value!r}")
        if self.lambda1 > 0 and self.lambda2 <= 0:
            raise ValueError("lambda2 must be > 0 whenever lambda1 > 0")
        check_positive_int(self.lag, "lag")
        check_positive_int(self.inner_max, "inner_max")
        check_positive_int(self.outer_max, "outer_max")
        if self.step != "auto" and not (
            isinstance(self.step, numbers.Real) and self.step > 0
        ):
            raise ValueError(f"step must be 'auto' or > 0, got {self.step!r}")
        for name in ("inner_tol", "outer_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    def as_dict(self):
        return asdict(self)


@dataclass
class FitResult:
    influence: np.ndarray
    mean: np.ndarray
    precision: ContagionPrecision
    objective_trace: list
    initial_objective: float
    converged: bool
    iterations: int
    step: float
    hyperparams: Hyperparams = field(default_factory=Hyperparams)


class _Problem:
    """Design matrices stacked as ``(K, T, L*N)`` plus volumes ``(T, K)``."""

    def __init__(self, designs, volumes, lag):
        designs, volumes = check_designs(designs, volumes)
        self.D = np.stack(designs)
        self.V = volumes
        self.lag = lag
        K, T, n_rows = self.D.shape
        self.layout = prox.BlockLayout.for_matrix(np.empty((n_rows, K)), lag)

    def forward(self, I):
        """``(T, K)`` matrix of ``M_k I^k``."""
        return (self.D @ I.T[:, :, None])[:, :, 0].T

    def residual(self, I):
        return self.forward(I) - self.V

    def data_term(self, I):
        return float(np.sum(self.residual(I) ** 2))

    def data_grad(self, I):
        """Gradient of ``0.5 * data_term``: column k is ``M_k^T (M_k I^k - V_k)``."""
        R = self.residual(I)
        return (self.D.transpose(0, 2, 1) @ R.T[:, :, None])[:, :, 0].T


def _trace_term(I, m, P):
    E = I - m
    return float(np.sum((E @ P) * E))


def _objective(problem, I, m, P, hp, logdet=None):
    val = problem.data_term(I)
    if hp.lambda1:
        val += hp.lambda1 * _trace_term(I, m, P)
    if hp.lambda2:
        if logdet is None:
            logdet = np.linalg.slogdet(P)[1]
        val -= hp.lambda2 * logdet
    if hp.lambda3:
        val += hp.lambda3 * float(np.sum(np.abs(P)))
    if hp.lambda4:
        val += hp.lambda4 * prox.nuclear_norm(I)
    if hp.lambda5:
        val += hp.lambda5 * prox.group_l2_norm(I, problem.layout)
    return val


def objective(I, m, precision, designs, volumes, hp):
    """Full penalized objective at ``(I, m, precision)``.

    Raises ``ValueError`` if ``I`` is infeasible (negative entries) or the
    precision is not symmetric positive definite.
    """
    I = check_nonnegative_matrix(I, "I")
    P = check_finite_matrix(precision, "precision")
    if np.max(np.abs(P - P.T), initial=0.0) > 1e-10 or not is_positive_definite(P):
        raise ValueError("precision must be symmetric positive definite")
    problem = _Problem(designs, volumes, hp.lag)
    return _objective(problem, I, np.asarray(m, dtype=np.float64), P, hp)


def update_mean(I, lag):
    """Block average: every length-``lag`` block of ``I`` replaced by its mean.

    Equals ``(1/L) Q Q^T I`` with ``Q = I_N kron 1_L``.
    """
    I = np.asarray(I, dtype=np.float64)
    n_rows, K = I.shape
    compact = I.reshape(n_rows // lag, lag, K).mean(axis=1)
    return np.repeat(compact, lag, axis=0)


def compact_mean(m, lag):
    """The ``N x K`` matrix of per-block scalars ``m'`` with ``m = Q m'``."""
    m = np.asarray(m, dtype=np.float64)
    return m[::lag]


def update_precision(I, m, hp, tol=1e-6, max_iter=200):
    """Graphical-lasso update of the contagion precision.

    Fits ``glasso((lambda1/lambda2) (I-m)^T (I-m), lambda3/lambda2)``.
    """
    if hp.lambda2 <= 0:
        raise ValueError("the precision update needs lambda2 > 0")
    E = np.asarray(I, dtype=np.float64) - m
    S = (hp.lambda1 / hp.lambda2) * (E.T @ E)
    S = (S + S.T) / 2
    return glasso_fit(S, hp.lambda3 / hp.lambda2, tol=tol, max_iter=max_iter)


def grad_smooth(I, m, precision, designs, volumes, hp):
    """Gradient of ``sum_k ||V_k - M_k I^k||^2 + lambda1 tr((I-m) P (I-m)^T)``."""
    problem = _Problem(designs, volumes, hp.lag)
    return _grad(problem, np.asarray(I, dtype=np.float64), m, precision, hp.lambda1)


def _grad(problem, I, m, P, lambda1):
    G = 2.0 * problem.data_grad(I)
    if lambda1:
        G += 2.0 * lambda1 * (I - m) @ P
    return G


def _power_norm(matvec, n, n_iter=50):
    """Largest eigenvalue of a symmetric PSD operator by power iteration."""
    x = np.random.default_rng(0).standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(n_iter):
        y = matvec(x)
        est = np.linalg.norm(y)
        if est == 0:
            return 0.0
        x = y / est
    return float(est)


def _design_lipschitz(designs):
    """``2 max_k ||M_k^T M_k||_2``."""
    out = 0.0
    for M in designs:
        M = np.asarray(M, dtype=np.float64)
        out = max(out, _power_norm(lambda x: M.T @ (M @ x), M.shape[1]))
    return 2.0 * out


def auto_step(designs, precision, hp, design_lipschitz=None):
    """Step ``1/L_f`` with ``L_f = 2 max_k ||M_k^T M_k|| + 2 lambda1 ||P||``.

    Spectral norms come from 50 power iterations; ``L_f = 0`` gives step 1.
    """
    if design_lipschitz is None:
        design_lipschitz = _design_lipschitz(designs)
    lipschitz = design_lipschitz
    if hp.lambda1:
        P = np.asarray(precision, dtype=np.float64)
        lipschitz += 2.0 * hp.lambda1 * _power_norm(lambda x: P @ x, P.shape[0])
    return 1.0 / lipschitz if lipschitz > 0 else 1.0


def _influence_proxes(hp, layout):
    proxes = []
    if hp.lambda4:
        proxes.append(lambda Z, step: prox.prox_nuclear(Z, step * hp.lambda4))
    if hp.lambda5:
        proxes.append(lambda Z, step: prox.prox_group_l2(Z, step * hp.lambda5, layout))
    proxes.append(lambda Z, step: prox.project_nonneg(Z))
    return proxes


def _update_influence(problem, I0, m, P, hp, step):
    logdet = np.linalg.slogdet(P)[1]
    return incremental_prox(
        I0,
        grad=lambda I: _grad(problem, I, m, P, hp.lambda1),
        proxes=_influence_proxes(hp, problem.layout),
        objective=lambda I: _objective(problem, I, m, P, hp, logdet=logdet),
        step=step,
        tol=hp.inner_tol,
        max_iter=hp.inner_max,
    )


def update_influence(I0, m, precision, designs, volumes, hp, step=None):
    """Incremental proximal descent on ``I`` with ``m`` and ``precision`` fixed.

    Each cycle is: gradient step on the smooth terms, nuclear-norm prox
    (``step * lambda4``), block soft-threshold (``step * lambda5``), then
    projection onto ``I >= 0``. Returns the lowest-objective iterate.
    """
    I0 = check_nonnegative_matrix(I0, "I0")
    problem = _Problem(designs, volumes, hp.lag)
    P = np.asarray(precision, dtype=np.float64)
    if step is None:
        step = auto_step(designs, P, hp) if hp.step == "auto" else hp.step
    I, _, _, _, _ = _update_influence(problem, I0, np.asarray(m, float), P, hp, step)
    return I


def _ridge_init(problem):
    K, T, n_rows = problem.D.shape
    I0 = np.zeros((n_rows, K))
    for k in range(K):
        M = problem.D[k]
        eps = 1e-3 * float(np.sum(M * M)) / n_rows
        if eps == 0:
            continue
        # dual form M^T (M M^T + eps)^-1 v; T is small next to L*N
        alpha = np.linalg.solve(M @ M.T + eps * np.eye(T), problem.V[:, k])
        I0[:, k] = M.T @ alpha
    return prox.project_nonneg(I0)


def initial_influence(designs, volumes, lag, init="ridge", random_state=None):
    """Starting point: ``"ridge"`` (default), ``"zeros"``, ``"random"`` or an array."""
    problem = _Problem(designs, volumes, lag)
    shape = (problem.D.shape[2], problem.D.shape[0])
    if not isinstance(init, str):
        init = check_nonnegative_matrix(init, "init")
        if init.shape != shape:
            raise ValueError(f"init has shape {init.shape}, expected {shape}")
        return init.copy()
    if init == "ridge":
        return _ridge_init(problem)
    if init == "zeros":
        return np.zeros(shape)
    if init == "random":
        return check_random_state(random_state).uniform(0.0, 1.0, size=shape)
    raise ValueError(f"unknown init strategy {init!r}")


def fit(designs, volumes, hp=None, init="ridge", random_state=None):
    """Alternate mean, precision and influence updates until the objective settles.

    Stops once the relative change of the objective over an outer iteration
    falls below ``hp.outer_tol`` or after ``hp.outer_max`` iterations.
    """
    hp = hp or Hyperparams()
    problem = _Problem(designs, volumes, hp.lag)
    K = problem.D.shape[0]
    I = initial_influence(designs, volumes, hp.lag, init, random_state)
    m = update_mean(I, hp.lag)
    P = np.eye(K)
    cov = np.eye(K)
    precision = ContagionPrecision(P, cov)
    obj = _objective(problem, I, m, P, hp)
    initial = obj
    trace = []
    converged = False
    step_used = hp.step if hp.step != "auto" else None
    design_lipschitz = _design_lipschitz(designs) if hp.step == "auto" else None

    n_outer = 0
    for n_outer in range(1, hp.outer_max + 1):
        m = update_mean(I, hp.lag)
        if hp.lambda2 > 0:
            candidate = update_precision(I, m, hp)
            new_value = _precision_value(I, m, candidate.precision, hp)
            if np.isfinite(new_value) and new_value <= _precision_value(I, m, P, hp):
                precision = candidate
                P = candidate.precision
        if hp.step == "auto":
            step = auto_step(designs, P, hp, design_lipschitz)
        else:
            step = hp.step
        I, new_obj, _, _, step_used = _update_influence(problem, I, m, P, hp, step)
        trace.append(new_obj)
        change = abs(obj - new_obj) / max(1.0, abs(obj))
        obj = new_obj
        if change < hp.outer_tol:
            converged = True
            break

    return FitResult(
        influence=I,
        mean=m,
        precision=precision,
        objective_trace=trace,
        initial_objective=initial,
        converged=converged,
        iterations=n_outer,
        step=float(step_used),
        hyperparams=hp,
    )


def _precision_value(I, m, P, hp):
    """Terms of the objective that depend on the precision."""
    E = I - m
    S = (hp.lambda1 / hp.lambda2) * (E.T @ E)
    return hp.lambda2 * glasso_objective(P, S, hp.lambda3 / hp.lambda2)


def as_designs(X, lag):
    """Turn an :class:`InfectionLog` or a sequence of design matrices into designs."""
    if isinstance(X, InfectionLog):
        return build_design(X, lag)
    designs, _ = check_designs(X)
    return designs


def as_volumes(X, y):
    if y is None:
        if not isinstance(X, InfectionLog):
            raise ValueError("volumes are required when X is not an InfectionLog")
        return build_volume(X).values
    if isinstance(y, VolumeSeries):
        return y.values
    return check_finite_matrix(y, "volumes")


class InfluenceRegressorMixin(RegressorMixin):
    """Prediction and scoring shared by the influence-model estimators."""

    def predict(self, X):
        """One-step-ahead volumes for rows ``1..T`` of ``X`` (teacher forcing).

        ``X`` is an :class:`InfectionLog` or a list of design matrices.
        """
        check_is_fitted(self, "influence_")
        designs = as_designs(X, self.lag)
        if designs[0].shape[1] != self.influence_.shape[0]:
            raise ValueError("design width does not match the fitted influence")
        return design_predictions(designs, self.influence_)

    def predict_next(self, log, steps=1):
        """Forecast ``V(T+1), ..., V(T+steps)`` from a log with horizon ``T``.

        Infections after ``T`` are unknown and count as absent.
        """
        check_is_fitted(self, "influence_")
        return np.array([
            predict_volume(log, self.influence_, log.horizon + s)
            for s in range(1, steps + 1)
        ])

    def score(self, X, y=None, sample_weight=None):
        """Negative mean squared volume error."""
        V = as_volumes(X, y)
        return -float(np.mean((self.predict(X) - V) ** 2))


class CopulaInfluenceRegressor(InfluenceRegressorMixin, BaseEstimator):
    """Per-node, per-contagion influence with a Gaussian-copula contagion prior.

    Parameters
    ----------
    lambda1 : float
        Weight of the matrix-normal prior trace term.
    lambda2 : float
        Weight of the ``-log det`` term of the precision.
    lambda3 : float
        L1 penalty on the precision entries.
    lambda4 : float
        Nuclear-norm penalty on the influence matrix.
    lambda5 : float
        Group penalty on the per-(node, contagion) blocks.
    lag : int
        Influence window ``L``.
    step : float or "auto"
        Proximal step size; "auto" uses the inverse Lipschitz bound.
    init : {"ridge", "zeros", "random"}
    random_state : int, RandomState or None
        Only used by ``init="random"``.

    Attributes
    ----------
    influence_ : ndarray of shape (L*N, K)
    mean_ : ndarray of shape (L*N, K)
    precision_ : ndarray of shape (K, K)
    covariance_ : ndarray of shape (K, K)
    objective_trace_ : list of float
    n_iter_ : int
    converged_ : bool
    fit_result_ : FitResult
    """

    def __init__(self, lambda1=1.0, lambda2=1.0, lambda3=0.1, lambda4=1.0,
                 lambda5=0.1, lag=1, step="auto", inner_tol=1e-6, outer_tol=1e-5,
                 inner_max=500, outer_max=50, init="ridge", random_state=None):
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda3 = lambda3
        self.lambda4 = lambda4
        self.lambda5 = lambda5
        self.lag = lag
        self.step = step
        self.inner_tol = inner_tol
        self.outer_tol = outer_tol
        self.inner_max = inner_max
        self.outer_max = outer_max
        self.init = init
        self.random_state = random_state

    def hyperparams(self):
        names = Hyperparams.__dataclass_fields__
        return Hyperparams(**{n: getattr(self, n) for n in names})

    def fit(self, X, y=None):
        """Fit on an :class:`InfectionLog` (volumes optional) or designs + volumes."""
        hp = self.hyperparams()
        designs = as_designs(X, self.lag)
        V = as_volumes(X, y)
        res = fit(designs, V, hp, init=self.init, random_state=self.random_state)
        self.fit_result_ = res
        self.influence_ = res.influence
        self.mean_ = res.mean
        self.precision_ = res.precision.precision
        self.covariance_ = res.precision.covariance
        self.objective_trace_ = res.objective_trace
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.n_nodes_ = res.influence.shape[0] // self.lag
        return self
