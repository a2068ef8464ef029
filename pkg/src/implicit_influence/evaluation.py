"""Volume metrics, forward-chaining cross-validation and influential-node ranking."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone
from sklearn.model_selection import ParameterGrid

from .copula import as_designs, as_volumes
from .data import design_predictions


def volume_mse(predicted, actual, mask=None):
    """Mean squared error over the rows selected by ``mask`` and all columns."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {actual.shape}")
    if mask is None:
        mask = np.ones(predicted.shape[0], dtype=bool)
    mask = np.asarray(mask)
    if mask.dtype != bool:
        rows = np.zeros(predicted.shape[0], dtype=bool)
        rows[mask] = True
        mask = rows
    if not mask.any():
        raise ValueError("mask selects no rows")
    return float(np.mean((predicted[mask] - actual[mask]) ** 2))


def influence_error(estimate, truth):
    """Frobenius norm of ``estimate - truth``."""
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    return float(np.linalg.norm(estimate - truth))


@dataclass
class CvPlan:
    """Train on the leading ``train_fraction`` of the rows, validate on the rest."""

    grids: dict = field(default_factory=dict)
    train_fraction: float = 0.6
    metric: str = "volume_mse"

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        for name, values in self.grids.items():
            if len(values) == 0:
                raise ValueError(f"grid for {name!r} is empty")
        if self.metric != "volume_mse":
            raise ValueError(f"unsupported metric {self.metric!r}")


@dataclass
class CvResult:
    best_params: dict
    best_score: float
    scores: list
    estimator: object
    n_train: int


def cross_validate(X, y, estimator, plan):
    """Pick hyperparameters on a time split, then refit on all rows.

    Every grid point is fitted on rows ``1..floor(train_fraction * T)`` and
    scored by one-step-ahead volume MSE on the remaining rows, each predicted
    from the observed history. The lowest score wins, ties going to the
    earliest grid point. The winner is refitted on all ``T`` rows. The
    training part must hold at least ``lag`` rows and the validation part at
    least one.

    ``X`` is an :class:`~implicit_influence.data.InfectionLog` or a list of
    design matrices; ``y`` the ``(T, K)`` volumes (optional for a log).
    """
    designs = as_designs(X, estimator.lag)
    V = as_volumes(X, y)
    T = V.shape[0]
    n_train = int(np.floor(plan.train_fraction * T))
    lag = estimator.lag
    if n_train < lag or T - n_train < 1:
        raise ValueError(
            f"split too small: {n_train} training and {T - n_train} validation "
            f"rows with lag {lag}"
        )
    train_designs = [M[:n_train] for M in designs]
    valid_designs = [M[n_train:] for M in designs]

    scores = []
    best = None
    for params in ParameterGrid(plan.grids) if plan.grids else [{}]:
        model = clone(estimator).set_params(**params)
        model.fit(train_designs, V[:n_train])
        pred = design_predictions(valid_designs, model.influence_)
        score = volume_mse(pred, V[n_train:])
        scores.append((params, score))
        if best is None or score < best[1]:
            best = (params, score)

    final = clone(estimator).set_params(**best[0]).fit(designs, V)
    return CvResult(best[0], best[1], scores, final, n_train)


@dataclass
class NodeScores:
    """Influence scores: ``block[u-1, k-1] = ||I_{u,k}||_2`` plus per-node summaries."""

    block: np.ndarray
    average: np.ndarray
    maximum: np.ndarray
    ranking: np.ndarray

    def per_contagion(self, k):
        """1-based node ids for contagion ``k``, most influential first."""
        return self.ranking[:, k - 1] + 1


def rank_nodes(influence, n_nodes):
    """Score every (node, contagion) block and rank nodes per contagion.

    Rankings sort by descending score with ties broken by node id.
    """
    influence = np.asarray(influence, dtype=np.float64)
    if influence.ndim != 2 or n_nodes < 1 or influence.shape[0] % n_nodes:
        raise ValueError(f"influence of shape {influence.shape} does not split into "
                         f"{n_nodes} node blocks")
    L = influence.shape[0] // n_nodes
    blocks = influence.reshape(n_nodes, L, -1)
    score = np.linalg.norm(blocks, axis=1)
    ranking = np.argsort(-score, axis=0, kind="stable")
    return NodeScores(score, score.mean(axis=1), score.max(axis=1), ranking)


def select_influential(scores, avg_threshold=1.3, max_threshold=1.8):
    """Nodes (1-based) whose average score exceeds ``avg_threshold`` or whose
    maximum score exceeds ``max_threshold``."""
    if avg_threshold < 0 or max_threshold < 0:
        raise ValueError("thresholds must be >= 0")
    chosen = (scores.average > avg_threshold) | (scores.maximum > max_threshold)
    return set((np.nonzero(chosen)[0] + 1).tolist())
