"""Cyclic incremental proximal descent shared by the copula and MSLIM solvers.

One iteration takes a gradient step on the smooth loss and then applies each
proximal map in turn, all with the same step size.
"""

import numpy as np


class StepSizeError(RuntimeError):
    """The proximal iteration blew up even after halving the step size."""


class _Diverged(Exception):
    pass


def _diverged(obj, obj0):
    # "more than 10x the starting objective", made sign-safe
    return not np.isfinite(obj) or obj - obj0 > 9.0 * max(abs(obj0), 1.0)


def _run(I0, grad, proxes, objective, step, tol, max_iter, callback):
    I = I0
    obj0 = objective(I0)
    best_obj, best = obj0, I0
    for it in range(1, max_iter + 1):
        Z = I - step * grad(I)
        for prox in proxes:
            Z = prox(Z, step)
        obj = objective(Z)
        if _diverged(obj, obj0):
            raise _Diverged
        if callback is not None:
            callback(it, Z, obj)
        if obj <= best_obj:
            best_obj, best = obj, Z
        change = np.linalg.norm(Z - I) / max(1.0, np.linalg.norm(I))
        I = Z
        if change < tol:
            return best, best_obj, it, True
    return best, best_obj, max_iter, False


def incremental_prox(I0, grad, proxes, objective, step, tol=1e-6, max_iter=500,
                     callback=None):
    """Run the cyclic scheme from ``I0`` and return the best iterate seen.

    Parameters
    ----------
    grad : callable ``I -> array``
        Gradient of the smooth part of the loss.
    proxes : sequence of callables ``(Z, step) -> array``
        Applied in order after every gradient step.
    objective : callable ``I -> float``
        Full objective, used for the best-iterate bookkeeping and the
        divergence guard.
    step : float
        Step size. If the objective ever exceeds ten times its starting
        value the run restarts once from ``I0`` with half the step; a
        second blow-up raises :class:`StepSizeError`.

    Returns
    -------
    I, objective value, iterations, converged flag, step actually used
    """
    for attempt in range(2):
        try:
            out = _run(I0, grad, proxes, objective, step, tol, max_iter, callback)
        except _Diverged:
            if attempt:
                raise StepSizeError(
                    f"objective diverged with step {step:g} after one halving"
                ) from None
            step = step / 2
            continue
        return (*out, step)
