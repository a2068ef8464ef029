"""Input validation helpers shared by the estimators and solvers."""

import numbers

import numpy as np


def check_finite_matrix(Z, name="Z"):
    """Return ``Z`` as a float64 2-D array, raising on NaN/inf entries."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError(f"{name} contains non-finite entries")
    return Z


def check_nonnegative_scalar(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a finite real >= 0, got {value!r}")
    return float(value)


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_symmetric(S, tol=1e-12, name="S"):
    S = check_finite_matrix(S, name)
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"{name} must be square, got shape {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S), initial=0.0)))
    if np.max(np.abs(S - S.T), initial=0.0) > tol * scale:
        raise ValueError(f"{name} is not symmetric (relative tolerance {tol:g})")
    return S


def check_nonnegative_matrix(Z, name="I"):
    Z = check_finite_matrix(Z, name)
    if np.any(Z < 0):
        raise ValueError(f"{name} has negative entries (outside the feasible set)")
    return Z


def is_positive_definite(A):
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return True


def check_designs(designs, volumes=None):
    """Validate a per-contagion list of design matrices and matching volumes.

    Returns ``(designs, volumes)`` with designs as a list of float64 arrays of
    identical shape ``(T, L*N)`` and volumes as a ``(T, K)`` float64 array.
    """
    designs = [check_finite_matrix(M, "design matrix") for M in designs]
    if not designs:
        raise ValueError("at least one design matrix is required")
    shape = designs[0].shape
    for M in designs:
        if M.shape != shape:
            raise ValueError("all design matrices must share one shape")
    if volumes is None:
        return designs, None
    volumes = check_finite_matrix(volumes, "volumes")
    if volumes.shape != (shape[0], len(designs)):
        raise ValueError(
            f"volumes shape {volumes.shape} does not match "
            f"(T, K) = {(shape[0], len(designs))}"
        )
    return designs, volumes
