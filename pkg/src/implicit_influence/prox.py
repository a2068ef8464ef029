"""Proximal operators and projections on ``(L*N, K)`` influence matrices.

Each operator solves ``argmin_X 0.5 * ||X - Z||_F^2 + tau * R(X)`` for its
regularizer ``R``.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_finite_matrix, check_nonnegative_scalar


@dataclass(frozen=True)
class BlockLayout:
    """Row layout of an influence matrix: N nodes, each owning L consecutive rows."""

    lag: int
    n_nodes: int
    n_contagions: int

    @property
    def shape(self):
        return (self.lag * self.n_nodes, self.n_contagions)

    def rows(self, u):
        """Row slice of node ``u`` (1-based)."""
        return slice((u - 1) * self.lag, u * self.lag)

    def split(self, Z):
        """View ``Z`` as ``(N, L, K)`` blocks."""
        if Z.shape != self.shape:
            raise ValueError(f"matrix shape {Z.shape} does not match layout {self.shape}")
        return Z.reshape(self.n_nodes, self.lag, self.n_contagions)

    @classmethod
    def for_matrix(cls, Z, lag):
        n_rows, K = Z.shape
        if n_rows % lag:
            raise ValueError(f"{n_rows} rows cannot be split into blocks of {lag}")
        return cls(lag, n_rows // lag, K)


def nuclear_norm(Z):
    return float(np.sum(np.linalg.svd(Z, compute_uv=False)))


def group_l2_norm(Z, layout):
    """``sum_{u,k} ||Z_{u,k}||_2``."""
    return float(np.sum(np.linalg.norm(layout.split(Z), axis=1)))


def frobenius_block_norm(Z, layout):
    """``sum_u ||Z_u||_F``."""
    return float(np.sum(np.linalg.norm(layout.split(Z), axis=(1, 2))))


def prox_nuclear(Z, tau, return_singular_values=False):
    """Singular value soft-thresholding.

    Returns ``U diag((s - tau)_+) V^T`` from a thin SVD of ``Z``. With
    ``return_singular_values`` the shrunk singular values are returned too.
    """
    Z = check_finite_matrix(Z)
    tau = check_nonnegative_scalar(tau, "tau")
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    X = (U[:, keep] * s[keep]) @ Vt[keep]
    if return_singular_values:
        return X, s
    return X


def _shrink_groups(G, tau, axes):
    norms = np.linalg.norm(G, axis=axes, keepdims=True)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - tau / norms[nz])
    # zero groups map to themselves
    scale[~nz] = 1.0
    return G * scale


def prox_group_l2(Z, tau, layout):
    """Block soft-thresholding of every length-L block ``Z_{u,k}``."""
    Z = check_finite_matrix(Z)
    tau = check_nonnegative_scalar(tau, "tau")
    return _shrink_groups(layout.split(Z), tau, axes=1).reshape(Z.shape)


def prox_frobenius_block(Z, tau, layout):
    """Soft-threshold the Frobenius norm of every ``L x K`` node slice ``Z_u``."""
    Z = check_finite_matrix(Z)
    tau = check_nonnegative_scalar(tau, "tau")
    return _shrink_groups(layout.split(Z), tau, axes=(1, 2)).reshape(Z.shape)


def project_nonneg(Z):
    return np.maximum(np.asarray(Z, dtype=np.float64), 0.0)
