"""Infection logs, volume series, lagged design matrices and the forward model.

Conventions
-----------
Nodes and contagions are 1-based in the public types and files; times run
over ``0..T``. Row ``t`` (1-based, ``t = 1..T``) of a volume series or design
matrix is the prediction target for time ``t``; it draws on infections at
times ``t-1, ..., t-L``. Times before 0 contribute nothing.

The influence matrix has shape ``(L*N, K)``. Row ``(u-1)*L + (l-1)`` of
column ``k`` holds ``I_{u,k}(l)``, the follow-up volume produced ``l`` steps
after node ``u`` is infected by contagion ``k``.
"""

import io
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_finite_matrix, check_nonnegative_matrix, check_positive_int


@dataclass(frozen=True)
class InfectionLog:
    """Binary record of which node was infected by which contagion, and when.

    ``events`` is an ``(E, 3)`` integer array of ``(node, contagion, time)``
    rows, sorted and free of duplicates. ``duplicates`` counts the repeated
    triples dropped at construction.
    """

    n_nodes: int
    n_contagions: int
    horizon: int
    events: np.ndarray
    duplicates: int = field(default=0, compare=False)

    def __post_init__(self):
        check_positive_int(self.n_nodes, "n_nodes")
        check_positive_int(self.n_contagions, "n_contagions")
        check_positive_int(self.horizon, "horizon")
        ev = np.asarray(self.events, dtype=np.int64).reshape(-1, 3)
        bounds = ((1, self.n_nodes, "node"), (1, self.n_contagions, "contagion"),
                  (0, self.horizon, "time"))
        for col, (lo, hi, what) in enumerate(bounds):
            bad = (ev[:, col] < lo) | (ev[:, col] > hi)
            if np.any(bad):
                row = ev[np.argmax(bad)]
                raise ValueError(
                    f"{what} index out of bounds in event {tuple(row)}: "
                    f"expected {lo}..{hi}"
                )
        uniq = np.unique(ev, axis=0) if len(ev) else ev
        dups = len(ev) - len(uniq)
        uniq.setflags(write=False)
        object.__setattr__(self, "events", uniq)
        object.__setattr__(self, "duplicates", self.duplicates + dups)

    @property
    def n_events(self):
        return len(self.events)

    def indicator(self):
        """Dense indicator ``M[u-1, k-1, t]`` of shape ``(N, K, T+1)``."""
        M = np.zeros((self.n_nodes, self.n_contagions, self.horizon + 1), dtype=bool)
        if self.n_events:
            u, k, t = self.events.T
            M[u - 1, k - 1, t] = True
        return M


@dataclass(frozen=True)
class VolumeSeries:
    """Per-contagion volumes; ``values[t-1, k-1]`` is the volume of ``k`` at ``t``."""

    values: np.ndarray

    def __post_init__(self):
        v = check_finite_matrix(self.values, "volumes").copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def horizon(self):
        return self.values.shape[0]

    @property
    def n_contagions(self):
        return self.values.shape[1]


class InfluenceMatrix:
    """Block views onto a nonnegative ``(L*N, K)`` influence matrix."""

    def __init__(self, data, n_nodes):
        data = check_nonnegative_matrix(data, "influence")
        if data.shape[0] % n_nodes:
            raise ValueError(
                f"influence has {data.shape[0]} rows, not a multiple of N={n_nodes}"
            )
        self.data = data
        self.n_nodes = n_nodes
        self.lag = data.shape[0] // n_nodes

    @property
    def n_contagions(self):
        return self.data.shape[1]

    def block(self, u, k):
        """``I_{u,k}`` as a length-L vector (1-based ``u`` and ``k``)."""
        L = self.lag
        return self.data[(u - 1) * L:u * L, k - 1]

    def column(self, k):
        return self.data[:, k - 1]

    def node(self, u):
        """The ``L x K`` slice ``I_u``."""
        L = self.lag
        return self.data[(u - 1) * L:u * L, :]

    def blocks(self):
        """All blocks as an array of shape ``(N, L, K)``."""
        return self.data.reshape(self.n_nodes, self.lag, -1)


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8", newline="")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8")


def parse_events(text_lines):
    """Parse ``node_id,contagion_id,time`` records; a first-line header is skipped."""
    rows = []
    for lineno, raw in enumerate(text_lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if len(parts) != 3:
                raise ValueError
            rows.append(tuple(int(p) for p in parts))
        except ValueError:
            if lineno == 1 and not rows:
                continue
            raise ValueError(
                f"malformed event record on line {lineno}: {line!r}"
            ) from None
    return rows


def load_events(source, n_nodes, n_contagions, horizon):
    """Read an event CSV into a validated :class:`InfectionLog`.

    ``source`` may be a path, raw bytes, or a binary/text stream. Duplicate
    triples are collapsed and reported through a warning and
    ``log.duplicates``.
    """
    fh = _open_text(source)
    try:
        rows = parse_events(fh)
    finally:
        if isinstance(source, (str, os.PathLike)):
            fh.close()
    if not rows:
        raise ValueError("event input is empty")
    log = InfectionLog(n_nodes, n_contagions, horizon, np.array(rows, dtype=np.int64))
    if log.duplicates:
        warnings.warn(f"collapsed {log.duplicates} duplicate event(s)", stacklevel=2)
    return log


def build_volume(log):
    """Count newly infected nodes per (time, contagion) for times ``1..T``."""
    V = np.zeros((log.horizon, log.n_contagions))
    if log.n_events:
        _, k, t = log.events.T
        keep = t >= 1
        np.add.at(V, (t[keep] - 1, k[keep] - 1), 1.0)
    return VolumeSeries(V)


def build_design(log, lag):
    """Lagged design matrices, one ``(T, L*N)`` 0/1 array per contagion.

    Entry ``[t-1, (u-1)*L + l-1]`` of matrix ``k`` is ``M_{u,k}(t-l)``.
    """
    check_positive_int(lag, "lag")
    T, N, L = log.horizon, log.n_nodes, lag
    if L > T:
        raise ValueError(f"lag L={L} exceeds the horizon T={T}")
    M = log.indicator()
    designs = []
    for k in range(log.n_contagions):
        D = np.zeros((T, N, L))
        for l in range(1, L + 1):
            # rows t = l..T read time t - l = 0..T-l
            D[l - 1:, :, l - 1] = M[:, k, :T - l + 1].T
        designs.append(D.reshape(T, N * L))
    return designs


def lagged_row(indicator, k, t_target, lag):
    """Design row for target time ``t_target`` and contagion index ``k`` (0-based).

    Matches row ``t_target`` of :func:`build_design` whenever ``t_target <= T``;
    beyond ``T`` the missing infections are zero.
    """
    N, _, n_times = indicator.shape
    row = np.zeros((N, lag))
    for l in range(1, lag + 1):
        t = t_target - l
        if 0 <= t < n_times:
            row[:, l - 1] = indicator[:, k, t]
    return row.reshape(N * lag)


def predict_volume(log, influence, t_target):
    """One-step volume forecast ``V_k(t_target)`` for every contagion.

    Uses infections at times ``t_target-1, ..., t_target-L``; times outside
    ``0..T`` carry no infections. Returns a length-K vector.
    """
    influence = check_finite_matrix(influence, "influence")
    N, K = log.n_nodes, log.n_contagions
    if influence.shape[1] != K or influence.shape[0] % N:
        raise ValueError(
            f"influence shape {influence.shape} does not match N={N}, K={K}"
        )
    if t_target < 1:
        raise ValueError("t_target must be >= 1")
    L = influence.shape[0] // N
    M = log.indicator()
    return np.array([
        np.dot(lagged_row(M, k, t_target, L), np.ascontiguousarray(influence[:, k]))
        for k in range(K)
    ])


def design_predictions(designs, influence):
    """Forward model over all rows: entry ``[t-1, k-1]`` is ``M_k[t-1] . I^k``.

    Evaluated one row at a time with the same dot product as
    :func:`predict_volume`, so the two agree bit-for-bit.
    """
    T = designs[0].shape[0]
    out = np.empty((T, len(designs)))
    for k, M in enumerate(designs):
        col = np.ascontiguousarray(influence[:, k])
        for t in range(T):
            out[t, k] = np.dot(M[t], col)
    return out
