"""Synthetic benchmark: low-rank nonnegative influence, random infections, noisy volumes."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int
from .data import InfectionLog, VolumeSeries, build_design, design_predictions


@dataclass(frozen=True)
class SynthConfig:
    """Benchmark sizes. ``noise_scale=None`` means 0.1 x the mean noiseless volume."""

    n_nodes: int = 100
    n_contagions: int = 20
    lag: int = 10
    horizon: int = 20
    rank: int = 5
    noise_scale: float = None
    seed: int = 0

    def __post_init__(self):
        for name in ("n_nodes", "n_contagions", "lag", "horizon", "rank"):
            check_positive_int(getattr(self, name), name)
        if self.rank > min(self.lag * self.n_nodes, self.n_contagions):
            raise ValueError(
                f"rank {self.rank} exceeds min(L*N, K) = "
                f"{min(self.lag * self.n_nodes, self.n_contagions)}"
            )
        if self.lag > self.horizon:
            raise ValueError("lag must not exceed the horizon")
        if self.noise_scale is not None and not self.noise_scale >= 0:
            raise ValueError("noise_scale must be >= 0")


@dataclass(frozen=True)
class SynthInstance:
    log: InfectionLog
    volumes: VolumeSeries
    influence: np.ndarray
    noise_scale: float


def gen_instance(cfg):
    """Draw one instance from ``cfg``; identical seeds give identical instances.

    The ground-truth influence is a product of two uniform [0, 1) factors of
    inner dimension ``rank``. Every (node, contagion, time) indicator is an
    independent fair coin flip, and volumes are the forward model plus i.i.d.
    Gaussian noise.
    """
    rng = np.random.default_rng(cfg.seed)
    N, K, L, T, r = cfg.n_nodes, cfg.n_contagions, cfg.lag, cfg.horizon, cfg.rank
    A = rng.uniform(0.0, 1.0, size=(L * N, r))
    B = rng.uniform(0.0, 1.0, size=(r, K))
    influence = A @ B
    flips = rng.integers(0, 2, size=(N, K, T + 1))
    u, k, t = np.nonzero(flips)
    log = InfectionLog(N, K, T, np.column_stack([u + 1, k + 1, t]))
    clean = design_predictions(build_design(log, L), influence)
    scale = 0.1 * float(np.mean(clean)) if cfg.noise_scale is None else cfg.noise_scale
    noise = rng.standard_normal((T, K))
    volumes = clean + scale * noise if scale > 0 else clean
    return SynthInstance(log, VolumeSeries(volumes), influence, scale)
