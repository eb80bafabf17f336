"""Particle-filter smoothers used as comparisons: trajectory smoothing from a
single bootstrap filter and fixed-lag smoothing by truncated genealogy."""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Optional

import numpy as np

from .cpf import particle_filter
from .estimator import map_replicates
from .functionals import IDENTITY, TestFunction
from .ssm import (ROLE_OTHER, ConfigurationError, ModelSpec, NoiseTable, ObservationRecord)


@dataclass(frozen=True)
class FixedLagConfig:
    lag: int
    n_particles: int

    def __post_init__(self):
        if self.lag < 0:
            raise ConfigurationError("lag must be >= 0")
        if self.n_particles < 2:
            raise ConfigurationError("n_particles must be >= 2")


def _weights(lw):
    w = np.exp(lw - lw.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)


def pf_smoother(model: ModelSpec, obs: ObservationRecord, n_particles: int, h: TestFunction = IDENTITY,
                rng: Optional[np.random.Generator] = None, noise=None) -> np.ndarray:
    """``sum_k w_T^k h(x^k_{0:T})`` over the surviving paths of one bootstrap filter."""
    if n_particles < 2:
        raise ConfigurationError("n_particles must be >= 2")
    rng = rng if rng is not None else np.random.default_rng()
    sys = particle_filter(model, obs, n_particles, noise, rng)
    return h.weighted_mean(sys.paths(), sys.final_weights())


def fixed_lag_smoother(model: ModelSpec, obs: ObservationRecord, cfg: FixedLagConfig,
                       h: TestFunction = IDENTITY, rng: Optional[np.random.Generator] = None,
                       noise=None) -> np.ndarray:
    """Estimate each time block of ``h`` at ``t`` from the filter at ``min(t + lag, T)``.

    The time-``t`` states are read off the genealogy traced back from the
    later generation and weighted by that generation's weights. ``lag = 0``
    gives filtering means; ``lag = T`` reproduces ``pf_smoother``.
    """
    rng = rng if rng is not None else np.random.default_rng()
    T = obs.horizon
    if cfg.lag > T:
        raise ConfigurationError(f"lag {cfg.lag} exceeds horizon {T}")
    sys = particle_filter(model, obs, cfg.n_particles, noise, rng)
    N = cfg.n_particles
    w = _weights(sys.log_weights)
    q = h.features(model.state_dim)
    # times whose window reaches T read the full genealogy: same reduction as pf_smoother
    out = h.weighted_mean(sys.paths(), sys.final_weights()).reshape(T + 1, q)
    for t in range(max(0, T - cfg.lag)):
        s = t + cfg.lag
        idx = np.arange(N)
        for r in range(s, t, -1):
            idx = sys.ancestors[r - 1][idx]
        out[t] = w[s] @ h.per_time(sys.particles[t][idx])
    return out.reshape(-1)


def propagation_units(n_particles: int, T: int) -> int:
    """Cost of one filter in particle propagations, comparable to ``cost_units``."""
    return n_particles * T


def _baseline_task(model, obs, h, seed, kind, n_particles, lag, rid):
    table = NoiseTable(seed, rid, 0, obs.horizon, n_particles, model.noise_dim, role=ROLE_OTHER)
    rng = table.resampling_rng()
    try:
        if kind == "pf":
            val = pf_smoother(model, obs, n_particles, h, rng, table)
        else:
            val = fixed_lag_smoother(model, obs, FixedLagConfig(lag, n_particles), h, rng, table)
    except ArithmeticError as exc:
        return rid, None, f"{type(exc).__name__}: {exc}"
    return rid, val, ""


def run_baseline_replicates(model: ModelSpec, obs: ObservationRecord, kind: str, n_particles: int,
                            R: int, master_seed: int, h: TestFunction = IDENTITY, lag: int = 0,
                            workers: int = 1):
    """Independent runs of ``pf_smoother`` (``kind="pf"``) or ``fixed_lag_smoother``.

    Returns a list of ``(replicate_id, value or None, failure reason)``.
    """
    if kind not in ("pf", "fixed_lag"):
        raise ConfigurationError(f"unknown baseline {kind!r}")
    task = partial(_baseline_task, model, obs, h, master_seed, kind, n_particles, lag)
    return map_replicates(task, range(R), workers)
