"""Particle filters: bootstrap/auxiliary PF, conditional PF and coupled CPF.

All three share one engine that runs ``S`` particle systems (``S = 1`` or
``2``) side by side on stacked arrays of shape ``(S, N, d)``. With two
systems the noise is shared and every index draw goes through the maximal
coupling, so equal references yield bit-identical systems.

The reference trajectory sits in the last slot (0-based index ``N - 1``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .functionals import IDENTITY, TestFunction
from . import _kernels as _k
from .ssm import (ConfigurationError, ContractError, DegenerateWeightsError, ModelSpec,
                  NoiseTable, ObservationRecord, Trajectory)

BOOTSTRAP = "bootstrap"
AUXILIARY = "auxiliary"


@dataclass(frozen=True)
class CpfOptions:
    n_particles: int
    ancestor_sampling: bool = False
    proposal: str = BOOTSTRAP

    def __post_init__(self):
        if self.n_particles < 2:
            raise ConfigurationError("n_particles must be >= 2")
        if self.proposal not in (BOOTSTRAP, AUXILIARY):
            raise ConfigurationError(f"unknown proposal {self.proposal!r}")

    def check(self, model: ModelSpec) -> None:
        if self.ancestor_sampling and model.log_transition_density is None:
            raise ConfigurationError("ancestor sampling needs a tractable transition density")
        if self.proposal == AUXILIARY and model.aux_proposal is None:
            raise ConfigurationError("auxiliary proposal requested but model has none")


@dataclass(frozen=True)
class ParticleSystem:
    """One filter sweep: particles ``(T+1, N, d)``, log-weights ``(T+1, N)``
    and ancestors ``(T, N)`` where ``ancestors[t - 1]`` are the indices drawn
    at step ``t``."""

    particles: np.ndarray
    log_weights: np.ndarray
    ancestors: np.ndarray

    @property
    def n_particles(self) -> int:
        return self.particles.shape[1]

    def final_weights(self) -> np.ndarray:
        lw = self.log_weights[-1]
        w = np.exp(lw - lw.max())
        return w / w.sum()

    def paths(self) -> np.ndarray:
        """All ``N`` surviving trajectories, shape ``(N, T+1, d)``."""
        return _trace_paths(self.particles[:, None], self.ancestors[:, None])[0]


@dataclass(frozen=True)
class RaoBlackwellEstimate:
    value: np.ndarray


def _normalize_rows(lw: np.ndarray, step: int) -> np.ndarray:
    out = np.empty(lw.shape)
    if _k.normalize_rows(lw, out) >= 0:
        raise DegenerateWeightsError(step=step)
    return out


def _draw(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Indices ``(S, count)`` from uniforms ``u (3, count)``; coupled when ``S == 2``."""
    count = u.shape[1]
    out = np.empty((w.shape[0], count), dtype=np.intp)
    if w.shape[0] == 1:
        _k.inverse_cdf(w[0], u[1], out[0])
    elif _k.coupled_indices(w[0], w[1], u[0], u[1], u[2], out[0], out[1]):
        raise DegenerateWeightsError()
    return out


def _trace_paths(x: np.ndarray, ancestors: np.ndarray) -> np.ndarray:
    """Reconstruct ``(S, N, T+1, d)`` paths from ``x (T+1, S, N, d)``."""
    T1, S, N, d = x.shape
    rows = np.arange(S)[:, None]
    idx = np.broadcast_to(np.arange(N), (S, N))
    paths = np.empty((S, N, T1, d))
    for t in range(T1 - 1, -1, -1):
        paths[:, :, t] = x[t][rows, idx]
        if t > 0:
            idx = ancestors[t - 1][rows, idx]
    return paths


def _run_filter(model: ModelSpec, obs: ObservationRecord, opts: CpfOptions, noise: np.ndarray,
                rng: np.random.Generator, refs: Optional[np.ndarray], n_systems: int = 1):
    """Core sweep. ``refs`` is ``(S, T+1, d)`` for conditional filters, None otherwise.

    Returns ``(x, log_weights, ancestors)`` with shapes ``(T+1, S, N, d)``,
    ``(T+1, S, N)`` and ``(T, S, N)``.
    """
    N = opts.n_particles
    T = obs.horizon
    S = n_systems
    d = model.state_dim
    theta = model.theta
    conditional = refs is not None
    M = N - 1 if conditional else N
    if noise.shape[:2] != (T + 1, M) or noise.shape[2] != model.noise_dim:
        raise ContractError(f"noise table shape {noise.shape} does not match (T+1={T + 1}, {M}, "
                            f"{model.noise_dim})")
    aux = model.aux_proposal if opts.proposal == AUXILIARY else None
    use_as = conditional and opts.ancestor_sampling
    ys = obs.values
    present = ~np.isnan(ys).any(axis=1)

    x = np.empty((T + 1, S, N, d))
    logw = np.zeros((T + 1, S, N))
    anc = np.empty((T, S, N), dtype=np.intp)
    rows = np.arange(S)[:, None]
    # block t-1 drives step t: slots 0..M-1 for ancestors, slot N-1 for ancestor
    # sampling; block T drives the final selection
    uniforms = rng.random((T + 1, 3, N))

    x[0, :, :M] = model.init_fn(noise[0], theta)
    if conditional:
        x[0, :, N - 1] = refs[:, 0]

    for t in range(1, T + 1):
        y = ys[t - 1]
        obs_t = present[t - 1]
        x_prev = x[t - 1]
        lw_prev = logw[t - 1]
        look = None
        if aux is not None and obs_t:
            look = aux.log_lookahead(x_prev, y, theta)
            w_res = _normalize_rows(lw_prev + look, t - 1)
        else:
            w_res = _normalize_rows(lw_prev, t - 1)

        a = anc[t - 1]
        a[:, :M] = _draw(w_res, uniforms[t - 1, :, :M])
        if conditional:
            if use_as:
                # lookahead terms cancel: resampling weight / lookahead = filter weight
                las = lw_prev + model.log_transition_density(refs[:, t][:, None], x_prev, theta)
                a[:, N - 1] = _draw(_normalize_rows(las, t - 1), uniforms[t - 1, :, N - 1:])[:, 0]
            else:
                a[:, N - 1] = N - 1

        xa = x_prev[rows, a]
        if look is not None:
            x[t, :, :M] = aux.sample(xa[:, :M], y, noise[t], theta)
        else:
            x[t, :, :M] = model.transition_fn(xa[:, :M], noise[t], theta)
        if conditional:
            x[t, :, N - 1] = refs[:, t]

        if obs_t:
            lw = model.log_obs_density(y, x[t], theta)
            if look is not None:
                lw = (lw + model.log_transition_density(x[t], xa, theta)
                      - aux.log_density(x[t], xa, y, theta) - look[rows, a])
            logw[t] = lw
    return x, logw, anc, uniforms[T]


def _finish(x, logw, anc, h: TestFunction, u_final, select: bool = True):
    w_T = _normalize_rows(logw[-1], logw.shape[0] - 1)
    paths = _trace_paths(x, anc)
    rb = h.weighted_mean(paths, w_T)
    if not select:
        return paths, w_T, rb, None
    b = _draw(w_T, u_final[:, :1])[:, 0]
    chosen = paths[np.arange(paths.shape[0]), b]
    return paths, w_T, rb, chosen


def _noise_array(noise, T, slots, model, rng):
    if noise is None:
        return rng.standard_normal((T + 1, slots, model.noise_dim))
    if isinstance(noise, NoiseTable):
        return noise.values
    return np.asarray(noise, dtype=float)


def _ref_array(ref, T, model) -> np.ndarray:
    s = ref.states if isinstance(ref, Trajectory) else np.asarray(ref, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape != (T + 1, model.state_dim):
        raise ContractError(f"reference has shape {s.shape}, expected {(T + 1, model.state_dim)}")
    return s


def run_conditional_filter(ref, model: ModelSpec, obs: ObservationRecord, opts: CpfOptions,
                           noise=None, rng: Optional[np.random.Generator] = None) -> ParticleSystem:
    """Run the conditional filter and return the particle system (no selection)."""
    rng = rng if rng is not None else np.random.default_rng()
    opts.check(model)
    T = obs.horizon
    refs = _ref_array(ref, T, model)[None]
    nz = _noise_array(noise, T, opts.n_particles - 1, model, rng)
    x, logw, anc, u_final = _run_filter(model, obs, opts, nz, rng, refs, 1)
    return ParticleSystem(x[:, 0], logw[:, 0], anc[:, 0])


def cpf_sweep(ref, model: ModelSpec, obs: ObservationRecord, opts: CpfOptions, noise=None,
              rng: Optional[np.random.Generator] = None, h: TestFunction = IDENTITY):
    """One iteration of the conditional particle filter kernel.

    Returns the selected trajectory and the Rao-Blackwellised value
    ``sum_k w_T^k h(x^k_{0:T})`` over all final trajectories.
    """
    rng = rng if rng is not None else np.random.default_rng()
    opts.check(model)
    T = obs.horizon
    refs = _ref_array(ref, T, model)[None]
    nz = _noise_array(noise, T, opts.n_particles - 1, model, rng)
    x, logw, anc, u_final = _run_filter(model, obs, opts, nz, rng, refs, 1)
    _, _, rb, chosen = _finish(x, logw, anc, h, u_final)
    return Trajectory(chosen[0]), RaoBlackwellEstimate(rb[0])


def ccpf_sweep(ref_pair, model: ModelSpec, obs: ObservationRecord, opts: CpfOptions, noise=None,
               rng: Optional[np.random.Generator] = None, h: TestFunction = IDENTITY):
    """One iteration of the coupled conditional particle filter kernel.

    Both systems consume the same noise; ancestors, the ancestor-sampling
    draws and the final selection come from maximal couplings. Returns
    ``(X', X~', (rb, rb~), met)`` where ``met`` is bitwise equality of the
    two outputs.
    """
    rng = rng if rng is not None else np.random.default_rng()
    opts.check(model)
    T = obs.horizon
    refs = np.stack([_ref_array(r, T, model) for r in ref_pair])
    nz = _noise_array(noise, T, opts.n_particles - 1, model, rng)
    x, logw, anc, u_final = _run_filter(model, obs, opts, nz, rng, refs, 2)
    _, _, rb, chosen = _finish(x, logw, anc, h, u_final)
    met = bool(np.array_equal(chosen[0], chosen[1]))
    return (Trajectory(chosen[0]), Trajectory(chosen[1]),
            (RaoBlackwellEstimate(rb[0]), RaoBlackwellEstimate(rb[1])), met)


def particle_filter(model: ModelSpec, obs: ObservationRecord, n_particles: int, noise=None,
                    rng: Optional[np.random.Generator] = None,
                    proposal: str = BOOTSTRAP) -> ParticleSystem:
    """Unconditional particle filter with multinomial resampling at every step."""
    rng = rng if rng is not None else np.random.default_rng()
    opts = CpfOptions(n_particles, False, proposal)
    opts.check(model)
    nz = _noise_array(noise, obs.horizon, n_particles, model, rng)
    x, logw, anc, u_final = _run_filter(model, obs, opts, nz, rng, None, 1)
    return ParticleSystem(x[:, 0], logw[:, 0], anc[:, 0])


def pf_init(model: ModelSpec, obs: ObservationRecord, n_particles: int, noise=None,
            rng: Optional[np.random.Generator] = None, h: TestFunction = IDENTITY):
    """Draw one trajectory of a bootstrap filter with probabilities ``w_T``.

    Returns ``(Trajectory, RaoBlackwellEstimate)``; the trajectory law is the
    chain initialisation.
    """
    rng = rng if rng is not None else np.random.default_rng()
    if n_particles < 2:
        raise ConfigurationError("n_particles must be >= 2")
    opts = CpfOptions(n_particles)
    nz = _noise_array(noise, obs.horizon, n_particles, model, rng)
    x, logw, anc, u_final = _run_filter(model, obs, opts, nz, rng, None, 1)
    _, _, rb, chosen = _finish(x, logw, anc, h, u_final)
    return Trajectory(chosen[0]), RaoBlackwellEstimate(rb[0])
