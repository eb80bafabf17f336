"""Built-in models: hidden AR(1), the unlikely-observation AR(1) and the
plankton-zooplankton Lotka-Volterra model, plus data simulation and CSV I/O.

Model functions are module-level and read their parameters from ``theta``
so that ModelSpec instances pickle cleanly into worker processes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kalman import LinearGaussianSpec
from .ssm import (DATA, ROLE_OTHER, AuxiliaryProposal, ConfigurationError, ContractError,
                  ModelSpec, ObservationRecord, PropagationError, Trajectory, keyed_generator)

LOG_2PI = math.log(2.0 * math.pi)


def _normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * LOG_2PI - np.log(sd) - 0.5 * z * z


# --- hidden AR(1) -------------------------------------------------------------

@dataclass(frozen=True)
class Ar1Params:
    eta: float = 0.9
    init_sd: float = 1.0
    trans_sd: float = 1.0
    obs_sd: float = 1.0

    def __post_init__(self):
        for name in ("init_sd", "trans_sd", "obs_sd"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigurationError(f"{name} must be positive, got {v}")

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.eta, self.init_sd, self.trans_sd, self.obs_sd])

    def linear_gaussian(self) -> LinearGaussianSpec:
        return LinearGaussianSpec(
            A=[[self.eta]], Q=[[self.trans_sd ** 2]], C=[[1.0]], R=[[self.obs_sd ** 2]],
            m0=[0.0], P0=[[self.init_sd ** 2]],
        )


def _ar1_init(u, theta):
    return theta[1] * u[..., :1]


def _ar1_transition(x, u, theta):
    return theta[0] * x + theta[2] * u[..., :1]


def _ar1_log_obs(y, x, theta):
    return _normal_logpdf(y[0], x[..., 0], theta[3])


def _ar1_obs(x, v, theta):
    return x + theta[3] * v[..., :1]


def _ar1_log_transition(x_new, x, theta):
    return _normal_logpdf(x_new[..., 0], theta[0] * x[..., 0], theta[2])


def _ar1_posterior(x_prev, y, theta):
    prec_f = 1.0 / theta[2] ** 2
    prec_g = 1.0 / theta[3] ** 2
    var = 1.0 / (prec_f + prec_g)
    mean = var * (theta[0] * x_prev[..., 0] * prec_f + y[0] * prec_g)
    return mean, math.sqrt(var)


def _ar1_aux_sample(x_prev, y, u, theta):
    mean, sd = _ar1_posterior(x_prev, y, theta)
    return (mean + sd * u[..., 0])[..., None]


def _ar1_aux_log_density(x_new, x_prev, y, theta):
    mean, sd = _ar1_posterior(x_prev, y, theta)
    return _normal_logpdf(x_new[..., 0], mean, sd)


def _ar1_aux_lookahead(x_prev, y, theta):
    return _normal_logpdf(y[0], theta[0] * x_prev[..., 0], math.hypot(theta[2], theta[3]))


AR1_FULLY_ADAPTED = AuxiliaryProposal(_ar1_aux_sample, _ar1_aux_log_density, _ar1_aux_lookahead)


def make_ar1(params: Ar1Params = Ar1Params()) -> ModelSpec:
    """Hidden AR(1): ``x_t = eta x_{t-1} + trans_sd u``, ``y_t ~ N(x_t, obs_sd^2)``.

    The auxiliary proposal is the fully adapted one, ``p(x_t | x_{t-1}, y_t)``.
    """
    return ModelSpec(
        state_dim=1, obs_dim=1, theta=params.theta,
        init_fn=_ar1_init, transition_fn=_ar1_transition, noise_dim=1,
        log_obs_density=_ar1_log_obs, obs_fn=_ar1_obs,
        log_transition_density=_ar1_log_transition,
        aux_proposal=AR1_FULLY_ADAPTED,
        log_gbar=-0.5 * math.log(2.0 * math.pi * params.obs_sd ** 2),
        name="ar1",
    )


UNLIKELY_PARAMS = Ar1Params(eta=0.9, init_sd=0.1, trans_sd=0.1, obs_sd=0.1)


def make_unlikely(params: Ar1Params = UNLIKELY_PARAMS, horizon: int = 10, y_last: float = 1.0):
    """AR(1) observed once, ``y_T = y_last`` at ``t = T``; returns ``(model, obs)``."""
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    model = make_ar1(params)
    obs = ObservationRecord.from_pairs([(horizon, [y_last])], horizon)
    return model, obs


# --- Lotka-Volterra plankton model ---------------------------------------------

@dataclass(frozen=True)
class LotkaVolterraParams:
    mu_alpha: float = 0.7
    sigma_alpha: float = 0.5
    c: float = 0.25
    e: float = 0.3
    m_l: float = 0.1
    m_q: float = 0.1
    obs_log_sd: float = 0.2
    rk4_step: float = 0.1

    def __post_init__(self):
        if not self.sigma_alpha >= 0:
            raise ConfigurationError("sigma_alpha must be >= 0")
        for name in ("c", "e", "m_l", "m_q"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not self.obs_log_sd > 0:
            raise ConfigurationError("obs_log_sd must be positive")
        if not 0 < self.rk4_step <= 1:
            raise ConfigurationError("rk4_step must lie in (0, 1]")

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.mu_alpha, self.sigma_alpha, self.c, self.e, self.m_l, self.m_q,
                         self.obs_log_sd, self.rk4_step])


def lv_rhs(p, z, alpha, c, e, m_l, m_q):
    """Time derivatives ``(dp/dt, dz/dt)``."""
    cpz = c * p * z
    return alpha * p - cpz, e * cpz - m_l * z - m_q * z * z


def lv_log_rhs(lp, lz, alpha, c, e, m_l, m_q):
    """Time derivatives of ``(log p, log z)``."""
    p, z = np.exp(lp), np.exp(lz)
    return alpha - c * z, e * c * p - m_l - m_q * z


def rk4_integrate(p, z, alpha, c, e, m_l, m_q, step, duration=1.0):
    """Advance ``(p, z)`` over ``duration`` by classical fourth-order Runge-Kutta.

    The scheme runs on ``(log p, log z)``, which keeps both populations
    positive and avoids the overshoot RK4 shows on the original coordinates
    when ``c z`` is large. The step is shrunk to ``duration / ceil(duration / step)``
    so the interval is covered exactly.
    """
    n = max(1, math.ceil(duration / step - 1e-9))
    h = duration / n
    with np.errstate(divide="ignore"):
        lp0, lz0 = np.log(p), np.log(z)
    lp, lz = lp0, lz0
    for _ in range(n):
        k1p, k1z = lv_log_rhs(lp, lz, alpha, c, e, m_l, m_q)
        k2p, k2z = lv_log_rhs(lp + 0.5 * h * k1p, lz + 0.5 * h * k1z, alpha, c, e, m_l, m_q)
        k3p, k3z = lv_log_rhs(lp + 0.5 * h * k2p, lz + 0.5 * h * k2z, alpha, c, e, m_l, m_q)
        k4p, k4z = lv_log_rhs(lp + h * k3p, lz + h * k3z, alpha, c, e, m_l, m_q)
        lp = lp + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        lz = lz + (h / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    # a finite log-state that left the reals overflowed along the way
    lp = np.where(np.isfinite(lp0) & ~np.isfinite(lp), np.nan, lp)
    lz = np.where(np.isfinite(lz0) & ~np.isfinite(lz), np.nan, lz)
    return np.exp(lp), np.exp(lz)


def _lv_init(u, theta):
    return 2.0 * np.exp(u[..., 1:3])


def _lv_transition(x, u, theta):
    mu, sig, c, e, m_l, m_q, _, step = theta
    alpha = mu + sig * u[..., 0]
    with np.errstate(over="ignore", invalid="ignore"):
        p, z = rk4_integrate(x[..., 0], x[..., 1], alpha, c, e, m_l, m_q, step)
    out = np.stack([p, z], axis=-1)
    if not np.all(np.isfinite(out)):
        raise PropagationError("non-finite Lotka-Volterra state")
    return out


def _lv_log_obs(y, x, theta):
    with np.errstate(divide="ignore"):
        return _normal_logpdf(np.log(y[0]), np.log(x[..., 0]), theta[6])


def _lv_obs(x, v, theta):
    return x[..., :1] * np.exp(theta[6] * v[..., :1])


def make_lotka_volterra(params: LotkaVolterraParams = LotkaVolterraParams()) -> ModelSpec:
    """Phytoplankton/zooplankton model with state ``(p, z)``.

    Each unit of time draws a growth rate ``alpha ~ N(mu_alpha, sigma_alpha^2)``
    and integrates the ODE with fixed-step RK4. Only ``p`` is observed, through
    ``log y ~ N(log p, obs_log_sd^2)``; the transition density is intractable.
    The declared bound is that of the density of ``log y``.
    """
    return ModelSpec(
        state_dim=2, obs_dim=1, theta=params.theta,
        init_fn=_lv_init, transition_fn=_lv_transition, noise_dim=3,
        log_obs_density=_lv_log_obs, obs_fn=_lv_obs,
        log_gbar=-0.5 * math.log(2.0 * math.pi * params.obs_log_sd ** 2),
        name="lotka_volterra",
    )


# --- data ----------------------------------------------------------------------

def generate_data(model: ModelSpec, T: int, seed: int):
    """Simulate ``(Trajectory, ObservationRecord)`` of horizon ``T``."""
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    if model.obs_fn is None:
        raise ConfigurationError("model has no observation sampler")
    rng = keyed_generator(seed, ROLE_OTHER, DATA)
    u = rng.standard_normal((T + 1, model.noise_dim))
    v = rng.standard_normal((T, model.obs_dim))
    x = np.empty((T + 1, model.state_dim))
    x[0] = model.init_fn(u[0], model.theta)
    for t in range(1, T + 1):
        x[t] = model.transition_fn(x[t - 1], u[t], model.theta)
    y = model.obs_fn(x[1:], v, model.theta)
    return Trajectory(x), ObservationRecord(y)


def write_observations_csv(path, obs: ObservationRecord) -> None:
    """CSV with columns ``t, y1..yd``; missing observations are blank."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"y{i + 1}" for i in range(obs.obs_dim)])
        for t in range(1, obs.horizon + 1):
            y = obs[t]
            cells = [""] * obs.obs_dim if y is None else [repr(float(v)) for v in y]
            writer.writerow([t] + cells)


def read_observations_csv(path) -> ObservationRecord:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t" or len(header) < 2:
            raise ContractError(f"{path}: expected header 't,y1,...'")
        d = len(header) - 1
        pairs = []
        for row in reader:
            if not row:
                continue
            if len(row) != d + 1:
                raise ContractError(f"{path}: malformed row {row}")
            cells = row[1:]
            if all(c.strip() == "" for c in cells):
                y = None
            else:
                y = [float(c) for c in cells]
            pairs.append((int(row[0]), y))
    if not pairs:
        raise ContractError(f"{path}: no rows")
    return ObservationRecord.from_pairs(pairs, pairs[-1][0], d)
