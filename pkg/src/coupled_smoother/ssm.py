"""State-space model containers and keyed random streams.

A model is given through random function representations: the initial
state is ``init_fn(u0, theta)`` and a transition is
``transition_fn(x, u, theta)`` where ``u`` is a vector of independent
standard normals. Every function is vectorised over leading axes, so
``x`` may have shape ``(..., state_dim)`` and ``u`` shape
``(..., noise_dim)``.

Randomness is drawn from counter-based Philox streams keyed by
``(seed, replicate, role, sweep, purpose)``. Two systems consuming the
same key therefore see bit-identical noise regardless of control flow,
which is what the common-random-number coupling relies on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class ContractError(ValueError):
    """Inputs violate an operation's preconditions (shapes, ranges)."""


class ConfigurationError(ValueError):
    """Invalid model or estimator parameters."""


class DegenerateWeightsError(ArithmeticError):
    """All particle weights vanished (or became non-finite)."""

    def __init__(self, message: str = "all weights are zero", step: Optional[int] = None):
        if step is not None:
            message = f"{message} (time step {step})"
        super().__init__(message)
        self.step = step


class PropagationError(ArithmeticError):
    """The transition produced a non-finite or invalid state."""


# stream purposes
NOISE = 0
RESAMPLE = 1
DATA = 2

# stream roles
ROLE_INIT_X = 0
ROLE_INIT_XTILDE = 1
ROLE_SWEEP = 2
ROLE_OTHER = 3


def keyed_generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator addressed by ``seed`` and a tuple of nonnegative ints."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class AuxiliaryProposal:
    """Proposal conditioned on the next observation.

    ``sample(x_prev, y, u, theta)`` draws the new state from noise ``u``,
    ``log_density(x_new, x_prev, y, theta)`` evaluates it and
    ``log_lookahead(x_prev, y, theta)`` is the first-stage weight used to
    bias resampling towards ancestors that explain ``y``.
    """

    sample: Callable
    log_density: Callable
    log_lookahead: Callable


@dataclass(frozen=True)
class ModelSpec:
    state_dim: int
    obs_dim: int
    theta: np.ndarray
    init_fn: Callable
    transition_fn: Callable
    noise_dim: int
    log_obs_density: Callable
    obs_fn: Optional[Callable] = None
    log_transition_density: Optional[Callable] = None
    aux_proposal: Optional[AuxiliaryProposal] = None
    # log of the declared upper bound on the measurement density; None = unavailable
    log_gbar: Optional[float] = None
    name: str = "custom"

    def __post_init__(self):
        if self.state_dim < 1 or self.obs_dim < 1 or self.noise_dim < 1:
            raise ConfigurationError("dimensions must be positive")
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))

    @property
    def has_transition_density(self) -> bool:
        return self.log_transition_density is not None


def propagate(model: ModelSpec, x, u, theta=None) -> np.ndarray:
    """Apply the transition to state(s) ``x`` with noise ``u``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1:] != (model.state_dim,):
        raise ContractError(f"state has trailing dim {x.shape[-1:]}, expected {model.state_dim}")
    if u.shape[-1:] != (model.noise_dim,):
        raise ContractError(f"noise has trailing dim {u.shape[-1:]}, expected {model.noise_dim}")
    if theta is None:
        theta = model.theta
    return model.transition_fn(x, u, theta)


@dataclass(frozen=True)
class Trajectory:
    """A latent path ``x_{0:T}`` stored as a ``(T+1, state_dim)`` array."""

    states: np.ndarray

    def __post_init__(self):
        s = np.array(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 1:
            raise ContractError("trajectory must be a (T+1, d) array")
        if not np.all(np.isfinite(s)):
            raise ContractError("trajectory has non-finite entries")
        s.flags.writeable = False
        object.__setattr__(self, "states", s)

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    def __len__(self):
        return self.states.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.states.shape == other.states.shape and bool(np.array_equal(self.states, other.states))

    def __hash__(self):
        return hash(self.states.tobytes())


@dataclass(frozen=True)
class ObservationRecord:
    """Observations ``y_1..y_T``; missing entries are NaN rows.

    ``values[t - 1]`` holds ``y_t``.
    """

    values: np.ndarray
    horizon: int = field(init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ContractError("observation values must be (T, obs_dim)")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "horizon", v.shape[0])

    @classmethod
    def from_pairs(cls, pairs: Sequence, horizon: int, obs_dim: int = 1) -> "ObservationRecord":
        """Build from ``(t, y_t)`` pairs with strictly increasing ``t`` in ``1..horizon``."""
        values = np.full((horizon, obs_dim), np.nan)
        last = 0
        for t, y in pairs:
            t = int(t)
            if t <= last or t > horizon:
                raise ContractError("time indices must be strictly increasing within 1..T")
            last = t
            if y is not None:
                values[t - 1] = np.asarray(y, dtype=float).reshape(obs_dim)
        return cls(values)

    @property
    def obs_dim(self) -> int:
        return self.values.shape[1]

    def present(self, t: int) -> bool:
        return not np.any(np.isnan(self.values[t - 1]))

    def __getitem__(self, t: int) -> Optional[np.ndarray]:
        """``y_t`` for ``t`` in ``1..T``, or None when missing."""
        if not 1 <= t <= self.horizon:
            raise ContractError(f"time index {t} outside 1..{self.horizon}")
        y = self.values[t - 1]
        return None if np.any(np.isnan(y)) else y

    def pairs(self):
        return [(t, self[t]) for t in range(1, self.horizon + 1)]

    def __eq__(self, other):
        if not isinstance(other, ObservationRecord):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


class NoiseTable:
    """Standard normal noise ``u_t^j`` for ``t in 0..T`` and slots ``j in 1..n_slots``.

    The whole table is one draw from a Philox stream keyed by
    ``(seed, replicate, role, sweep)``, so entry ``(t, j)`` depends only on
    the key and the table shape.
    """

    __slots__ = ("seed", "replicate", "role", "sweep", "values")

    def __init__(self, seed: int, replicate: int, sweep: int, horizon: int, n_slots: int,
                 noise_dim: int, role: int = ROLE_SWEEP):
        if horizon < 0 or n_slots < 1 or noise_dim < 1:
            raise ContractError("noise table needs horizon >= 0 and positive slots/dim")
        self.seed = seed
        self.replicate = replicate
        self.role = role
        self.sweep = sweep
        rng = keyed_generator(seed, replicate, role, sweep, NOISE)
        values = rng.standard_normal((horizon + 1, n_slots, noise_dim))
        values.flags.writeable = False
        self.values = values

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_slots(self) -> int:
        return self.values.shape[1]

    def resampling_rng(self) -> np.random.Generator:
        """Companion stream for resampling draws of the same sweep."""
        return keyed_generator(self.seed, self.replicate, self.role, self.sweep, RESAMPLE)


def noise_at(table: NoiseTable, t: int, j: int) -> np.ndarray:
    """Noise vector for time ``t`` and (1-based) particle slot ``j``."""
    if not 0 <= t <= table.horizon:
        raise ContractError(f"time {t} outside 0..{table.horizon}")
    if not 1 <= j <= table.n_slots:
        raise ContractError(f"slot {j} outside 1..{table.n_slots}")
    return table.values[t, j - 1]
