"""Test functions ``h`` acting on trajectories.

Built-ins are per-time feature maps: ``h(x_{0:T})`` is the concatenation
over ``t`` of ``phi(x_t)``, ordered time-major. That structure is what
fixed-lag smoothing needs (each coordinate depends on a single ``x_t``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ssm import ConfigurationError


def _identity(x):
    return x


@dataclass(frozen=True)
class TestFunction:
    name: str
    per_time: Callable = _identity
    width: Optional[int] = None  # features per time step; None = state_dim

    __test__ = False  # not a pytest class

    def features(self, state_dim: int) -> int:
        return state_dim if self.width is None else self.width

    def dim(self, horizon: int, state_dim: int) -> int:
        return (horizon + 1) * self.features(state_dim)

    def __call__(self, paths: np.ndarray) -> np.ndarray:
        """Evaluate on ``(..., T+1, d)`` paths, returning ``(..., (T+1) * q)``."""
        f = self.per_time(paths)
        return f.reshape(f.shape[:-2] + (-1,))

    def weighted_mean(self, paths: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """``sum_k w^k h(path_k)`` for paths ``(..., N, T+1, d)`` and weights ``(..., N)``."""
        return np.einsum("...n,...nk->...k", weights, self(paths))


class _Component:
    def __init__(self, index: int):
        self.index = index

    def __call__(self, x):
        return x[..., self.index:self.index + 1]

    def __reduce__(self):
        return (_Component, (self.index,))


IDENTITY = TestFunction("identity")


def component(index: int) -> TestFunction:
    """``h(x_{0:T}) = (x_0[i], ..., x_T[i])``."""
    if index < 0:
        raise ConfigurationError("component index must be >= 0")
    return TestFunction(f"component:{index}", _Component(index), 1)


def from_name(name: str) -> TestFunction:
    """Resolve a registered id: ``identity`` or ``component:<i>``."""
    if name == "identity":
        return IDENTITY
    if name.startswith("component:"):
        try:
            return component(int(name.split(":", 1)[1]))
        except ValueError:
            pass
    raise ConfigurationError(f"unknown test function {name!r}")
