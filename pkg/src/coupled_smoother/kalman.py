"""Exact filtering and Rauch-Tung-Striebel smoothing for linear Gaussian models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ssm import ContractError, ObservationRecord


@dataclass(frozen=True)
class LinearGaussianSpec:
    """``x_t = A x_{t-1} + N(0, Q)``, ``y_t = C x_t + N(0, R)``, ``x_0 ~ N(m0, P0)``.

    Missing observations are taken from the NaN rows of the
    ObservationRecord passed to the filter.
    """

    A: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    R: np.ndarray
    m0: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        for name in ("A", "Q", "C", "R", "P0"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "m0", np.atleast_1d(np.asarray(self.m0, dtype=float)))
        dx = self.m0.shape[0]
        dy = self.C.shape[0]
        if (self.A.shape != (dx, dx) or self.Q.shape != (dx, dx) or self.P0.shape != (dx, dx)
                or self.C.shape != (dy, dx) or self.R.shape != (dy, dy)):
            raise ContractError("inconsistent linear Gaussian dimensions")
        for name in ("Q", "R", "P0"):
            M = getattr(self, name)
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() < -1e-12:
                raise ContractError(f"{name} must be symmetric positive semidefinite")

    @property
    def state_dim(self) -> int:
        return self.m0.shape[0]


def _sym(P):
    return 0.5 * (P + P.T)


def kalman_filter(spec: LinearGaussianSpec, obs: ObservationRecord):
    """Filtering moments for ``t = 0..T``.

    Returns ``(means, covs, pred_means, pred_covs)`` with shapes
    ``(T+1, d)`` and ``(T+1, d, d)``; the predicted moments at ``t = 0`` are
    the prior.
    """
    if obs.obs_dim != spec.C.shape[0]:
        raise ContractError("observation dimension does not match C")
    T = obs.horizon
    d = spec.state_dim
    means = np.empty((T + 1, d))
    covs = np.empty((T + 1, d, d))
    pmeans = np.empty((T + 1, d))
    pcovs = np.empty((T + 1, d, d))
    m, P = spec.m0.copy(), spec.P0.copy()
    eye = np.eye(d)
    for t in range(T + 1):
        if t > 0:
            m = spec.A @ m
            P = _sym(spec.A @ P @ spec.A.T + spec.Q)
        pmeans[t], pcovs[t] = m, P
        y = obs[t] if t > 0 else None
        if y is not None:
            S = _sym(spec.C @ P @ spec.C.T + spec.R)
            try:
                K = np.linalg.solve(S, spec.C @ P).T
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError(f"singular innovation covariance at t={t}") from exc
            m = m + K @ (y - spec.C @ m)
            ImKC = eye - K @ spec.C
            # Joseph form
            P = _sym(ImKC @ P @ ImKC.T + K @ spec.R @ K.T)
        means[t], covs[t] = m, P
    return means, covs, pmeans, pcovs


def rts_smoother(spec: LinearGaussianSpec, obs: ObservationRecord):
    """Smoothing moments of ``p(x_t | y_{1:T})``; returns ``(means, covs)``."""
    fm, fP, pm, pP = kalman_filter(spec, obs)
    T = obs.horizon
    sm = fm.copy()
    sP = fP.copy()
    for t in range(T - 1, -1, -1):
        G = np.linalg.solve(pP[t + 1], spec.A @ fP[t]).T
        sm[t] = fm[t] + G @ (sm[t + 1] - pm[t + 1])
        sP[t] = _sym(fP[t] + G @ (sP[t + 1] - pP[t + 1]) @ G.T)
    return sm, sP
