"""Weight normalisation, multinomial resampling and maximal couplings.

Indices returned here are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .ssm import ContractError, DegenerateWeightsError


@dataclass(frozen=True)
class WeightVector:
    log_weights: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_log(cls, log_weights) -> "WeightVector":
        lw = np.asarray(log_weights, dtype=float)
        return cls(lw, normalize_log_weights(lw))

    def __len__(self):
        return self.normalized.shape[0]


@dataclass(frozen=True)
class AncestorPair:
    a: int
    a_tilde: int


def normalize_log_weights(log_weights: np.ndarray) -> np.ndarray:
    """Normalised weights from log-weights via log-sum-exp.

    Raises DegenerateWeightsError if every weight is zero or any is NaN.
    """
    lw = np.asarray(log_weights, dtype=float)
    top = lw.max()
    if not np.isfinite(top):
        # top == -inf: all zero; +inf or nan: unusable
        raise DegenerateWeightsError("all weights are zero" if top == -np.inf else "non-finite weights")
    w = np.exp(lw - top)
    total = w.sum()
    if not np.isfinite(total):
        raise DegenerateWeightsError("non-finite weights")
    return w / total


def _as_probs(w) -> np.ndarray:
    if isinstance(w, WeightVector):
        return w.normalized
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ContractError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ContractError("weights must be finite and nonnegative")
    return w


def _inverse_cdf(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    out = np.empty(uniforms.shape[0], dtype=np.intp)
    if not _k.inverse_cdf(probs, uniforms, out) > 0:
        raise DegenerateWeightsError()
    return out


def multinomial_ancestors(w, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` i.i.d. indices with ``P(a = j) = w[j]`` by inverse-CDF search.

    A uniform falling exactly on a CDF boundary goes to the upper index, so
    zero-weight indices are never returned.
    """
    if count < 1:
        raise ContractError("count must be >= 1")
    return _inverse_cdf(_as_probs(w), rng.random(count))


def coupled_from_uniforms(p: np.ndarray, q: np.ndarray, u: np.ndarray):
    """Maximal-coupling index pairs driven by uniforms ``u`` of shape ``(3, count)``."""
    if p.shape != q.shape:
        raise ContractError(f"weight vectors differ in length: {p.shape[0]} vs {q.shape[0]}")
    count = u.shape[1]
    a = np.empty(count, dtype=np.intp)
    b = np.empty(count, dtype=np.intp)
    if _k.coupled_indices(p, q, u[0], u[1], u[2], a, b):
        raise DegenerateWeightsError()
    return a, b


def coupled_multinomial(w, w_tilde, count: int, rng: np.random.Generator):
    """``count`` independent pairs from the maximal coupling of ``w`` and ``w_tilde``.

    With probability ``sum(min(w, w_tilde))`` a common index is drawn from
    the overlap, otherwise the two indices are drawn independently from the
    normalised residuals. Returns two integer arrays ``(a, a_tilde)``.
    Identical weight vectors always give ``a == a_tilde``.
    """
    if count < 1:
        raise ContractError("count must be >= 1")
    return coupled_from_uniforms(_as_probs(w), _as_probs(w_tilde), rng.random((3, count)))


def maximal_coupling_pair(w, w_tilde, rng: np.random.Generator) -> AncestorPair:
    a, a_tilde = coupled_multinomial(w, w_tilde, 1, rng)
    return AncestorPair(int(a[0]), int(a_tilde[0]))


def overlap_probability(w, w_tilde) -> float:
    """``sum_j min(w_j, w_tilde_j)``, the meeting probability of the maximal coupling."""
    return float(np.minimum(_as_probs(w), _as_probs(w_tilde)).sum())
