"""Unbiased smoothing from coupled conditional particle filter chains.

``run_coupled_chains`` produces one replicate of the time-averaged
estimator ``H_{k:m}``; ``run_replicates`` farms out independent replicates
and folds them into a CLT summary. Every random draw of replicate ``r`` is
keyed by ``(master_seed, r, ...)`` so results do not depend on the worker
count or scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import List, Optional, Sequence

import numpy as np

from .cpf import CpfOptions, ccpf_sweep, cpf_sweep, pf_init
from .functionals import IDENTITY, TestFunction
from .ssm import (ROLE_INIT_X, ROLE_INIT_XTILDE, ROLE_SWEEP, ConfigurationError, ContractError,
                  ModelSpec, NoiseTable, ObservationRecord, PropagationError)

log = logging.getLogger(__name__)

FAILURE_WARNING_FRACTION = 0.10


@dataclass(frozen=True)
class EstimatorConfig:
    k: int
    m: int
    options: CpfOptions
    max_sweeps: Optional[int] = None
    h: TestFunction = IDENTITY

    def __post_init__(self):
        if not 0 <= self.k <= self.m:
            raise ConfigurationError(f"need 0 <= k <= m, got k={self.k}, m={self.m}")
        if self.max_sweeps is not None and self.max_sweeps <= self.m:
            raise ConfigurationError("max_sweeps must exceed m")

    @property
    def n_particles(self) -> int:
        return self.options.n_particles

    @property
    def sweep_cap(self) -> int:
        if self.max_sweeps is not None:
            return self.max_sweeps
        return default_max_sweeps(self.m)


def default_max_sweeps(m: int, pilot_median: Optional[float] = None) -> int:
    """``100 * max(m, median tau)``; without a pilot the median defaults to 10."""
    med = 10 if pilot_median is None else max(1, math.ceil(pilot_median))
    return 100 * max(m, med)


@dataclass
class UnbiasedReport:
    replicate_id: int
    value: Optional[np.ndarray]  # Rao-Blackwellised H_{k:m}
    value_plain: Optional[np.ndarray]  # same estimator from the selected trajectories
    tau: Optional[int]
    cost_units: float
    sweep_count: int
    failed: bool = False
    reason: str = ""
    censored: bool = False


def cost_units(tau: int, m: int, N: int) -> float:
    """``N * (3 + 2 (tau - 1) + max(0, m - tau))`` particle propagations."""
    if tau < 1:
        raise ContractError("tau must be >= 1")
    return float(N * (3 + 2 * (tau - 1) + max(0, m - tau)))


def combine_h_km(h_x: Sequence, h_xtilde: Sequence, k: int, m: int, tau: int) -> np.ndarray:
    """Time-averaged estimator from the h-histories of the two chains.

    ``h_x[n]`` is ``h(X^(n))`` for ``n = 0..max(m, tau - 1)`` and
    ``h_xtilde[n]`` is ``h(X~^(n))`` for ``n = 0..tau - 2``.
    """
    if not 0 <= k <= m or tau < 1:
        raise ContractError("need 0 <= k <= m and tau >= 1")
    hx = np.asarray(h_x, dtype=float)
    hxt = np.asarray(h_xtilde, dtype=float)
    if hx.shape[0] <= max(m, tau - 1):
        raise ContractError(f"h_x needs {max(m, tau - 1) + 1} entries, has {hx.shape[0]}")
    if tau >= 2 and hxt.shape[0] <= tau - 2:
        raise ContractError(f"h_xtilde needs {tau - 1} entries, has {hxt.shape[0]}")
    span = m - k + 1
    value = hx[k:m + 1].sum(axis=0) / span
    if tau - 1 >= k + 1:
        n = np.arange(k + 1, tau)
        coef = np.minimum(span, n - k) / span
        diff = hx[k + 1:tau] - hxt[k:tau - 1]
        value = value + np.tensordot(coef, diff, axes=1)
    return value


def _table(seed, replicate, role, sweep, T, slots, model):
    return NoiseTable(seed, replicate, sweep, T, slots, model.noise_dim, role=role)


def run_coupled_chains(model: ModelSpec, obs: ObservationRecord, config: EstimatorConfig,
                       seed: int, replicate_id: int = 0, accumulate: bool = True) -> UnbiasedReport:
    """One replicate of ``H_{k:m}``.

    Chains start from independent particle-filter draws; the loop runs
    while ``n < max(m, tau)`` with ``tau`` the first ``n`` such that
    ``X^(n) == X~^(n-1)``. After meeting only one CPF chain is advanced.
    With ``accumulate=False`` the run stops at ``tau`` and no estimator is
    formed (meeting-time surveys).
    """
    opts = config.options
    opts.check(model)
    N = opts.n_particles
    T = obs.horizon
    h = config.h
    m = config.m if accumulate else 0
    cap = config.sweep_cap
    hx: List[np.ndarray] = []
    hxt: List[np.ndarray] = []
    px: List[np.ndarray] = []
    pxt: List[np.ndarray] = []
    n = 0
    try:
        nt = _table(seed, replicate_id, ROLE_INIT_X, 0, T, N, model)
        x, rb = pf_init(model, obs, N, nt, nt.resampling_rng(), h)
        hx.append(rb.value)
        px.append(h(x.states))
        nt = _table(seed, replicate_id, ROLE_INIT_XTILDE, 0, T, N, model)
        xt, rbt = pf_init(model, obs, N, nt, nt.resampling_rng(), h)
        hxt.append(rbt.value)
        pxt.append(h(xt.states))

        nt = _table(seed, replicate_id, ROLE_SWEEP, 1, T, N - 1, model)
        x, rb = cpf_sweep(x, model, obs, opts, nt, nt.resampling_rng(), h)
        hx.append(rb.value)
        px.append(h(x.states))
        n = 1
        tau = 1 if x == xt else None
        while tau is None or n < max(m, tau):
            if tau is None and n >= cap:
                return UnbiasedReport(replicate_id, None, None, cap, math.nan, n, failed=True,
                                      reason="cap", censored=True)
            nt = _table(seed, replicate_id, ROLE_SWEEP, n + 1, T, N - 1, model)
            rng = nt.resampling_rng()
            if tau is None:
                x, xt, (rb, rbt), met = ccpf_sweep((x, xt), model, obs, opts, nt, rng, h)
                hx.append(rb.value)
                hxt.append(rbt.value)
                px.append(h(x.states))
                pxt.append(h(xt.states))
                if met:
                    tau = n + 1
            else:
                x, rb = cpf_sweep(x, model, obs, opts, nt, rng, h)
                hx.append(rb.value)
                px.append(h(x.states))
            n += 1
    except (ArithmeticError, PropagationError) as exc:
        return UnbiasedReport(replicate_id, None, None, None, math.nan, n, failed=True,
                              reason=f"{type(exc).__name__}: {exc}")
    if not accumulate:
        return UnbiasedReport(replicate_id, None, None, tau, cost_units(tau, 0, N), n)
    value = combine_h_km(hx, hxt, config.k, config.m, tau)
    plain = combine_h_km(px, pxt, config.k, config.m, tau)
    if not (np.all(np.isfinite(value)) and np.all(np.isfinite(plain))):
        return UnbiasedReport(replicate_id, None, None, tau, math.nan, n, failed=True,
                              reason="non-finite estimate")
    return UnbiasedReport(replicate_id, value, plain, tau, cost_units(tau, config.m, N), n)


# --- replicate orchestration -------------------------------------------------------

def derived_seed(seed: int, *tags: int) -> int:
    """Independent seed for an auxiliary run (e.g. a pilot) of the same experiment."""
    return int(np.random.SeedSequence([int(seed), *map(int, tags)]).generate_state(1, np.uint64)[0])


def normal_quantile(p: float) -> float:
    return statistics.NormalDist().inv_cdf(p)


@dataclass
class ReplicateSummary:
    R: int
    n_failed: int
    mean: np.ndarray
    sd: Optional[np.ndarray]
    ci_low: Optional[np.ndarray]
    ci_high: Optional[np.ndarray]
    alpha: float
    mean_cost: float
    inefficiency: Optional[np.ndarray]
    status: str = "ok"

    def to_dict(self) -> dict:
        def lst(a):
            return None if a is None else [float(v) for v in np.atleast_1d(a)]
        return {
            "R": self.R, "n_failed": self.n_failed, "alpha": self.alpha, "status": self.status,
            "mean": lst(self.mean), "sd": lst(self.sd), "ci_low": lst(self.ci_low),
            "ci_high": lst(self.ci_high), "mean_cost": self.mean_cost,
            "inefficiency": lst(self.inefficiency),
        }


def summarize(values: np.ndarray, costs: Optional[np.ndarray] = None, alpha: float = 0.05,
              n_failed: int = 0) -> ReplicateSummary:
    """CLT summary of i.i.d. replicate values of shape ``(R, K)``.

    The interval is ``[mean + z_{alpha/2} sd / sqrt(R), mean + z_{1-alpha/2} sd / sqrt(R)]``.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    R = values.shape[0]
    if R < 1:
        raise ContractError("no successful replicates to summarise")
    mean = values.mean(axis=0)
    mean_cost = float(np.mean(costs)) if costs is not None and len(costs) else math.nan
    total = R + n_failed
    status = "warning" if total and n_failed > FAILURE_WARNING_FRACTION * total else "ok"
    if R < 2:
        return ReplicateSummary(R, n_failed, mean, None, None, None, alpha, mean_cost, None, status)
    sd = values.std(axis=0, ddof=1)
    half = sd / math.sqrt(R)
    lo = mean + normal_quantile(alpha / 2) * half
    hi = mean + normal_quantile(1 - alpha / 2) * half
    return ReplicateSummary(R, n_failed, mean, sd, lo, hi, alpha, mean_cost, mean_cost * sd ** 2,
                            status)


@dataclass
class ReplicateRun:
    summary: Optional[ReplicateSummary]
    reports: List[UnbiasedReport] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.reports if not r.failed])

    @property
    def plain_values(self) -> np.ndarray:
        return np.array([r.value_plain for r in self.reports if not r.failed])

    @property
    def taus(self) -> np.ndarray:
        return np.array([r.tau for r in self.reports if r.tau is not None])


def _replicate_task(model, obs, config, seed, accumulate, rid):
    return run_coupled_chains(model, obs, config, seed, rid, accumulate)


def map_replicates(fn, ids: Sequence[int], workers: int = 1):
    """Apply ``fn`` to replicate ids, in a process pool when ``workers > 1``.

    Output order always follows ``ids``.
    """
    ids = list(ids)
    if workers <= 1 or len(ids) <= 1:
        return [fn(i) for i in ids]
    chunk = max(1, len(ids) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, ids, chunksize=chunk))


def run_replicates(model: ModelSpec, obs: ObservationRecord, config: EstimatorConfig, R: int,
                   master_seed: int, workers: int = 1, alpha: float = 0.05,
                   rao_blackwell: bool = True) -> ReplicateRun:
    """R independent replicates of ``H_{k:m}`` plus their summary.

    Failed replicates are excluded from the summary and counted; more than
    10% failures sets ``status = "warning"``.
    """
    if R < 1:
        raise ConfigurationError("R must be >= 1")
    task = partial(_replicate_task, model, obs, config, master_seed, True)
    reports = map_replicates(task, range(R), workers)
    ok = [r for r in reports if not r.failed]
    n_failed = len(reports) - len(ok)
    if n_failed:
        log.warning("%d of %d replicates failed", n_failed, R)
    if not ok:
        return ReplicateRun(None, reports)
    vals = np.array([r.value if rao_blackwell else r.value_plain for r in ok])
    costs = np.array([r.cost_units for r in ok])
    return ReplicateRun(summarize(vals, costs, alpha, n_failed), reports)


@dataclass
class MeetingSurvey:
    taus: np.ndarray
    censored: np.ndarray
    n_failed: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.taus))

    @property
    def sd(self) -> float:
        return float(np.std(self.taus, ddof=1)) if len(self.taus) > 1 else math.nan

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.taus, q))

    def summary(self) -> dict:
        qs = (0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)
        return {
            "R": int(len(self.taus)), "mean": self.mean, "sd": self.sd,
            "censored": int(self.censored.sum()), "failed": self.n_failed,
            "quantiles": {str(q): self.quantile(q) for q in qs},
        }

    def suggest_k_m(self, quantile: float = 0.9, multiple: int = 2):
        """``k`` = ceiling of the given tau quantile, ``m = multiple * k``."""
        k = int(math.ceil(self.quantile(quantile)))
        return k, multiple * k


def meeting_time_survey(model: ModelSpec, obs: ObservationRecord, config: EstimatorConfig, R: int,
                        seed: int, workers: int = 1) -> MeetingSurvey:
    """Sample ``R`` meeting times, running the coupled chains only up to ``tau``.

    Runs hitting ``config.sweep_cap`` are recorded as censored at the cap.
    """
    task = partial(_replicate_task, model, obs, config, seed, False)
    reports = map_replicates(task, range(R), workers)
    taus = [r.tau for r in reports if r.tau is not None]
    cens = [r.censored for r in reports if r.tau is not None]
    n_failed = sum(1 for r in reports if r.tau is None)
    return MeetingSurvey(np.array(taus, dtype=int), np.array(cens, dtype=bool), n_failed)


# --- output formats ----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def replicate_csv(reports: Sequence[UnbiasedReport], dim: int, estimator: Optional[str] = None,
                  rao_blackwell: bool = True) -> str:
    """Per-replicate rows: ``[estimator,] replicate_id, tau, cost_units, failed, h_0..``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    head = ["replicate_id", "tau", "cost_units", "failed"] + [f"h_{i}" for i in range(dim)]
    writer.writerow((["estimator"] if estimator else []) + head)
    for r in reports:
        val = r.value if rao_blackwell else r.value_plain
        cells = [_fmt(r.replicate_id), _fmt(r.tau), _fmt(r.cost_units), _fmt(r.failed)]
        cells += [""] * dim if val is None else [_fmt(v) for v in val]
        writer.writerow(([estimator] if estimator else []) + cells)
    return buf.getvalue()


def summary_json(summary: Optional[ReplicateSummary], config_echo: dict, extra: Optional[dict] = None) -> str:
    doc = {"config": config_echo}
    if summary is not None:
        doc.update(summary.to_dict())
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)
