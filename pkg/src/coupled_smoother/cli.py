"""Command-line harness: ``coupled-smoother --config run.json [--pilot] ...``.

Exit status: 0 on success, 2 on configuration or data errors, 3 when more
than 10% of replicates failed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import models
from .baselines import propagation_units, run_baseline_replicates
from .cpf import AUXILIARY, BOOTSTRAP, CpfOptions
from .estimator import (FAILURE_WARNING_FRACTION, EstimatorConfig, UnbiasedReport,
                        default_max_sweeps, derived_seed, meeting_time_survey, replicate_csv,
                        run_replicates, summarize, summary_json)
from .functionals import from_name
from .kalman import rts_smoother
from .ssm import ConfigurationError, ContractError

log = logging.getLogger("coupled_smoother")

EXPERIMENTS = ("ar1", "unlikely", "lotka_volterra", "custom-csv-data")
ESTIMATORS = ("unbiased", "pf", "fixed_lag", "meeting_survey")
EXIT_OK, EXIT_CONFIG, EXIT_FAILURES = 0, 2, 3
PILOT_TAG = 1


@dataclass
class RunConfig:
    experiment: str
    model_params: dict = field(default_factory=dict)
    family: Optional[str] = None  # model family for custom-csv-data
    data_path: Optional[str] = None
    T: Optional[int] = None
    data_seed: int = 1
    N: int = 128
    k: Union[int, str] = "auto"
    m: Union[int, str] = "auto"
    k_rule: str = "quantile"  # "quantile" (90%) or "mean"
    m_multiple: int = 2
    pilot_R: Optional[int] = None
    R: int = 100
    alpha: float = 0.05
    ancestor_sampling: bool = False
    proposal: str = BOOTSTRAP
    estimator: str = "unbiased"
    lag: int = 10
    h: str = "identity"
    max_sweeps: Optional[int] = None
    master_seed: int = 0
    workers: Optional[int] = None
    output_dir: str = "out"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        if "experiment" not in doc:
            raise ConfigurationError("config needs 'experiment'")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}")
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(f"estimator must be one of {ESTIMATORS}")
        if self.proposal not in (BOOTSTRAP, AUXILIARY):
            raise ConfigurationError("proposal must be 'bootstrap' or 'auxiliary'")
        if self.experiment == "custom-csv-data":
            if self.family not in ("ar1", "lotka_volterra"):
                raise ConfigurationError("custom-csv-data needs family 'ar1' or 'lotka_volterra'")
            if not self.data_path:
                raise ConfigurationError("custom-csv-data needs data_path")
        for name in ("k", "m"):
            v = getattr(self, name)
            if v != "auto" and not (isinstance(v, int) and v >= 0):
                raise ConfigurationError(f"{name} must be a nonnegative integer or 'auto'")
        if "auto" in (self.k, self.m) and not self.pilot_R:
            raise ConfigurationError("k/m 'auto' requires pilot_R")
        if self.k_rule not in ("quantile", "mean"):
            raise ConfigurationError("k_rule must be 'quantile' or 'mean'")
        if self.R < 1 or self.N < 2:
            raise ConfigurationError("need R >= 1 and N >= 2")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        from_name(self.h)


def build_problem(cfg: RunConfig):
    """Model, observations and (for linear Gaussian models) exact smoothing means."""
    kind = cfg.family if cfg.experiment == "custom-csv-data" else cfg.experiment
    params = dict(cfg.model_params)
    try:
        if kind in ("ar1", "unlikely"):
            p = models.Ar1Params(**params) if params or kind == "ar1" else models.UNLIKELY_PARAMS
        else:
            p = models.LotkaVolterraParams(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad model_params: {exc}") from exc
    if cfg.experiment == "unlikely":
        model, obs = models.make_unlikely(p, cfg.T or 10)
    else:
        model = models.make_ar1(p) if kind == "ar1" else models.make_lotka_volterra(p)
        if cfg.experiment == "custom-csv-data":
            obs = models.read_observations_csv(cfg.data_path)
        else:
            if not cfg.T:
                raise ConfigurationError("generated data needs T")
            _, obs = models.generate_data(model, cfg.T, cfg.data_seed)
    exact = None
    if kind in ("ar1", "unlikely") and cfg.h == "identity":
        exact = rts_smoother(p.linear_gaussian(), obs)[0][:, 0]
    return model, obs, exact


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def _survey_csv(survey) -> str:
    lines = ["replicate_id,tau,censored"]
    lines += [f"{i},{int(t)},{int(c)}" for i, (t, c) in enumerate(zip(survey.taus, survey.censored))]
    return "\n".join(lines) + "\n"


def _means_csv(summary, exact, features: int) -> str:
    """Tidy per-coordinate table: coordinate, t, feature, mean, sd, ci_low, ci_high[, exact]."""
    head = ["coordinate", "t", "feature", "mean", "sd", "ci_low", "ci_high"]
    if exact is not None:
        head.append("exact")
    rows = [",".join(head)]
    for i, mu in enumerate(summary.mean):
        cells = [str(i), str(i // features), str(i % features), repr(float(mu))]
        for arr in (summary.sd, summary.ci_low, summary.ci_high):
            cells.append("" if arr is None else repr(float(arr[i])))
        if exact is not None:
            cells.append(repr(float(exact[i])))
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def _print_summary(summary, features: int) -> None:
    for i, mu in enumerate(summary.mean):
        t, f = divmod(i, features)
        if summary.ci_low is None:
            print(f"h[t={t},f={f}] mean={mu:.6g}")
        else:
            print(f"h[t={t},f={f}] mean={mu:.6g} ci=[{summary.ci_low[i]:.6g}, {summary.ci_high[i]:.6g}]")


def run(cfg: RunConfig, out: Path, pilot_only: bool = False) -> int:
    model, obs, exact = build_problem(cfg)
    out.mkdir(parents=True, exist_ok=True)
    models.write_observations_csv(out / "observations.csv", obs)
    h = from_name(cfg.h)
    features = h.features(model.state_dim)
    workers = cfg.workers or 1
    opts = CpfOptions(cfg.N, cfg.ancestor_sampling, cfg.proposal)
    opts.check(model)
    resolved = dataclasses.asdict(cfg)
    resolved["output_dir"], resolved["workers"] = str(out), workers

    k, m = cfg.k, cfg.m
    survey = None
    need_pilot = pilot_only or cfg.estimator == "meeting_survey" or (
        cfg.estimator == "unbiased" and "auto" in (k, m))
    if need_pilot:
        R_pilot = cfg.pilot_R or cfg.R
        seed = cfg.master_seed if cfg.estimator == "meeting_survey" else derived_seed(cfg.master_seed, PILOT_TAG)
        pilot_cfg = EstimatorConfig(0, 0, opts, cfg.max_sweeps, h)
        survey = meeting_time_survey(model, obs, pilot_cfg, R_pilot, seed, workers)
        _write(out / "tau_samples.csv", _survey_csv(survey))
        info = survey.summary()
        qk, qm = survey.suggest_k_m(0.9, cfg.m_multiple)
        info["suggested_k"], info["suggested_m"] = qk, qm
        _write(out / "meeting_summary.json", json.dumps(info, indent=2, sort_keys=True))
        qs = ", ".join(f"q{float(q) * 100:g}={v:g}" for q, v in info["quantiles"].items())
        print(f"meeting times: R={info['R']} mean={info['mean']:.4g} sd={info['sd']:.4g} "
              f"censored={info['censored']} {qs}")
        print(f"suggested k={qk} m={qm}")
        if pilot_only or cfg.estimator == "meeting_survey":
            return EXIT_OK
        if cfg.k_rule == "mean":
            auto_k = max(0, int(round(survey.mean)))
            auto_m = auto_k if cfg.m_multiple == 1 else cfg.m_multiple * auto_k
        else:
            auto_k, auto_m = qk, qm
        if k == "auto":
            k = auto_k
        if m == "auto":
            m = auto_m if cfg.k == "auto" else cfg.m_multiple * k
        m = max(m, k)
        resolved["k"], resolved["m"] = k, m

    if cfg.estimator == "unbiased":
        cap = cfg.max_sweeps
        if cap is None and survey is not None:
            cap = default_max_sweeps(m, float(np.median(survey.taus)))
        resolved["max_sweeps"] = cap if cap is not None else default_max_sweeps(m)
        est = EstimatorConfig(k, m, opts, resolved["max_sweeps"], h)
        result = run_replicates(model, obs, est, cfg.R, cfg.master_seed, workers, cfg.alpha)
        reports = result.reports
        dim = h.dim(obs.horizon, model.state_dim)
        _write(out / "replicates.csv", replicate_csv(reports, dim))
        summary = result.summary
        n_failed = sum(r.failed for r in reports)
        extra = {"estimator": "unbiased", "mean_tau": float(np.mean(result.taus)) if len(result.taus) else None}
    else:
        kind = cfg.estimator
        rows = run_baseline_replicates(model, obs, kind, cfg.N, cfg.R, cfg.master_seed, h, cfg.lag, workers)
        unit = float(propagation_units(cfg.N, obs.horizon))
        reports = [UnbiasedReport(rid, val, val, None, unit if val is not None else math.nan, 1,
                                  failed=val is None, reason=why) for rid, val, why in rows]
        dim = h.dim(obs.horizon, model.state_dim)
        _write(out / "replicates.csv", replicate_csv(reports, dim, estimator=kind))
        ok = [r for r in reports if not r.failed]
        n_failed = len(reports) - len(ok)
        summary = summarize(np.array([r.value for r in ok]), np.array([r.cost_units for r in ok]),
                            cfg.alpha, n_failed) if ok else None
        extra = {"estimator": kind}

    _write(out / "summary.json", summary_json(summary, resolved, extra))
    if summary is not None:
        _write(out / "smoothing_means.csv", _means_csv(summary, exact, features))
        _print_summary(summary, features)
    if n_failed > FAILURE_WARNING_FRACTION * cfg.R:
        print(f"warning: {n_failed} of {cfg.R} replicates failed", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def parse_args(argv=None):
    ap = argparse.ArgumentParser(prog="coupled-smoother", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="override master_seed")
    ap.add_argument("--output", help="output directory (overrides output_dir)")
    ap.add_argument("--workers", type=int, help="worker processes (default $COUPLED_SMOOTHER_WORKERS or 1)")
    ap.add_argument("--estimator", choices=ESTIMATORS, help="override estimator")
    ap.add_argument("--pilot", action="store_true", help="run the meeting-time survey only")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = json.loads(Path(args.config).read_text())
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object")
        if args.seed is not None:
            doc["master_seed"] = args.seed
        if args.estimator:
            doc["estimator"] = args.estimator
        if args.workers is not None:
            doc["workers"] = args.workers
        elif "workers" not in doc and os.environ.get("COUPLED_SMOOTHER_WORKERS"):
            doc["workers"] = int(os.environ["COUPLED_SMOOTHER_WORKERS"])
        if args.pilot and not doc.get("pilot_R"):
            doc.setdefault("pilot_R", doc.get("R", 100))
        cfg = RunConfig.from_dict(doc)
        out = Path(args.output or cfg.output_dir)
        return run(cfg, out, pilot_only=args.pilot)
    except (OSError, ValueError, ConfigurationError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
