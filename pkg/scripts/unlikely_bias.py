"""Particle-filter bias versus the unbiased estimator on the model observed
only at the final time.

For each N the PF trajectory estimate of E[x_9 | y_10] is replicated and its
mean compared with the exact value; the unbiased estimator uses k = m chosen
from a pilot meeting-time survey.
"""
import argparse

import numpy as np

from coupled_smoother.baselines import run_baseline_replicates
from coupled_smoother.cpf import CpfOptions
from coupled_smoother.estimator import EstimatorConfig, meeting_time_survey, run_replicates
from coupled_smoother.kalman import rts_smoother
from coupled_smoother.models import UNLIKELY_PARAMS, make_unlikely


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[128, 256, 512, 1024])
    ap.add_argument("--R", type=int, default=1000)
    ap.add_argument("--unbiased-N", type=int, default=128)
    ap.add_argument("--pilot-R", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    model, obs = make_unlikely()
    truth = rts_smoother(UNLIKELY_PARAMS.linear_gaussian(), obs)[0][9, 0]
    print(f"exact E[x_9 | y_10] = {truth:.6f}")
    for n in args.N:
        rows = run_baseline_replicates(model, obs, "pf", n, args.R, args.seed, workers=args.workers)
        est = np.array([v[9] for _, v, _ in rows if v is not None])
        se = est.std(ddof=1) / np.sqrt(est.size)
        print(f"PF N={n:5d}: mean {est.mean():.5f} +- {1.96 * se:.5f}  bias/se {(est.mean() - truth) / se:6.1f}")

    opts = CpfOptions(args.unbiased_N)
    pilot = meeting_time_survey(model, obs, EstimatorConfig(0, 0, opts), args.pilot_R, args.seed + 1,
                                args.workers)
    k, _ = pilot.suggest_k_m(0.9)
    run = run_replicates(model, obs, EstimatorConfig(k, k, opts), args.R, args.seed + 2, args.workers)
    s = run.summary
    print(f"unbiased N={args.unbiased_N} k=m={k}: mean {s.mean[9]:.5f}, "
          f"95% CI [{s.ci_low[9]:.5f}, {s.ci_high[9]:.5f}], mean cost {s.mean_cost:.0f}")


if __name__ == "__main__":
    main()
