"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (visible even
under output capture) and then asserts. Run alone with

    pytest tests/test_acceptance.py -v
"""
import time

import numpy as np
import pytest
from scipy import stats

from coupled_smoother.cpf import CpfOptions, ccpf_sweep, cpf_sweep, pf_init
from coupled_smoother.baselines import pf_smoother
from coupled_smoother.estimator import (EstimatorConfig, combine_h_km, cost_units,
                                        meeting_time_survey, replicate_csv, run_replicates)
from coupled_smoother.functionals import component
from coupled_smoother.kalman import rts_smoother
from coupled_smoother.models import (Ar1Params, LotkaVolterraParams, UNLIKELY_PARAMS, generate_data,
                                     make_ar1, make_lotka_volterra, make_unlikely)
from coupled_smoother.resampling import coupled_multinomial, overlap_probability
from coupled_smoother.ssm import NoiseTable, ROLE_OTHER

DATA_SEED = 1
AR1 = make_ar1(Ar1Params())
LG = Ar1Params().linear_gaussian()


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def ar1_data(T):
    return generate_data(AR1, T, DATA_SEED)[1]


@pytest.fixture(scope="module")
def ar1_t10_run():
    obs = ar1_data(10)
    cfg = EstimatorConfig(2, 4, CpfOptions(64, ancestor_sampling=True))
    start = time.perf_counter()
    run = run_replicates(AR1, obs, cfg, 5000, master_seed=101)
    return obs, run, time.perf_counter() - start


def test_criterion_01_unbiased_vs_kalman(ar1_t10_run, verdict):
    obs, run, elapsed = ar1_t10_run
    truth = rts_smoother(LG, obs)[0][:, 0]
    s = run.summary
    z = np.abs(s.mean - truth) / (s.sd / np.sqrt(s.R))
    inside = int(np.sum(z <= 4))
    ok = s.R == 5000 and inside >= 10 and elapsed < 300
    verdict(1, ok, f"{inside}/11 coordinates within 4 se (max |z|={z.max():.2f}), "
                   f"R={s.R}, {elapsed:.0f}s")


def test_criterion_02_meeting_time_n_sweep(verdict):
    obs = ar1_data(100)
    bands = {16: (50, 200), 128: (8, 30), 256: (4, 14), 512: (2, 8), 1024: (2, 6)}
    means = {}
    for N in bands:
        cfg = EstimatorConfig(0, 0, CpfOptions(N, ancestor_sampling=True))
        sv = meeting_time_survey(AR1, obs, cfg, 500, seed=200 + N)
        means[N] = sv.mean
    in_band = all(lo <= means[N] <= hi for N, (lo, hi) in bands.items())
    seq = [means[N] for N in bands]
    decreasing = all(a > b for a, b in zip(seq, seq[1:]))
    detail = ", ".join(f"N={N}: {m:.2f}" for N, m in means.items())
    verdict(2, in_band and decreasing, f"{detail}; decreasing={decreasing}")


def test_criterion_03_table1_ordering(verdict):
    obs = ar1_data(50)
    means = {}
    for proposal in ("bootstrap", "auxiliary"):
        for a_s in (False, True):
            cfg = EstimatorConfig(0, 0, CpfOptions(128, a_s, proposal))
            means[(proposal, a_s)] = meeting_time_survey(AR1, obs, cfg, 300, seed=300).mean
    b_no, b_as = means[("bootstrap", False)], means[("bootstrap", True)]
    a_no, a_as = means[("auxiliary", False)], means[("auxiliary", True)]
    ordering = b_no > b_as > a_no >= a_as
    band_b = 9 <= b_no <= 36
    band_a = 2 <= a_as <= 7
    verdict(3, ordering and band_b and band_a,
            f"bootstrap {b_no:.2f}/{b_as:.2f}, auxiliary {a_no:.2f}/{a_as:.2f} (no AS/AS); "
            f"ordering={ordering}, bootstrap-no-AS in [9,36]={band_b}, auxiliary-AS in [2,7]={band_a}")


def test_criterion_04_geometric_tail(verdict):
    obs = ar1_data(50)
    cfg = EstimatorConfig(0, 0, CpfOptions(128))
    sv = meeting_time_survey(AR1, obs, cfg, 1000, seed=400)
    taus = sv.taus
    med = np.median(taus)
    n = np.arange(int(np.floor(med)), taus.max())
    surv = np.array([(taus > i).mean() for i in n])
    keep = surv > 0
    r = np.corrcoef(n[keep], np.log(surv[keep]))[0, 1]
    censored = int(sv.censored.sum())
    verdict(4, r <= -0.9 and censored == 0 and sv.n_failed == 0,
            f"log-survival correlation {r:.3f} over {keep.sum()} points beyond median {med:g}, "
            f"censored={censored}, cap={cfg.sweep_cap}")


def test_criterion_05_maximal_coupling(verdict):
    rng = np.random.default_rng(500)
    worst_p, worst_gap = 1.0, 0.0
    for i in range(20):
        n = (2, 5, 50)[i % 3]
        w, wt = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        a, b = coupled_multinomial(w, wt, 100_000, rng)
        for draws, probs in ((a, w), (b, wt)):
            counts = np.bincount(draws, minlength=n)
            worst_p = min(worst_p, stats.chisquare(counts, probs * draws.size).pvalue)
        worst_gap = max(worst_gap, abs(np.mean(a == b) - overlap_probability(w, wt)))
    verdict(5, worst_p > 0.001 and worst_gap <= 0.01,
            f"min chi-square p={worst_p:.4f}, max |P(a=a~) - sum min|={worst_gap:.4f}")


def test_criterion_06_faithfulness(verdict):
    obs = ar1_data(50)
    opts = CpfOptions(64, ancestor_sampling=True)
    rng = np.random.default_rng(600)
    identical = 0
    x = pf_init(AR1, obs, 64, rng=rng)[0]
    for _ in range(1000):
        x1, x2, _, met = ccpf_sweep((x, x), AR1, obs, opts, rng=rng)
        identical += met and x1.states.tobytes() == x2.states.tobytes()
        x = x1
    # run independent chains to a meeting, then keep sweeping the pair
    x, xt = pf_init(AR1, obs, 64, rng=rng)[0], pf_init(AR1, obs, 64, rng=rng)[0]
    x = cpf_sweep(x, AR1, obs, opts, rng=rng)[0]
    while x != xt:
        x, xt, _, _ = ccpf_sweep((x, xt), AR1, obs, opts, rng=rng)
    kept = 0
    for _ in range(50):
        x, xt, _, met = ccpf_sweep((x, xt), AR1, obs, opts, rng=rng)
        kept += met and x.states.tobytes() == xt.states.tobytes()
    verdict(6, identical == 1000 and kept == 50,
            f"{identical}/1000 sweeps from equal references identical, {kept}/50 post-meeting sweeps equal")


def test_criterion_07_unlikely_observation(verdict):
    start = time.perf_counter()
    model, obs = make_unlikely()
    truth = rts_smoother(UNLIKELY_PARAMS.linear_gaussian(), obs)[0][9, 0]
    est = np.empty(2000)
    for r in range(2000):
        table = NoiseTable(700, r, 0, obs.horizon, 128, 1, role=ROLE_OTHER)
        est[r] = pf_smoother(model, obs, 128, rng=table.resampling_rng(), noise=table)[9]
    bias_z = (est.mean() - truth) / (est.std(ddof=1) / np.sqrt(est.size))
    opts = CpfOptions(128)
    pilot = meeting_time_survey(model, obs, EstimatorConfig(0, 0, opts), 100, seed=701)
    k, _ = pilot.suggest_k_m(0.9)
    run = run_replicates(model, obs, EstimatorConfig(k, k, opts), 2000, master_seed=702)
    lo, hi = run.summary.ci_low[9], run.summary.ci_high[9]
    covered = lo <= truth <= hi
    elapsed = time.perf_counter() - start
    ok = abs(bias_z) > 5 and covered and elapsed < 600
    verdict(7, ok, f"exact {truth:.5f}; PF mean {est.mean():.5f} (bias z={bias_z:.1f}); "
                   f"k=m={k}, CI [{lo:.5f}, {hi:.5f}] covers={covered}, "
                   f"failed={run.summary.n_failed}, {elapsed:.0f}s")


def test_criterion_08_rao_blackwell(ar1_t10_run, verdict):
    _, run, _ = ar1_t10_run
    rb, plain = run.values, run.plain_values
    d = rb - plain
    mean_z = np.abs(d.mean(axis=0)) / (d.std(axis=0, ddof=1) / np.sqrt(d.shape[0]))
    rng = np.random.default_rng(800)
    boot = []
    for _ in range(200):
        idx = rng.integers(0, rb.shape[0], rb.shape[0])
        boot.append(plain[idx].var(axis=0, ddof=1) - rb[idx].var(axis=0, ddof=1))
    se = np.std(boot, axis=0, ddof=1)
    excess = rb.var(axis=0, ddof=1) - plain.var(axis=0, ddof=1)
    ok = np.all(mean_z <= 4) and np.all(excess <= 3 * se)
    ratio = plain.var(axis=0, ddof=1) / rb.var(axis=0, ddof=1)
    verdict(8, bool(ok), f"max paired |z|={mean_z.max():.2f}, variance ratio plain/RB "
                         f"{ratio.min():.2f}..{ratio.max():.2f}")


def test_criterion_09_lotka_volterra(verdict):
    model = make_lotka_volterra(LotkaVolterraParams())
    _, obs = generate_data(model, 50, DATA_SEED)
    h = component(1)
    opts = CpfOptions(512)
    pilot = meeting_time_survey(model, obs, EstimatorConfig(0, 0, opts, h=h), 100, seed=900)
    k, m = pilot.suggest_k_m(0.9, 2)
    cfg = EstimatorConfig(k, m, opts, h=h)
    run = run_replicates(model, obs, cfg, 100, master_seed=901)
    ok_reps = [r for r in run.reports if not r.failed]
    success = len(ok_reps) / 100
    costs_exact = all(r.cost_units == cost_units(r.tau, m, 512) for r in ok_reps)
    # long CPF chain reference: chain average of the Rao-Blackwellised z-path
    rng = np.random.default_rng(902)
    x = pf_init(model, obs, 512, rng=rng, h=h)[0]
    burn, n_keep = 1000, 19_000
    vals = np.empty((n_keep, 51))
    for n in range(burn + n_keep):
        x, rb = cpf_sweep(x, model, obs, opts, rng=rng, h=h)
        if n >= burn:
            vals[n - burn] = rb.value
    batches = np.array([b.mean(axis=0) for b in np.array_split(vals, 100)])
    ref_mean = vals.mean(axis=0)
    ref_half = 1.96 * batches.std(axis=0, ddof=1) / 10
    s = run.summary
    overlap = (s.ci_low <= ref_mean + ref_half) & (s.ci_high >= ref_mean - ref_half)
    frac = overlap.mean()
    verdict(9, success >= 0.95 and frac >= 0.9 and costs_exact,
            f"k={k}, m={m}, success {success:.0%}, CI overlap with long chain at "
            f"{overlap.sum()}/51 times, cost formula exact={costs_exact}")


def test_criterion_10_time_average_evaluator(verdict):
    rng = np.random.default_rng(1000)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(0, 20))
        m = k + int(rng.integers(0, 20))
        tau = int(rng.integers(1, 60))
        dim = int(rng.integers(1, 4))
        hx = rng.normal(size=(max(m, tau - 1) + 1, dim))
        hxt = rng.normal(size=(max(tau - 1, 1), dim))
        got = combine_h_km(hx, hxt, k, m, tau)
        # plain average of single-start telescoping sums
        want = np.zeros(dim)
        for l in range(k, m + 1):
            term = hx[l].copy()
            for n in range(l + 1, tau):
                term += hx[n] - hxt[n - 1]
            want += term
        want /= m - k + 1
        worst = max(worst, float(np.max(np.abs(got - want) / np.abs(want))))
    verdict(10, worst <= 1e-12, f"max relative difference {worst:.2e} over 1000 instances")


def test_criterion_11_parallel_determinism(verdict):
    obs = ar1_data(10)
    cfg = EstimatorConfig(2, 4, CpfOptions(32, ancestor_sampling=True))
    one = replicate_csv(run_replicates(AR1, obs, cfg, 24, master_seed=1100, workers=1).reports, 11)
    eight = replicate_csv(run_replicates(AR1, obs, cfg, 24, master_seed=1100, workers=8).reports, 11)
    verdict(11, one.encode() == eight.encode(),
            f"per-replicate CSV ({len(one)} bytes) identical for 1 and 8 workers: {one == eight}")
