import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupled_smoother.cpf import CpfOptions
from coupled_smoother.estimator import (EstimatorConfig, UnbiasedReport, combine_h_km, cost_units,
                                        default_max_sweeps, meeting_time_survey, normal_quantile,
                                        replicate_csv, run_coupled_chains, run_replicates,
                                        summarize, summary_json)
from coupled_smoother.kalman import rts_smoother
from coupled_smoother.models import Ar1Params, generate_data, make_ar1
from coupled_smoother.ssm import ConfigurationError, ContractError, ObservationRecord


def h_k_brute(hx, hxt, k, tau):
    """Single-start estimator from iteration k, summed term by term."""
    total = float(hx[k])
    for n in range(k + 1, tau):
        total += float(hx[n]) - float(hxt[n - 1])
    return total


def h_km_brute(hx, hxt, k, m, tau):
    """Time-averaged estimator as the plain average of the single-start estimators."""
    return sum(h_k_brute(hx, hxt, l, tau) for l in range(k, m + 1)) / (m - k + 1)


@pytest.mark.parametrize("tau,m,N,expected", [(2, 1, 100, 500), (2, 10, 1, 13), (5, 3, 10, 110)])
def test_cost_units_examples(tau, m, N, expected):
    assert cost_units(tau, m, N) == expected


def test_cost_units_precondition():
    with pytest.raises(ContractError):
        cost_units(0, 1, 10)


def test_combine_worked_example():
    # entries at unused iterations are NaN, so any accidental use would show
    hx = [np.nan, 1.0, 2.0, 3.0]
    hxt = [np.nan, 0.5, 1.5]
    assert combine_h_km(hx, hxt, 1, 2, 4)[()] == pytest.approx(3.75)
    assert h_km_brute(hx, hxt, 1, 2, 4) == pytest.approx(3.75)


def test_combine_empty_correction():
    hx = np.arange(8.0)
    for k, m in [(1, 1), (1, 5), (3, 7)]:
        assert combine_h_km(hx, hx[:1], k, m, 2) == pytest.approx(hx[k:m + 1].mean())


def test_combine_reduces_to_plain_rhee_glynn():
    rng = np.random.default_rng(0)
    hx, hxt = rng.normal(size=9), rng.normal(size=9)
    tau = 7
    expected = hx[0] + sum(hx[n] - hxt[n - 1] for n in range(1, tau))
    assert combine_h_km(hx, hxt, 0, 0, tau) == pytest.approx(expected)


def test_combine_no_correction_when_meeting_early():
    rng = np.random.default_rng(1)
    hx, hxt = rng.normal(size=12), rng.normal(size=12)
    k, m = 4, 9
    for tau in (1, 2, k + 1):
        assert combine_h_km(hx, hxt, k, m, tau) == pytest.approx(hx[k:m + 1].mean(), abs=1e-14)


def test_combine_history_checks():
    with pytest.raises(ContractError):
        combine_h_km(np.zeros(3), np.zeros(3), 0, 4, 2)
    with pytest.raises(ContractError):
        combine_h_km(np.zeros(10), np.zeros(2), 0, 4, 6)
    with pytest.raises(ContractError):
        combine_h_km(np.zeros(10), np.zeros(10), 3, 2, 2)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 15), st.integers(0, 15), st.integers(1, 40), st.integers(0, 2 ** 32 - 1))
def test_combine_matches_average_of_single_start(k, span, tau, seed):
    m = k + span
    rng = np.random.default_rng(seed)
    hx = rng.normal(size=max(m, tau - 1) + 1)
    hxt = rng.normal(size=max(tau - 1, 1))
    got = combine_h_km(hx, hxt, k, m, tau)
    want = h_km_brute(hx, hxt, k, m, tau)
    assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


def test_combine_vector_valued():
    rng = np.random.default_rng(3)
    hx, hxt = rng.normal(size=(10, 4)), rng.normal(size=(10, 4))
    got = combine_h_km(hx, hxt, 2, 5, 8)
    for j in range(4):
        assert got[j] == pytest.approx(h_km_brute(hx[:, j], hxt[:, j], 2, 5, 8), rel=1e-12)


def test_config_validation():
    opts = CpfOptions(8)
    with pytest.raises(ConfigurationError):
        EstimatorConfig(3, 2, opts)
    with pytest.raises(ConfigurationError):
        EstimatorConfig(0, 5, opts, max_sweeps=5)
    assert EstimatorConfig(2, 4, opts).sweep_cap == default_max_sweeps(4) == 1000
    assert default_max_sweeps(30, 7.2) == 3000
    assert default_max_sweeps(3, 7.2) == 800


def test_report_invariants(ar1, ar1_t10):
    cfg = EstimatorConfig(2, 4, CpfOptions(16, True))
    for rid in range(40):
        rep = run_coupled_chains(ar1, ar1_t10, cfg, seed=9, replicate_id=rid)
        assert not rep.failed
        assert rep.tau >= 2
        assert rep.cost_units == cost_units(rep.tau, 4, 16)
        assert rep.sweep_count == max(4, rep.tau)
        assert np.all(np.isfinite(rep.value)) and rep.value.shape == (11,)


def test_k_equals_m_form(ar1, ar1_t10):
    # H_{k:k} equals the single-start estimator; check via tau <= k + 1 reports
    cfg = EstimatorConfig(3, 3, CpfOptions(64, True))
    rep = run_coupled_chains(ar1, ar1_t10, cfg, seed=1, replicate_id=0)
    assert rep.sweep_count == max(3, rep.tau)


def test_cap_censors(ar1):
    _, obs = generate_data(ar1, 60, seed=1)
    cfg = EstimatorConfig(0, 0, CpfOptions(4), max_sweeps=3)
    rep = run_coupled_chains(ar1, obs, cfg, seed=0, replicate_id=0)
    assert rep.failed and rep.censored and rep.reason == "cap" and rep.tau == 3


def test_degenerate_replicates_fail_cleanly(ar1):
    obs = ObservationRecord([[0.0], [1e200]])
    with np.errstate(all="ignore"):
        run = run_replicates(ar1, obs, EstimatorConfig(0, 1, CpfOptions(4)), 3, 0)
    assert run.summary is None
    assert all(r.failed and "DegenerateWeights" in r.reason for r in run.reports)


def test_replicates_reproducible_and_keyed(ar1, ar1_t10):
    cfg = EstimatorConfig(1, 2, CpfOptions(8))
    a = run_replicates(ar1, ar1_t10, cfg, 6, master_seed=5)
    b = run_replicates(ar1, ar1_t10, cfg, 6, master_seed=5)
    c = run_replicates(ar1, ar1_t10, cfg, 6, master_seed=6)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    # replicate r does not depend on how many replicates run alongside it
    d = run_replicates(ar1, ar1_t10, cfg, 3, master_seed=5)
    assert np.array_equal(a.values[:3], d.values)


def test_parallel_matches_serial(ar1, ar1_t10):
    cfg = EstimatorConfig(1, 2, CpfOptions(8))
    a = run_replicates(ar1, ar1_t10, cfg, 8, master_seed=5, workers=1)
    b = run_replicates(ar1, ar1_t10, cfg, 8, master_seed=5, workers=2)
    assert replicate_csv(a.reports, 11) == replicate_csv(b.reports, 11)


def test_summary_single_replicate():
    s = summarize(np.array([[1.0, 2.0]]), np.array([10.0]))
    assert s.R == 1 and s.sd is None and s.ci_low is None
    assert np.array_equal(s.mean, [1.0, 2.0])


def test_summary_interval_and_status():
    vals = np.array([[0.0], [1.0], [2.0], [3.0]])
    s = summarize(vals, np.ones(4) * 5, alpha=0.1, n_failed=1)
    half = normal_quantile(0.95) * vals.std(ddof=1) / 2
    assert s.ci_low[0] == pytest.approx(1.5 - half) and s.ci_high[0] == pytest.approx(1.5 + half)
    assert s.status == "warning"  # 1 of 5 replicates failed
    assert s.inefficiency[0] == pytest.approx(5 * vals.var(ddof=1))
    assert summarize(vals, None, n_failed=0).status == "ok"


def test_normal_quantile_accuracy():
    assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-8)
    assert normal_quantile(0.5) == pytest.approx(0.0, abs=1e-12)


def test_h0_unbiased_small_model(ar1, ar1_t3):
    truth = rts_smoother(Ar1Params().linear_gaussian(), ar1_t3)[0][1, 0]
    run = run_replicates(ar1, ar1_t3, EstimatorConfig(0, 0, CpfOptions(64)), 10_000, master_seed=1)
    v = run.values[:, 1]
    assert abs(v.mean() - truth) <= 4 * v.std(ddof=1) / np.sqrt(v.size)


@pytest.mark.parametrize("k,m", [(0, 0), (5, 5), (5, 10)])
def test_unbiased_all_coordinates(ar1, k, m):
    _, obs = generate_data(ar1, 5, seed=1)
    truth = rts_smoother(Ar1Params().linear_gaussian(), obs)[0][:, 0]
    run = run_replicates(ar1, obs, EstimatorConfig(k, m, CpfOptions(32, True)), 2000, master_seed=k + m)
    se = run.summary.sd / np.sqrt(run.summary.R)
    assert np.all(np.abs(run.summary.mean - truth) <= 4 * se)


def test_rb_and_plain_share_mean(ar1, ar1_t3):
    run = run_replicates(ar1, ar1_t3, EstimatorConfig(1, 2, CpfOptions(16)), 3000, master_seed=2)
    d = run.values - run.plain_values
    se = d.std(axis=0, ddof=1) / np.sqrt(d.shape[0])
    assert np.all(np.abs(d.mean(axis=0)) <= 4 * se)


def test_meeting_survey(ar1, ar1_t10):
    cfg = EstimatorConfig(0, 0, CpfOptions(16, True))
    sv = meeting_time_survey(ar1, ar1_t10, cfg, 200, seed=3)
    assert sv.taus.min() >= 2 and sv.censored.sum() == 0 and sv.n_failed == 0
    n = np.arange(1, sv.taus.max() + 1)
    surv = np.array([(sv.taus > i).mean() for i in n])
    assert np.all(np.diff(surv) <= 0)
    k, m = sv.suggest_k_m()
    assert k == int(np.ceil(np.quantile(sv.taus, 0.9))) and m == 2 * k
    info = sv.summary()
    assert info["R"] == 200 and "0.9" in info["quantiles"]


def test_replicate_csv_header_golden():
    reps = [UnbiasedReport(0, np.array([1.5, -2.0]), None, 3, 40.0, 3),
            UnbiasedReport(1, None, None, None, float("nan"), 1, failed=True, reason="x")]
    text = replicate_csv(reps, 2)
    assert text.splitlines() == ["replicate_id,tau,cost_units,failed,h_0,h_1",
                                 "0,3,40.0,0,1.5,-2.0", "1,,,1,,"]
    tagged = replicate_csv(reps, 2, estimator="pf")
    assert tagged.splitlines()[0] == "estimator,replicate_id,tau,cost_units,failed,h_0,h_1"


def test_summary_json_keys():
    s = summarize(np.array([[0.0], [2.0]]), np.array([1.0, 1.0]))
    doc = json.loads(summary_json(s, {"k": 1}, {"estimator": "unbiased"}))
    assert set(doc) == {"config", "R", "n_failed", "alpha", "status", "mean", "sd", "ci_low",
                        "ci_high", "mean_cost", "inefficiency", "estimator"}


@pytest.fixture(scope="module")
def many_ar1_replicates(ar1, ar1_t10):
    cfg = EstimatorConfig(2, 4, CpfOptions(32, True))
    return run_replicates(ar1, ar1_t10, cfg, 20_000, master_seed=77)


@pytest.mark.slow
def test_finite_moments_proxy(many_ar1_replicates):
    v = many_ar1_replicates.values[:10_000]
    assert v.shape[0] == 10_000 and np.all(np.isfinite(v))
    half = v[:5000].var(axis=0, ddof=1)
    full = v.var(axis=0, ddof=1)
    assert np.all(np.abs(half / full - 1) <= 0.2)


@pytest.mark.slow
def test_ci_coverage(many_ar1_replicates, ar1_t10):
    truth = rts_smoother(Ar1Params().linear_gaussian(), ar1_t10)[0][5, 0]
    v = many_ar1_replicates.values[:, 5].reshape(200, 100)
    covered = 0
    for block in v:
        s = summarize(block[:, None])
        covered += s.ci_low[0] <= truth <= s.ci_high[0]
    assert covered >= 180
