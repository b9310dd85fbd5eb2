import math

import numpy as np
import pytest
from scipy import stats

from logistic_bd import ModelParams, ParameterError
from logistic_bd import exact
from logistic_bd.errors import RejectionBudgetExceeded
from logistic_bd.montecarlo import (
    NO_SEPARATION,
    RNG_ALGORITHM,
    SimConfig,
    Welford,
    conditioned_sample,
    coupled_samples,
    estimate,
    extinction_times,
    holding_times,
    ks_critical,
    ks_critical_2samp,
    ks_statistic,
    linear_ceiling,
    make_rng,
    sample_extinction,
    sample_linear_extinction,
    sample_path,
    separation_bound,
    separation_probability,
)


def within_3se(report, value):
    return abs(report.mean - value) < 3 * report.std_error


# ---------------------------------------------------------------------------
# single process


def test_empty_start():
    s = sample_extinction(SimConfig(ModelParams(1, 2, 0.1), 0))
    assert (s.tau, s.steps, s.capped) == (0.0, 0, False)


def test_positive_start_positive_tau():
    tau, capped = extinction_times(SimConfig(ModelParams(1, 1, 0.1), 3), 500)
    assert np.all(tau > 0) and not capped.any()


def test_pure_death_mean():
    rep = estimate(SimConfig(ModelParams(0, 1), 1, seed=3), 100_000)
    assert within_3se(rep, 1.0)


def test_linear_subcritical_mean():
    rep = estimate(SimConfig(ModelParams(1, 2), 1, seed=4), 100_000)
    assert within_3se(rep, math.log(2))
    assert rep.rng_algorithm == RNG_ALGORITHM


def test_mean_matches_series_example():
    p = ModelParams(1, 2, 0.01)
    rep = estimate(SimConfig(p, 10, seed=5), 100_000)
    assert within_3se(rep, exact.expected_absorption(p, 10).value)


GRID = [
    (lam, mu, theta, m)
    for lam, mu in [(1, 2), (1, 1), (2, 1)]
    for theta in (0.1, 0.01)
    for m in (1, 10, 100)
    # supercritical theta = 0.01 has mean ~ e^30: checked through the exact series only
    if not (lam > mu and theta < 0.1)
]


@pytest.mark.parametrize("lam,mu,theta,m", GRID)
def test_mean_grid(lam, mu, theta, m):
    p = ModelParams(lam, mu, theta)
    rep = estimate(SimConfig(p, m, seed=100 + m, stream=int(1000 * theta)), 10_000)
    assert rep.capped == 0
    assert within_3se(rep, exact.expected_absorption(p, m).value)


def test_caps_are_flagged():
    cfg = SimConfig(ModelParams(2, 1, 0.01), 10, max_steps=50)
    s = sample_extinction(cfg)
    assert s.capped and s.steps == 50
    rep = estimate(cfg, 20)
    assert rep.capped == 20


def test_invalid_config():
    with pytest.raises(ParameterError):
        SimConfig(ModelParams(1, 2), -1)
    with pytest.raises(ParameterError):
        SimConfig(ModelParams(1, 2), 1, max_steps=0)
    with pytest.raises(ParameterError):
        estimate(SimConfig(ModelParams(1, 2), 1), 1)


def test_holding_times_exponential():
    cfg = SimConfig(ModelParams(1, 1, 0.05), 5, seed=9)
    h = holding_times(cfg, 5, 400)
    assert h.size > 500
    assert ks_statistic(h, lambda x: 1 - np.exp(-x)) < ks_critical(h.size)


def test_path_structure():
    times, states = sample_path(SimConfig(ModelParams(1, 1, 0.1), 4, seed=2), math.inf)
    assert times[0] == 0 and states[0] == 4 and states[-1] == 0
    assert np.all(np.diff(times) > 0)
    assert np.all(np.abs(np.diff(states)) == 1)


def test_path_horizon():
    times, _ = sample_path(SimConfig(ModelParams(2, 1, 0.01), 4, seed=2), 1.5)
    assert times[-1] <= 1.5


# ---------------------------------------------------------------------------
# determinism and streams


def test_determinism_and_batch_layout():
    cfg = SimConfig(ModelParams(1, 1, 0.05), 7, seed=42)
    a = estimate(cfg, 3000, batch=1000)
    b = estimate(cfg, 3000, batch=1000)
    c = estimate(cfg, 3000, batch=700)
    assert a.mean == b.mean and a.std_error == b.std_error
    assert np.array_equal(a.support, b.support)
    assert np.array_equal(a.support, c.support)
    assert c.mean == pytest.approx(a.mean, rel=1e-13)


def test_replicates_independent_of_order():
    cfg = SimConfig(ModelParams(1, 2, 0.05), 4, seed=1)
    forward, _ = extinction_times(cfg, 50)
    tail, _ = extinction_times(cfg, 20, start=30)
    assert np.array_equal(forward[30:], tail)


def test_streams_and_seeds_differ():
    a = make_rng(1, 0, 0).random(4)
    assert not np.array_equal(a, make_rng(1, 1, 0).random(4))
    assert not np.array_equal(a, make_rng(2, 0, 0).random(4))
    assert not np.array_equal(a, make_rng(1, 0, 1).random(4))
    assert np.array_equal(a, make_rng(1, 0, 0).random(4))


# ---------------------------------------------------------------------------
# estimator machinery


def test_constant_sample_has_zero_error():
    rep = estimate(SimConfig(ModelParams(1, 2), 0), 50)
    assert rep.mean == 0.0 and rep.std_error == 0.0
    rep = estimate(SimConfig(ModelParams(1, 2), 3), 50, sampler=lambda cfg, n, s: np.full(n, 2.5))
    assert rep.mean == 2.5 and rep.std_error == 0.0


def test_std_error_definition():
    data = np.random.default_rng(0).exponential(size=1000)
    rep = estimate(SimConfig(ModelParams(1, 2), 1), 1000, batch=300,
                   sampler=lambda cfg, n, s: data[s : s + n])
    assert rep.std_error == pytest.approx(data.std(ddof=1) / math.sqrt(1000), rel=1e-12)
    assert rep.ecdf(np.median(data)) == pytest.approx(0.5, abs=1e-3)


def test_ks_of_exponential_draws():
    n = 20_000
    x = np.random.default_rng(7).exponential(size=n)
    d = ks_statistic(x, lambda t: 1 - np.exp(-t))
    assert 0 <= d < 1.63 / math.sqrt(n)
    assert d == pytest.approx(stats.kstest(x, "expon").statistic, rel=1e-12)
    assert ks_critical(n) == pytest.approx(1.6276 / math.sqrt(n), rel=1e-4)


def test_ks_two_sample_critical():
    assert ks_critical_2samp(100, 100) == pytest.approx(ks_critical(50), rel=1e-14)


def test_welford_merge():
    rng = np.random.default_rng(1)
    x = rng.normal(3, 2, size=1001)
    w = Welford()
    for v in x[:400]:
        w.add(v)
    other = Welford()
    other.extend(x[400:])
    w.merge(other)
    assert w.n == 1001
    assert w.mean == pytest.approx(x.mean(), rel=1e-13)
    assert w.variance == pytest.approx(x.var(ddof=1), rel=1e-12)
    assert math.isnan(Welford().variance)


# ---------------------------------------------------------------------------
# linear sampler without stepping


@pytest.mark.parametrize("lam,mu,m", [(1, 2, 3), (1, 1, 5), (2, 1, 2)])
def test_linear_sampler_matches_cdf(lam, mu, m):
    p = ModelParams(lam, mu)
    tau = sample_linear_extinction(SimConfig(p, m, seed=8), 5000)
    finite = tau[np.isfinite(tau)]
    q = exact.linear_extinction_prob(p, m)
    assert finite.size / tau.size == pytest.approx(q, abs=4 * math.sqrt(q * (1 - q) / tau.size) + 1e-12)
    d = ks_statistic(finite, lambda t: exact.linear_tau0_cdf(p, m, t) / q)
    assert d < ks_critical(finite.size)


def test_linear_sampler_agrees_with_gillespie():
    cfg = SimConfig(ModelParams(1, 2), 4, seed=6)
    direct = sample_linear_extinction(cfg, 5000)
    stepped, _ = extinction_times(cfg, 5000)
    assert stats.ks_2samp(direct, stepped).statistic < ks_critical_2samp(5000, 5000)


def test_linear_sampler_needs_linear():
    with pytest.raises(ParameterError):
        sample_linear_extinction(SimConfig(ModelParams(1, 1, 0.1), 3), 5)


# ---------------------------------------------------------------------------
# coupling


def test_no_separation_without_competition():
    for s in coupled_samples(SimConfig(ModelParams(1, 1), 6, seed=1), 300):
        assert s.kappa == NO_SEPARATION
        assert s.tau_theta == s.tau_0


@pytest.mark.parametrize("lam,mu,theta,m", [(1, 2, 0.1, 5), (1, 1, 0.05, 10), (2, 1, 0.2, 3)])
def test_dominance_on_every_trace(lam, mu, theta, m):
    cfg = SimConfig(ModelParams(lam, mu, theta), m, seed=2, max_steps=10**6)
    for s in coupled_samples(cfg, 500):
        assert s.dominance_violations == 0
        if s.capped:
            # the critical linear component has infinite mean duration
            assert lam == mu
            continue
        if not s.separated:
            assert s.tau_theta == s.tau_0
        if s.linear_died:
            assert s.tau_theta <= s.tau_0


def test_first_jump_from_one_cannot_separate():
    est = separation_probability(SimConfig(ModelParams(1, 1, 0.5), 1, seed=3), 1, 5000)
    assert est.estimate == 0.0
    assert est.bound == pytest.approx(2 * 0.5 / 2)


def test_separation_bound_examples():
    assert separation_bound(ModelParams(1, 1, 0.01), 1, 1) == pytest.approx(0.01)
    assert separation_bound(ModelParams(1, 1, 0.001), 5, 100) == pytest.approx(105 * 100 * 0.001 / 2)


@pytest.mark.parametrize("m,n,theta", [(5, 100, 0.001), (1, 10, 0.01), (20, 30, 0.01), (10, 5, 0.1), (3, 50, 0.003)])
def test_separation_within_bound(m, n, theta):
    est = separation_probability(SimConfig(ModelParams(1, 1, theta), m, seed=m), n, 10_000)
    assert est.consistent


def test_coupled_marginal_matches_single_sampler():
    p = ModelParams(1, 2, 0.1)
    cfg = SimConfig(p, 5, seed=21)
    coupled = np.array([s.tau_theta for s in coupled_samples(cfg, 10_000)])
    single, _ = extinction_times(SimConfig(p, 5, seed=22), 10_000)
    assert stats.ks_2samp(coupled, single).statistic < ks_critical_2samp(10_000, 10_000)
    linear = np.array([s.tau_0 for s in coupled_samples(cfg, 10_000)])
    assert ks_statistic(linear, lambda t: exact.linear_tau0_cdf(p.linear(), 5, t)) < ks_critical(10_000)


def test_linear_ceiling():
    assert linear_ceiling(ModelParams(2, 1)) == math.ceil(math.log(1e-8) / math.log(0.5))
    with pytest.raises(ParameterError):
        linear_ceiling(ModelParams(1, 2))


def test_conditioned_dies_acceptance():
    batch = conditioned_sample(SimConfig(ModelParams(2, 1, 0.05), 1, seed=31), "dies", n=2000)
    p_hat = batch.acceptance_rate
    se = math.sqrt(0.25 / batch.attempts)
    assert abs(p_hat - 0.5) < 3 * se


def test_conditioned_survives_subcritical_rejected():
    with pytest.raises(RejectionBudgetExceeded):
        conditioned_sample(SimConfig(ModelParams(1, 2, 0.05), 1), "survives")


def test_conditioned_budget():
    with pytest.raises(RejectionBudgetExceeded):
        conditioned_sample(SimConfig(ModelParams(2, 1, 0.05), 40, seed=1), "dies", n=5, max_attempts=5)


def test_conditioned_dies_means_close():
    batch = conditioned_sample(SimConfig(ModelParams(2, 1, 0.05), 3, seed=32), "dies", n=1000)
    a, b = batch.tau_theta, batch.tau_0
    joint = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    assert abs(a.mean() - b.mean()) < 3 * joint


def test_conditioned_survives_runs_theta_to_extinction():
    batch = conditioned_sample(SimConfig(ModelParams(2, 1, 0.2), 2, seed=33), "survives", n=50)
    assert np.all(np.isinf(batch.tau_0))
    assert np.all(np.isfinite(batch.tau_theta))
