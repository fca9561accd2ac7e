import numpy as np
import pytest

from qsdlab import spectral as sp
from qsdlab.config import SweepSettings
from qsdlab.errors import DomainError
from qsdlab.fitting import ols_fit
from qsdlab.model import build_logistic
from qsdlab.scale import ScaleContext, exit_prob_beta, mean_exit_time_bvp, mean_extinction_time
from qsdlab.sde import (ABSORBED, BACKEND, CensoringWarning, ExtinctionSample, SimConfig, empirical_qsd_fv,
                        exit_event_stats, fv_bin_masses, histogram, multiscale_tv_check,
                        normalized_extinction_test, sample_extinction_times, sample_states, step, tv_distance,
                        tv_edges)


@pytest.fixture(scope="module")
def fv01(logistic):
    return empirical_qsd_fv(logistic, 0.1, 5000, 20.0, 100.0, SimConfig(seed=11))


# --- step ----------------------------------------------------------------------------------


def test_zero_noise_is_explicit_euler(logistic):
    x, dt = 0.5, 1e-3
    for _ in range(2000):
        ref = x + dt * x * (1 - x)
        x = step(logistic, 0.1, x, dt, (0.0, 0.0))
        assert x == pytest.approx(ref, rel=1e-14)
    # Euler tracks the logistic solution 1/(1 + e^{-t}) at t = 2 ...
    assert abs(x - 1 / (1 + np.exp(-2.0))) < 1e-3
    # ... and settles on the equilibrium 1 over a longer horizon.
    for _ in range(18000):
        x = step(logistic, 0.1, x, dt, (0.0, 0.0))
    assert abs(x - 1.0) < 1e-2


def test_step_large_state_drift_negative(logistic, rng):
    z = rng.standard_normal((4000, 2)) * np.sqrt(1e-3)
    nxt = [step(logistic, 0.1, 5.0, 1e-3, tuple(n)) for n in z]
    assert np.mean(nxt) < 5.0
    assert step(logistic, 0.1, 5.0, 1e-3, (0.0, 0.0)) < 5.0


def test_step_absorbs(logistic):
    assert step(logistic, 0.1, 0.01, 0.01, (-2.0, 0.0)) is ABSORBED
    with pytest.raises(DomainError):
        step(logistic, 0.1, 0.0, 0.01, (0.0, 0.0))


def test_implicit_scheme_agrees_at_small_noise(logistic):
    a = step(logistic, 0.1, 1.5, 1e-4, (1e-3, -1e-3))
    b = step(logistic, 0.1, 1.5, 1e-4, (1e-3, -1e-3), scheme="implicit-sqrt")
    assert a == pytest.approx(b, rel=1e-3)


def test_environmental_only_never_absorbs(logistic):
    X = sample_states(logistic, 0.0, 1e-3, [10.0], SimConfig(n_paths=10_000, seed=3))
    assert np.all(X > 0)


# --- extinction times ------------------------------------------------------------------------


# Euler carries an O(dt) bias in the mean extinction time (about 2% at dt=0.01,
# eps=0.2), so mean-time comparisons use the Monte Carlo step of the sweeps.
MC_DT = SweepSettings().mc_dt


@pytest.fixture(scope="module")
def sample02(logistic):
    return sample_extinction_times(logistic, 0.2, 1.0, SimConfig(dt=MC_DT, n_paths=10_000, seed=5))


def test_mean_matches_exact(logistic, sample02):
    exact = mean_extinction_time(logistic, 0.2, 1.0)
    assert sample02.censored_fraction == 0
    assert abs(sample02.mean - exact) <= 3 * sample02.se
    assert np.all(sample02.times > 0)


def test_reproducible(logistic, sample02):
    again = sample_extinction_times(logistic, 0.2, 1.0, SimConfig(dt=MC_DT, n_paths=10_000, seed=5))
    assert np.array_equal(again.times, sample02.times)


def test_thread_count_does_not_change_sample(logistic):
    cfg = SimConfig(n_paths=3000, seed=9)
    a = sample_extinction_times(logistic, 0.2, 1.0, cfg)
    b = sample_extinction_times(logistic, 0.2, 1.0, cfg.with_(threads=4))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.censored, b.censored)


def test_prefix_stability(logistic):
    # Path i only depends on (seed, i).
    a = sample_extinction_times(logistic, 0.2, 1.0, SimConfig(n_paths=500, seed=9))
    b = sample_extinction_times(logistic, 0.2, 1.0, SimConfig(n_paths=200, seed=9))
    assert np.array_equal(a.times[:200], b.times)


@pytest.mark.skipif(BACKEND != "compiled", reason="compiled kernels not built")
def test_backends_bit_identical(logistic):
    cfg = SimConfig(n_paths=300, seed=13)
    a = sample_extinction_times(logistic, 0.2, 1.0, cfg.with_(backend="compiled"))
    b = sample_extinction_times(logistic, 0.2, 1.0, cfg.with_(backend="python"))
    assert np.array_equal(a.times, b.times)
    e1 = exit_event_stats(logistic, 0.2, 0.25, 0.5, cfg.with_(backend="compiled"))
    e2 = exit_event_stats(logistic, 0.2, 0.25, 0.5, cfg.with_(backend="python"))
    assert e1 == e2
    s1 = sample_states(logistic, 0.2, 1.0, [1.0, 3.0], cfg.with_(backend="compiled"))
    s2 = sample_states(logistic, 0.2, 1.0, [1.0, 3.0], cfg.with_(backend="python"))
    assert np.array_equal(s1, s2)


@pytest.mark.skipif(BACKEND != "compiled", reason="compiled kernels not built")
def test_backends_bit_identical_fv(logistic):
    cfg = SimConfig(seed=17)
    a = empirical_qsd_fv(logistic, 0.1, 1000, 2.0, 3.0, cfg.with_(backend="compiled"))
    b = empirical_qsd_fv(logistic, 0.1, 1000, 2.0, 3.0, cfg.with_(backend="python"))
    assert np.array_equal(a.values, b.values) and a.meta["rebirths"] == b.meta["rebirths"]


def test_step_size_halving(logistic, sample02):
    double = sample_extinction_times(logistic, 0.2, 1.0, SimConfig(dt=2 * MC_DT, n_paths=10_000, seed=6))
    se_diff = np.hypot(sample02.se, double.se)
    assert abs(double.mean - sample02.mean) <= 2 * se_diff


def test_absorption_monotone_in_eps(logistic):
    cfg = SimConfig(n_paths=2000, seed=21)
    s = [sample_extinction_times(logistic, e, 1.0, cfg) for e in (0.05, 0.1, 0.2, 0.4)]
    for a, b in zip(s, s[1:]):
        assert a.mean - b.mean > 3 * np.hypot(a.se, b.se)


def test_negative_growth_log_scaling(logistic_neg):
    eps = np.geomspace(0.1, 1e-3, 5)
    cfg = SimConfig(n_paths=2000, seed=23)
    means = [sample_extinction_times(logistic_neg, e, 1.0, cfg).mean for e in eps]
    fit = ols_fit(np.abs(np.log(eps)), np.asarray(means), "E vs |ln eps|", r2_min=0.95)
    assert fit.slope > 0 and fit.passed


def test_censoring_warning(logistic):
    with pytest.warns(CensoringWarning):
        s = sample_extinction_times(logistic, 0.1, 1.0, SimConfig(n_paths=200, t_max=5.0))
    assert s.censored_fraction > 0.5 and s.warnings
    with pytest.raises(DomainError):
        normalized_extinction_test(s, 0.01)


def test_sampler_preconditions(logistic):
    with pytest.raises(DomainError):
        sample_extinction_times(logistic, 0.0, 1.0, SimConfig(n_paths=10))
    with pytest.raises(DomainError):
        sample_extinction_times(logistic, 0.1, 0.0, SimConfig(n_paths=10))
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(t_max=1e8, dt=1e-3)


# --- normalized extinction test --------------------------------------------------------------


def _synthetic(times, logistic):
    return ExtinctionSample(np.asarray(times), np.zeros(len(times), bool), 1.0, 0.1, logistic, SimConfig())


def test_ks_synthetic_exponential(logistic):
    rng = np.random.default_rng(2)
    n = 1000
    d = np.array([normalized_extinction_test(_synthetic(rng.exponential(size=n), logistic), 1.0)
                  for _ in range(300)])
    # 1.36/sqrt(n) is the 95% quantile of the KS statistic.
    frac = np.mean(d > 1.36 / np.sqrt(n))
    assert 0.01 <= frac <= 0.10


def test_ks_detects_wrong_rate(logistic):
    t = np.random.default_rng(3).exponential(size=5000)
    assert normalized_extinction_test(_synthetic(t, logistic), 2.0) > 0.2


# --- exit problem ----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def exit_stats(logistic):
    return exit_event_stats(logistic, 0.2, 0.25, 0.5, SimConfig(n_paths=10_000, seed=31))


def test_exit_frequency_matches_scale(logistic, exit_stats):
    p = float(exit_prob_beta(ScaleContext(logistic, 0.2, x_star=0.25, beta=0.5), 0.25))
    assert abs(exit_stats.freq_beta - p) <= 3 * exit_stats.freq_se
    lo, hi = exit_stats.freq_ci95
    assert lo < exit_stats.freq_beta < hi


def test_exit_time_matches_bvp(logistic, exit_stats):
    T = mean_exit_time_bvp(ScaleContext(logistic, 0.2, x_star=0.25, beta=0.5), [0.25]).u[0]
    assert abs(exit_stats.mean_time - T) <= 3 * exit_stats.mean_time_se
    assert exit_stats.censored == 0


def test_exit_frequency_tends_to_one_near_beta(logistic):
    cfg = SimConfig(n_paths=2000, seed=37)
    f = [exit_event_stats(logistic, 0.2, x0, 0.5, cfg).freq_beta for x0 in (0.3, 0.45, 0.49, 0.499)]
    assert all(a <= b for a, b in zip(f, f[1:]))
    assert f[-1] >= 0.97


def test_exit_precondition(logistic):
    with pytest.raises(DomainError):
        exit_event_stats(logistic, 0.2, 0.6, 0.5, SimConfig(n_paths=10))


# --- histograms and Fleming-Viot -------------------------------------------------------------


def test_histogram_mass_and_tv():
    edges = tv_edges(10.0)
    assert edges.size == 201 and edges[0] == 0.0
    s = np.array([0.0, 0.0, 0.5, 1e-7, 20.0])
    p0, p = histogram(s, edges)
    assert p0 == pytest.approx(0.4) and p0 + p.sum() == pytest.approx(1.0)
    assert tv_distance(p0, p, p0, p) == 0.0
    assert tv_distance(1.0, np.zeros_like(p), 0.0, p / p.sum()) == pytest.approx(1.0)


def test_fv_mass_and_positivity(fv01):
    assert abs(fv_bin_masses(fv01).sum() - 1.0) <= 1e-8
    assert abs(fv01.mass - 1.0) <= 1e-8


def test_fv_matches_spectral_qsd(logistic, fv01):
    res = sp.spectral_solve(logistic, 0.1, 2)
    edges = tv_edges(fv01.grid.grading["x_max"])
    q = sp.qsd_bin_masses(res, edges)
    assert tv_distance(0.0, fv_bin_masses(fv01), 0.0, q) <= 0.05


def test_fv_rebirth_rate(logistic, fv01):
    lam = float(sp.extinction_rate(logistic, 0.1))
    assert fv01.meta["rebirth_rate"] == pytest.approx(lam * 5000, rel=0.15)


def test_fv_particle_count_convergence(logistic):
    cfg = SimConfig(seed=41)
    a = empirical_qsd_fv(logistic, 0.1, 2000, 20.0, 100.0, cfg)
    b = empirical_qsd_fv(logistic, 0.1, 8000, 20.0, 100.0, cfg)
    assert tv_distance(0.0, fv_bin_masses(a), 0.0, fv_bin_masses(b)) <= 0.03


def test_fv_system_states_positive(logistic):
    _, system = empirical_qsd_fv(logistic, 0.1, 1000, 1.0, 1.0, SimConfig(seed=43), return_system=True)
    assert system.n == 1000 and np.all(system.states > 0)


def test_fv_needs_particles(logistic):
    with pytest.raises(DomainError):
        empirical_qsd_fv(logistic, 0.1, 100, 1.0, 1.0)


# --- multiscale ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def multiscale(logistic):
    res = sp.spectral_solve(logistic, 0.1, 2)
    l1, l2 = res.lambdas
    times = [0.0, 3 / l2, 0.1 / l1, 5 / l1]
    return res, multiscale_tv_check(logistic, 0.1, 1.0, times, SimConfig(n_paths=5000, seed=47), spectral=res)


def test_multiscale_initial_condition(multiscale):
    res, rep = multiscale
    edges = tv_edges(res.problem.transform.x_max)
    q = sp.qsd_bin_masses(res, edges)
    a = rep.alpha1_x0
    j = np.searchsorted(edges, 1.0, side="right") - 1
    expected = 0.5 * (abs(1 - a) + abs(1 - a * q[j]) + a * (q.sum() - q[j]))
    assert rep.tv_reference[0] == pytest.approx(expected, abs=1e-12)
    assert rep.survival[0] == 1.0


def test_multiscale_metastable_window(multiscale):
    _, rep = multiscale
    assert np.all(rep.tv_qsd[1:3] <= 0.1)
    assert np.all(rep.tv_reference[1:3] <= 0.1)


def test_multiscale_long_time_extinction(multiscale):
    _, rep = multiscale
    assert rep.tv_delta0[3] <= 0.1
    assert np.all(rep.bound == np.exp(-rep.lambda2 * rep.times))
