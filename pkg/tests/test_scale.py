import numpy as np
import pytest
from scipy.integrate import cumulative_simpson

from qsdlab.errors import DomainError
from qsdlab.fitting import ols_fit
from qsdlab.scale import (ScaleContext, exit_prob_beta, exit_solution, kappa_pm, mean_exit_time,
                          mean_exit_time_bvp, mean_exit_time_xstar, mean_extinction_time, r_at_zero, r_function,
                          renewal_mean_extinction_time, scale_at_zero, scale_function)

LADDER_NEG = np.geomspace(0.1, 1e-3, 6)


def _closed_form_oracle(eps, x_star, n=1_000_000):
    """s(0+) and r(0+) for logistic(1,1,1,1) from the closed-form inner integral.

    For this model b/alpha = (1 - y)/(eps^2 + y), so
    s'(y) = ((eps^2 + y)/(eps^2 + x*))^(-2(1 + eps^2)) exp(2(y - x*)).
    The outer integrals use composite Simpson in u = ln y with 10^6 nodes.
    """
    e2 = eps**2
    u = np.linspace(np.log(1e-22), np.log(x_star), n)
    y = np.exp(u)
    sp = ((e2 + y) / (e2 + x_star)) ** (-2 * (1 + e2)) * np.exp(2 * (y - x_star))
    alpha = e2 * y + y**2
    m = 1.0 / (alpha * sp)
    cm = cumulative_simpson(m * y, x=u, initial=0.0)
    m_above = cm[-1] - cm  # int_y^{x*} m
    s0 = -cumulative_simpson(sp * y, x=u, initial=0.0)[-1]
    r0 = cumulative_simpson(sp * m_above * y, x=u, initial=0.0)[-1]
    return s0, r0


def test_context_validation(logistic):
    with pytest.raises(DomainError):
        ScaleContext(logistic, 0.0)
    with pytest.raises(DomainError):
        ScaleContext(logistic, 0.1, x_star=0.6, beta=0.5)


def test_values_at_anchor(logistic):
    ctx = ScaleContext(logistic, 0.1)
    assert scale_function(ctx, ctx.x_star) == pytest.approx(0.0, abs=1e-14)
    assert r_function(ctx, ctx.x_star) == pytest.approx(0.0, abs=1e-14)


def test_s0_and_r0_against_closed_form_oracle(logistic):
    ctx = ScaleContext(logistic, 0.1, x_star=0.1, beta=0.5)
    s0, r0 = _closed_form_oracle(0.1, 0.1)
    assert scale_at_zero(ctx) < 0 and r_at_zero(ctx) > 0
    assert scale_at_zero(ctx) == pytest.approx(s0, rel=1e-6)
    assert r_at_zero(ctx) == pytest.approx(r0, rel=1e-6)


def test_exit_solution_invariants(logistic):
    sol = exit_solution(ScaleContext(logistic, 0.1))
    assert np.all(np.diff(sol.s_at) > 0)
    assert sol.s0_plus < 0 < sol.r0_plus
    assert 0.25 in sol.x
    assert list(sol.header())[0] == "table"


def test_exit_probability_properties(logistic):
    ctx = ScaleContext(logistic, 0.2)
    assert exit_prob_beta(ctx, ctx.beta) == pytest.approx(1.0, abs=1e-14)
    x = np.linspace(1e-3, ctx.beta, 50)
    p = exit_prob_beta(ctx, x)
    assert np.all((p >= 0) & (p <= 1)) and np.all(np.diff(p) >= 0)
    assert exit_prob_beta(ctx, 1e-12) < 1e-6


def test_anchor_invariance(logistic):
    a, b = ScaleContext(logistic, 0.1, x_star=0.25), ScaleContext(logistic, 0.1, x_star=0.1)
    x = np.linspace(0.01, 0.5, 20)
    assert np.max(np.abs(exit_prob_beta(a, x) - exit_prob_beta(b, x))) <= 1e-8
    # s_a = c * s_b + d
    sa, sb = scale_function(a, x), scale_function(b, x)
    c, d = np.polyfit(sb, sa, 1)
    assert np.max(np.abs(c * sb + d - sa)) <= 1e-9 * np.max(np.abs(sa))


@pytest.mark.parametrize("mu,eps", [(1.0, 0.2), (1.0, 0.05), (0.3, 0.05), (0.3, 0.01)])
def test_formula_matches_bvp(mu, eps):
    from qsdlab.model import build_logistic

    ctx = ScaleContext(build_logistic(mu, 1, 1, 1), eps)
    f = mean_exit_time_xstar(ctx)
    u = mean_exit_time_bvp(ctx, [ctx.x_star]).u[0]
    assert abs(u - f) / f <= 1e-4
    x = np.linspace(0.01, 0.49, 7)
    assert np.allclose(mean_exit_time(ctx, x), mean_exit_time_bvp(ctx, x).u, rtol=1e-4)


def test_bvp_boundary_conditions(logistic):
    ctx = ScaleContext(logistic, 0.1)
    sol = mean_exit_time_bvp(ctx)
    assert sol.x[0] == 0.0 and sol.u[0] == 0.0
    assert sol.x[-1] == ctx.beta and sol.u[-1] == 0.0
    assert sol.u.max() > 0 and np.all(sol.u[1:-1] > 0)
    with pytest.raises(ValueError):
        mean_exit_time_bvp(ctx, n=1000)


def test_scale_at_zero_growth(logistic):
    # -s(0+) ~ eps^{-2(kappa-1)} = eps^-2 for logistic(1,1,1,1)
    k_minus, _ = kappa_pm(logistic)
    e = np.array([0.05, 0.025, 0.0125])
    s0 = np.array([-scale_at_zero(ScaleContext(logistic, x)) for x in e])
    fit = ols_fit(np.log(e), np.log(s0), "s0", expected_slope=-2 * (k_minus - 1), tolerance=0.1)
    assert fit.passed


def test_non_exit_probability_decay(logistic):
    # 1 - P[exit at beta] = O(eps^{2(kappa-1)}) = O(eps^2)
    e = np.array([0.05, 0.025, 0.0125])
    q = np.array([1 - exit_prob_beta(ScaleContext(logistic, x), 0.25) for x in e])
    assert ols_fit(np.log(e), np.log(q), "q", expected_slope=2.0, tolerance=0.1).passed


def test_negative_growth_logarithmic_scalings(logistic_neg):
    r0 = [r_at_zero(ScaleContext(logistic_neg, e)) for e in LADDER_NEG]
    t = [mean_exit_time_xstar(ScaleContext(logistic_neg, e)) for e in LADDER_NEG]
    x = np.abs(np.log(LADDER_NEG))
    assert ols_fit(x, r0, "r0", r2_min=0.97).r2_ok
    fit = ols_fit(x, t, "tau", r2_min=0.97)
    assert fit.r2_ok and fit.slope > 0


def test_positive_growth_exit_time_bounded_below(logistic):
    t = [mean_exit_time_xstar(ScaleContext(logistic, e)) for e in (0.4, 0.2, 0.1, 0.05, 0.02, 0.01)]
    assert min(t) > 0.5
    assert min(t) == t[0]


@pytest.mark.parametrize("eps", [0.2, 0.1])
def test_renewal_assembly_matches_exact_mean(logistic, eps):
    ctx = ScaleContext(logistic, eps)
    exact = float(mean_extinction_time(logistic, eps, 1.0))
    assert renewal_mean_extinction_time(ctx, 1.0) == pytest.approx(exact, rel=1e-5)
    assert renewal_mean_extinction_time(ctx, 0.1) == pytest.approx(float(mean_extinction_time(logistic, eps, 0.1)),
                                                                   rel=1e-5)


def test_mean_extinction_reference_values(logistic):
    assert float(mean_extinction_time(logistic, 0.2, 1.0)) == pytest.approx(32.406, rel=1e-4)
    assert float(mean_extinction_time(logistic, 0.1, 1.0)) == pytest.approx(111.566, rel=1e-4)


def test_domain_errors(logistic):
    ctx = ScaleContext(logistic, 0.1)
    with pytest.raises(DomainError):
        scale_function(ctx, 0.0)
    with pytest.raises(DomainError):
        r_function(ctx, 0.6)
    with pytest.raises(DomainError):
        mean_extinction_time(logistic, 0.0, 1.0)
