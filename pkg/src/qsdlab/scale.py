"""Scale function, r-function, exit probabilities and mean exit times.

For the exit problem from ``(0, beta)`` started inside, with reference
point ``x_star``, define (all integrals of ``b/alpha_eps``)

    s(x) = int_{x*}^x exp(-2 int_{x*}^y b/alpha) dy
    r(x) = int_{x*}^x exp(-2 int_{x*}^y b/alpha) int_{x*}^y exp(2 int_{x*}^z b/alpha) / alpha(z) dz dy

Then ``P_x[exit at beta] = (s(x) - s(0+)) / (s(beta) - s(0+))`` and the mean
exit time ``u(x) = E_x[tau]`` solves ``0.5*alpha*u'' + b*u' = -1`` with
``u(0) = u(beta) = 0``.  Both the closed formula and a finite-difference
solve of the boundary-value problem are provided so that they can be
cross-checked.

All nested integrals are evaluated with tabulated Gauss-Legendre
antiderivatives in ``ln x`` (see :mod:`qsdlab._quadrature`).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from ._quadrature import LogAntiderivative, gauss_legendre
from .density import X_FLOOR, Potential, alpha_eps, default_x_max
from .errors import DomainError, NumericalError
from .model import Model, kappa_exponent


@dataclass(frozen=True)
class ScaleContext:
    """Exit-problem setup: model, ``eps`` and the points ``0 < x_star < beta <= 1``."""

    model: Model
    eps: float
    x_star: float = 0.25
    beta: float = 0.5

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("ScaleContext requires eps > 0")
        if not (0.0 < self.x_star < self.beta <= 1.0):
            raise DomainError("ScaleContext requires 0 < x_star < beta <= 1")


class _ScaleTables:
    """Tabulated s, r and the inner integral M on ``[X_FLOOR, beta]``."""

    def __init__(self, ctx: ScaleContext):
        self.ctx = ctx
        model, eps, xs, beta = ctx.model, ctx.eps, ctx.x_star, ctx.beta
        pot = Potential(model, eps, x_hi=max(1.0, beta), x_lo=X_FLOOR)
        v_star = float(pot.V(xs))
        self.pot = pot

        def log_sp(y):
            return 2.0 * (pot.V(y) - v_star)

        def sp(y):  # s'(y)
            return np.exp(log_sp(y))

        def m(z):  # exp(2 int b/alpha)/alpha = 1/(alpha*s')
            return np.exp(-log_sp(z) - np.log(alpha_eps(model, eps, z)))

        self.sp, self.m = sp, m
        self.S = LogAntiderivative(sp, X_FLOOR, beta, xs)
        self.M = LogAntiderivative(m, X_FLOOR, beta, xs)
        self.R = LogAntiderivative(lambda y: sp(y) * self.M(y), X_FLOOR, beta, xs)
        lo = np.array([X_FLOOR])
        self.s0 = float(self.S(lo)[0] - sp(lo)[0] * X_FLOOR)
        self.r0 = float(self.R(lo)[0] - (sp(lo) * self.M(lo))[0] * X_FLOOR)
        self.s_beta = float(self.S(beta))
        self.r_beta = float(self.R(beta))


@functools.lru_cache(maxsize=64)
def _tables(ctx: ScaleContext) -> _ScaleTables:
    return _ScaleTables(ctx)


def _check_x(ctx: ScaleContext, x, closed_right=True):
    x = np.asarray(x, dtype=float)
    hi_ok = x <= ctx.beta if closed_right else x < ctx.beta
    if np.any(x <= 0) or not np.all(hi_ok):
        raise DomainError(f"x must lie in (0, {ctx.beta:g}{']' if closed_right else ')'}")
    return x


def _at(F, ctx: ScaleContext, x):
    x = _check_x(ctx, x)
    xc = np.maximum(x, X_FLOOR)
    return F(xc)


def scale_function(ctx: ScaleContext, x):
    """``s_eps(x)`` for ``x`` in ``(0, beta]``; ``s_eps(x_star) = 0``."""
    return _at(_tables(ctx).S, ctx, x)


def r_function(ctx: ScaleContext, x):
    """``r_eps(x)`` for ``x`` in ``(0, beta]``; ``r_eps(x_star) = 0``."""
    return _at(_tables(ctx).R, ctx, x)


def scale_at_zero(ctx: ScaleContext) -> float:
    """``s_eps(0+)`` (finite and negative)."""
    return _tables(ctx).s0


def r_at_zero(ctx: ScaleContext) -> float:
    """``r_eps(0+)`` (finite and positive)."""
    return _tables(ctx).r0


@dataclass(frozen=True)
class ExitSolution:
    """Tabulated ``s`` and ``r`` on ``(0, beta]`` with their limits at ``0+``."""

    ctx: ScaleContext
    x: np.ndarray
    s_at: np.ndarray
    r_at: np.ndarray
    s0_plus: float
    r0_plus: float

    def header(self) -> dict:
        c = self.ctx
        return {"table": "scale", "model": c.model.name, "eps": repr(float(c.eps)),
                "x_star": c.x_star, "beta": c.beta, "s0_plus": repr(self.s0_plus),
                "r0_plus": repr(self.r0_plus)}

    def rows(self):
        return zip(self.x, self.s_at, self.r_at)


def exit_solution(ctx: ScaleContext, n: int = 400) -> ExitSolution:
    """Tabulate ``s`` and ``r`` on a log-graded grid over ``(0, beta]``.

    The grid contains ``x_star`` exactly.
    """
    t = _tables(ctx)
    x = np.unique(np.concatenate((np.geomspace(1e-10, ctx.beta, n), [ctx.x_star])))
    return ExitSolution(ctx, x, t.S(x), t.R(x), t.s0, t.r0)


def exit_prob_beta(ctx: ScaleContext, x):
    """Probability that the process started at ``x`` leaves ``(0, beta)`` through ``beta``."""
    t = _tables(ctx)
    s = scale_function(ctx, x)
    return (s - t.s0) / (t.s_beta - t.s0)


def mean_exit_time(ctx: ScaleContext, x):
    """Mean exit time from ``(0, beta)`` started at ``x``, by the scale formula.

    ``u(x) = -2 r(x) + 2 (s(x) - s(0+)) r(beta) / D + 2 (s(beta) - s(x)) r(0+) / D``
    with ``D = s(beta) - s(0+)``.
    """
    t = _tables(ctx)
    s, r = scale_function(ctx, x), r_function(ctx, x)
    d = t.s_beta - t.s0
    return -2.0 * r + 2.0 * (s - t.s0) / d * t.r_beta + 2.0 * (t.s_beta - s) / d * t.r0


def mean_exit_time_xstar(ctx: ScaleContext) -> float:
    """Mean exit time from ``(0, beta)`` started at ``x_star``.

    ``2 [r(0+) s(beta) - r(beta) s(0+)] / (s(beta) - s(0+))``.
    """
    t = _tables(ctx)
    return 2.0 * (t.r0 * t.s_beta - t.r_beta * t.s0) / (t.s_beta - t.s0)


@dataclass(frozen=True)
class BVPSolution:
    """Finite-difference solution of the mean-exit-time problem."""

    x: np.ndarray
    u: np.ndarray

    def __call__(self, x):
        from scipy.interpolate import CubicSpline

        return CubicSpline(self.x, self.u)(x)


def _bvp_grid(ctx: ScaleContext, n: int) -> np.ndarray:
    n_log = int(0.6 * n)
    n_uni = n - n_log
    left = np.geomspace(1e-12, ctx.x_star, n_log)
    right = np.linspace(ctx.x_star, ctx.beta, n_uni + 1)[1:]
    return np.concatenate(([0.0], left, right))


def mean_exit_time_bvp(ctx: ScaleContext, x_eval=None, n: int = 6000) -> BVPSolution:
    """Solve ``0.5*alpha*u'' + b*u' = -1``, ``u(0) = u(beta) = 0`` by finite differences.

    The operator is written in flux form ``(p u')' = -2 p/alpha`` with
    ``p = exp(2 int_{x*} b/alpha)``, discretized by the standard
    three-point conservative stencil on a graded grid (geometric near 0,
    uniform on ``[x_star, beta]``).  The load on each dual cell is
    integrated by Gauss-Legendre in ``ln x``, which absorbs the ``1/x``
    behaviour of ``p/alpha`` at the degenerate end.  ``u(0) = 0`` is
    imposed directly.

    Parameters
    ----------
    x_eval : array_like, optional
        If given, the solution is returned on these points (cubic
        interpolation); otherwise on the solver grid.
    n : int
        Number of grid nodes (at least 4000).
    """
    if n < 4000:
        raise ValueError("the BVP grid needs at least 4000 nodes")
    model, eps = ctx.model, ctx.eps
    pot = Potential(model, eps, x_hi=max(1.0, ctx.beta), x_lo=X_FLOOR)
    v_star = float(pot.V(ctx.x_star))
    x = _bvp_grid(ctx, n)

    def log_p(y):
        return -2.0 * (pot.V(y) - v_star)

    h = np.diff(x)
    xm = 0.5 * (x[:-1] + x[1:])
    pm = np.exp(log_p(xm))
    # dual-cell loads int 2 p/alpha over [xm_{i-1}, xm_i], in ln x
    t, w = gauss_legendre(12)
    lo, hi = np.log(xm[:-1]), np.log(xm[1:])
    uu = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    yy = np.exp(uu)
    f = 2.0 * np.exp(log_p(yy)) / alpha_eps(model, eps, yy) * yy
    load = (f * w).sum(axis=1) * (hi - lo)
    # the first dual cell starts at 0: add int_0^{xm_0} by the same rule from X_FLOOR
    u0 = np.log(X_FLOOR)
    uu0 = u0 + (lo[0] - u0) * t
    yy0 = np.exp(uu0)
    load[0] += float((2.0 * np.exp(log_p(yy0)) / alpha_eps(model, eps, yy0) * yy0 * w).sum() * (lo[0] - u0))
    c = pm / h  # flux coefficients
    diag = -(c[:-1] + c[1:])
    A = sparse.diags([c[1:-1], diag, c[1:-1]], [-1, 0, 1], format="csc")
    try:
        u_int = splinalg.spsolve(A, -load)
    except RuntimeError as exc:  # pragma: no cover - singular matrix
        raise NumericalError(f"mean-exit-time BVP system is singular: {exc}") from exc
    if not np.all(np.isfinite(u_int)):
        raise NumericalError("mean-exit-time BVP produced non-finite values")
    u = np.concatenate(([0.0], u_int, [0.0]))
    sol = BVPSolution(x, u)
    if x_eval is None:
        return sol
    xe = np.asarray(x_eval, dtype=float)
    return BVPSolution(xe, sol(xe))


# ---------------------------------------------------------------------------
# Hitting times from above and the mean extinction time
# ---------------------------------------------------------------------------


class _ExtinctionTables:
    """``E_x[T_0] = 2 int_0^x e^{2V(y)} int_y^inf u^G(z) dz dy`` on ``(0, x_hi]``."""

    def __init__(self, model: Model, eps: float, x_hi: float, x_max: float | None = None):
        if x_max is None:
            x_max = default_x_max(model, eps) * 2.0
        x_max = max(x_max, 2.0 * x_hi)
        pot = Potential(model, eps, x_hi=x_max, x_lo=X_FLOOR)
        self.pot = pot
        ug = lambda z: np.exp(pot.log_gibbs(z))  # noqa: E731
        tail = LogAntiderivative(ug, X_FLOOR, x_max, x_max)  # = -int_x^{x_max} u^G
        self.tail = lambda y: -tail(y)
        self.integrand = lambda y: 2.0 * np.exp(2.0 * pot.V(y)) * self.tail(y)
        self.T = LogAntiderivative(self.integrand, X_FLOOR, x_hi, X_FLOOR)
        self.x_hi = x_hi

    def __call__(self, x):
        lo = np.array([X_FLOOR])
        return self.T(x) + float(self.integrand(lo)[0]) * X_FLOOR


@functools.lru_cache(maxsize=64)
def _ext_tables(model: Model, eps: float, x_hi: float) -> _ExtinctionTables:
    return _ExtinctionTables(model, eps, x_hi)


def mean_extinction_time(model: Model, eps: float, x0):
    """Exact mean extinction time ``E_x0[T_0]`` by quadrature of the speed measure.

    Uses the entrance-at-infinity formula
    ``E_x[T_0] = 2 int_0^x e^{2V(y)} int_y^inf u_eps^G(z) dz dy``.
    """
    if not eps > 0:
        raise DomainError("mean_extinction_time requires eps > 0")
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 <= 0):
        raise DomainError("x0 must be positive")
    hi = float(max(1.0, np.max(x0)))
    return _ext_tables(model, float(eps), hi)(x0)


def mean_hitting_time_below(model: Model, eps: float, x, level: float):
    """``E_x[tau_level]`` for ``x >= level``: mean time to descend to ``level``."""
    if not 0 < level:
        raise DomainError("level must be positive")
    x = np.asarray(x, dtype=float)
    if np.any(x < level):
        raise DomainError("x must be at least the level")
    hi = float(max(1.0, np.max(x)))
    tab = _ext_tables(model, float(eps), hi)
    return tab.T(x) - tab.T(np.array([level]))[0]


def renewal_mean_extinction_time(ctx: ScaleContext, x0: float) -> float:
    """Mean extinction time assembled from exit-problem pieces.

    From ``x_star`` the process exits ``(0, beta)`` after mean time
    ``E[tau]``; with probability ``p`` it exits at ``beta``, returns to
    ``x_star`` and starts afresh.  Hence
    ``E_{x*}[T_0] = (E[tau] + p E_beta[tau_{x*}]) / (1 - p)``.  A start
    ``x0 >= x_star`` first descends to ``x_star``; a start below uses the
    exit formula at ``x0`` plus the renewal from ``beta``.
    """
    model, eps, xs, beta = ctx.model, ctx.eps, ctx.x_star, ctx.beta
    p = float(exit_prob_beta(ctx, xs))
    e_tau = mean_exit_time_xstar(ctx)
    e_back = float(mean_hitting_time_below(model, eps, beta, xs))
    e_star = (e_tau + p * e_back) / (1.0 - p)
    if x0 >= xs:
        return float(mean_hitting_time_below(model, eps, x0, xs)) + e_star
    px = float(exit_prob_beta(ctx, x0))
    return float(mean_exit_time(ctx, x0)) + px * (e_back + e_star)


def kappa_pm(model: Model) -> tuple[float, float]:
    """``(kappa_minus, kappa_plus)`` with the comparison band set to zero."""
    k = kappa_exponent(model)
    return k, k


__all__ = [
    "ScaleContext", "ExitSolution", "BVPSolution", "scale_function", "r_function", "scale_at_zero",
    "r_at_zero", "exit_solution", "exit_prob_beta", "mean_exit_time", "mean_exit_time_xstar",
    "mean_exit_time_bvp", "mean_extinction_time", "mean_hitting_time_below",
    "renewal_mean_extinction_time", "kappa_pm",
]

