"""Spectral numerics in the Liouville variable.

The generator of the absorbed diffusion is unitarily equivalent to the
Schroedinger operator ``-0.5 d^2/dy^2 + W(y)`` under the change of
variable ``y = xi(x) = int_0^x alpha_eps^{-1/2}``.  The potential has the
closed form

    2 W(xi(x)) = 3 alpha'^2 / (16 alpha) - alpha''/4 + b' - b alpha'/alpha + b^2/alpha

and blows up at both ends, so a Dirichlet truncation of the ``y``-line is
accurate.  Eigenvalues come from the symmetric tridiagonal three-point
discretization (LAPACK bisection plus inverse iteration), extrapolated
across two resolutions.  Eigenfunctions are mapped back to ``x`` through
the unitary weight ``v(y) = u^G(x) sqrt(alpha(x))``:
``phi = psi / sqrt(v)`` and the quasi-stationary density in ``y`` is
proportional to ``psi_1 sqrt(v)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from ._quadrature import PanelAntiderivative
from .density import (DensityTable, Grid, Potential, X_FLOOR, alpha_d1, alpha_d2, alpha_eps,
                      default_x_max, make_grid)
from .errors import DomainError, TruncationError
from .model import Model, stochastic_growth_rate

#: Left truncation point of the spectral domain, in x.
X_MIN = 1e-8


# ---------------------------------------------------------------------------
# Liouville transform
# ---------------------------------------------------------------------------


class Transform:
    """The map ``xi(x) = int_0^x alpha_eps(s)^{-1/2} ds`` and its inverse.

    ``xi`` is tabulated in ``t = sqrt(x)``, where the integrand
    ``2 t / sqrt(alpha(t^2))`` is bounded, as a Gauss-Legendre
    antiderivative on a geometrically graded panel grid.  The inverse is
    found per point by a bracketed Newton iteration that falls back to
    bisection whenever a step leaves the current bracket.
    """

    def __init__(self, model: Model, eps: float, x_max: float, n_panels: int = 3000):
        if not eps > 0:
            raise DomainError("xi_0(0+) = -inf; environmental-only transform out of scope")
        self.model, self.eps, self.x_max = model, float(eps), float(x_max)
        t_max = math.sqrt(self.x_max)
        knots = np.concatenate(([0.0], np.geomspace(1e-9, t_max, n_panels)))
        self._g = lambda t: self._dxi_dt(t)
        self._F = PanelAntiderivative(self._g, knots, 0.0)
        self.y_max = float(self._F.values[-1])

    def _dxi_dt(self, t):
        t = np.asarray(t, dtype=float)
        x = t * t
        with np.errstate(invalid="ignore", divide="ignore"):
            r = alpha_eps(self.model, self.eps, x) / np.where(x > 0, x, 1.0)
        # alpha(x)/x -> eps^2 a'(0) + sigma'(0)^2 x at the origin
        r0 = self.eps**2 * self.model.a_d1_0
        r = np.where(x > 0, r, r0)
        return 2.0 / np.sqrt(r)

    def xi(self, x):
        """Forward map; ``xi(0) = 0``."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > self.x_max * (1 + 1e-12)):
            raise DomainError(f"xi is tabulated on [0, {self.x_max:g}]")
        return self._F(np.sqrt(np.minimum(x, self.x_max)))

    def xi_inv(self, y, tol: float = 1e-15, max_iter: int = 100):
        """Inverse map by safeguarded Newton iteration in ``t = sqrt(x)``."""
        y = np.asarray(y, dtype=float)
        shape = y.shape
        y = y.ravel()
        if np.any(y < 0) or np.any(y > self.y_max * (1 + 1e-12)):
            raise DomainError(f"xi_inv is defined on [0, {self.y_max:g}]")
        knots, vals = self._F.knots, self._F.values
        k = np.clip(np.searchsorted(vals, y, side="right") - 1, 0, len(knots) - 2)
        lo, hi = knots[k].copy(), knots[k + 1].copy()
        t = 0.5 * (lo + hi)
        active = np.ones(y.size, dtype=bool)
        for _ in range(max_iter):
            if not active.any():
                break
            ta = t[active]
            f = self._F(ta) - y[active]
            g = self._g(ta)
            lo_a, hi_a = lo[active], hi[active]
            lo_a = np.where(f < 0, ta, lo_a)
            hi_a = np.where(f > 0, ta, hi_a)
            step = ta - f / g
            bad = (step <= lo_a) | (step >= hi_a) | ~np.isfinite(step)
            new = np.where(bad, 0.5 * (lo_a + hi_a), step)
            done = (np.abs(new - ta) <= tol * np.maximum(ta, 1e-300)) | (f == 0) | (hi_a - lo_a <= tol * hi_a)
            t[active] = new
            lo[active], hi[active] = lo_a, hi_a
            idx = np.flatnonzero(active)
            active[idx[done]] = False
        out = t * t
        return out.reshape(shape) if shape else out[0]


@functools.lru_cache(maxsize=32)
def build_transform(model: Model, eps: float, x_max: float | None = None) -> Transform:
    """Tabulate the Liouville transform up to ``x_max`` (default: Gibbs-tail rule)."""
    if x_max is None:
        x_max = default_x_max(model, eps)
    return Transform(model, eps, x_max)


def schrodinger_potential(model: Model, eps: float, x):
    """``W_eps(xi(x))`` from the closed form in the coefficients and their derivatives."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("schrodinger_potential requires x > 0")
    A, A1, A2 = alpha_eps(model, eps, x), alpha_d1(model, eps, x), alpha_d2(model, eps, x)
    B, B1 = model.b.eval(x), model.b.d1(x)
    return 0.5 * (3.0 * A1**2 / (16.0 * A) - 0.25 * A2 + B1 - B * A1 / A + B**2 / A)


# ---------------------------------------------------------------------------
# Schroedinger problem and eigen-solve
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SchrodingerProblem:
    """Dirichlet problem ``-0.5 psi'' + W psi = lambda psi`` on ``[y_lo, y_hi]``.

    ``y_grid`` holds the ``n`` interior nodes of a uniform grid with
    spacing ``h = (y_hi - y_lo)/(n + 1)``.  For problems built from a model,
    ``x_grid`` holds ``xi^{-1}(y_grid)`` and ``log_v`` the log unitary weight.
    """

    y_lo: float
    y_hi: float
    n: int
    potential: Callable[[np.ndarray], tuple]
    y_grid: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    model: Model | None = None
    eps: float | None = None
    transform: Transform | None = None
    x_grid: np.ndarray | None = field(default=None, repr=False)
    log_v: np.ndarray | None = field(default=None, repr=False)
    hard_walls: bool = False

    @property
    def h(self) -> float:
        return (self.y_hi - self.y_lo) / (self.n + 1)

    def refined(self) -> "SchrodingerProblem":
        """The same problem with the spacing halved (``2n + 1`` interior nodes)."""
        return _make_problem(self.y_lo, self.y_hi, 2 * self.n + 1, self.potential,
                             self.model, self.eps, self.transform, self.hard_walls)


def _make_problem(y_lo, y_hi, n, potential, model=None, eps=None, transform=None, hard_walls=False):
    y = y_lo + (y_hi - y_lo) / (n + 1) * np.arange(1, n + 1)
    W, x, log_v = potential(y)
    return SchrodingerProblem(float(y_lo), float(y_hi), int(n), potential, y, W, model, eps, transform, x, log_v,
                              hard_walls)


def problem_from_potential(W: Callable[[np.ndarray], np.ndarray], y_lo: float, y_hi: float,
                           n: int = 4000, hard_walls: bool = False) -> SchrodingerProblem:
    """A problem with an explicitly given potential (used for oracle checks).

    ``hard_walls=True`` declares the Dirichlet ends part of the problem
    (a box), which disables the truncation check.
    """
    return _make_problem(y_lo, y_hi, n, lambda y: (np.asarray(W(y), dtype=float), None, None),
                         hard_walls=hard_walls)


#: Exact low eigenvalues of the oracle problems.
ORACLE_EXACT = {"harmonic": (0.5, 1.5), "box": (0.5, 2.0)}


def oracle_problem(name: str, n: int = 4000) -> SchrodingerProblem:
    """Reference problems with known spectra.

    ``"harmonic"``: ``W = y^2/2`` on ``[-12, 12]`` (eigenvalues ``k + 1/2``);
    ``"box"``: ``W = 0`` on ``[0, pi]`` with hard walls (eigenvalues ``k^2/2``).
    """
    if name == "harmonic":
        return problem_from_potential(lambda y: 0.5 * y**2, -12.0, 12.0, n)
    if name == "box":
        return problem_from_potential(np.zeros_like, 0.0, math.pi, n, hard_walls=True)
    raise ValueError(f"unknown oracle {name!r}")


def build_problem(model: Model, eps: float, n: int = 4000, x_min: float = X_MIN,
                  x_max: float | None = None) -> SchrodingerProblem:
    """Discretization of the transformed generator for ``(model, eps)``.

    The ``y``-domain is ``[xi(x_min), xi(x_max)]``.
    """
    if n < 2000:
        raise ValueError("the spectral grid needs at least 2000 nodes")
    tr = build_transform(model, float(eps), x_max)
    pot = Potential(model, eps, x_hi=tr.x_max, x_lo=min(X_FLOOR, x_min))

    def potential(y):
        x = tr.xi_inv(y)
        W = schrodinger_potential(model, eps, x)
        log_v = pot.log_gibbs(x) + 0.5 * np.log(alpha_eps(model, eps, x))
        return W, x, log_v

    return _make_problem(float(tr.xi(x_min)), tr.y_max, n, potential, model, float(eps), tr)


@dataclass(frozen=True, eq=False)
class SpectralResult:
    """Eigenpairs of a Schroedinger problem.

    Attributes
    ----------
    lambdas : ndarray
        Richardson-extrapolated eigenvalues, ascending.
    lambdas_fine, lambdas_coarse : ndarray
        Raw eigenvalues on the grids with spacing ``h/2`` and ``h``.
    eigenfunctions : ndarray, shape (k, n)
        Eigenvectors on ``problem.y_grid`` (the fine grid), normalized so
        that ``h * sum(psi**2) = 1``.
    residuals : ndarray
        ``||(H - lambda) psi||`` in the discrete L2 norm, per pair.
    problem : SchrodingerProblem
        The fine-grid problem.
    """

    lambdas: np.ndarray
    lambdas_fine: np.ndarray
    lambdas_coarse: np.ndarray
    eigenfunctions: np.ndarray
    residuals: np.ndarray
    problem: SchrodingerProblem

    @property
    def k(self) -> int:
        return self.lambdas.size

    @property
    def y_grid(self) -> np.ndarray:
        return self.problem.y_grid

    @property
    def errors(self) -> np.ndarray:
        return np.abs(self.lambdas_fine - self.lambdas)

    @property
    def gap(self) -> float:
        return float(self.lambdas[1] - self.lambdas[0])

    def gram(self) -> np.ndarray:
        return self.problem.h * self.eigenfunctions @ self.eigenfunctions.T

    def summary(self) -> dict:
        p = self.problem
        out = {"lambda1": float(self.lambdas[0])}
        if self.k > 1:
            out["lambda2"] = float(self.lambdas[1])
            out["gap"] = self.gap
        out["lambda_error"] = [float(e) for e in self.errors]
        out["residuals"] = [float(r) for r in self.residuals]
        out["grid"] = {"N": int(p.n), "y_lo": p.y_lo, "y_hi": p.y_hi}
        if p.model is not None:
            out["model"] = p.model.name
            out["eps"] = p.eps
            out["x_max"] = p.transform.x_max
        return out

    def rows(self):
        psi2 = self.eigenfunctions[1] if self.k > 1 else np.zeros(self.y_grid.size)
        return zip(self.y_grid, self.eigenfunctions[0], psi2)


def _tridiagonal_eigs(prob: SchrodingerProblem, k: int):
    h = prob.h
    d = 1.0 / h**2 + prob.W
    e = np.full(prob.n - 1, -0.5 / h**2)
    w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1), lapack_driver="stebz")
    return w, v.T, d, e


def solve_eigen(problem: SchrodingerProblem, k: int = 2) -> SpectralResult:
    """Smallest ``k`` eigenpairs with second-order Richardson extrapolation.

    The given problem is solved together with its refinement (spacing
    ``h/2``); eigenvalues are extrapolated as ``(4 lambda_{h/2} - lambda_h)/3``
    and eigenvectors are taken from the fine grid.

    Raises
    ------
    TruncationError
        If ``W`` at the first or last interior node does not exceed ten times
        the second eigenvalue estimate.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if problem.n < 2000:
        raise ValueError("the spectral grid needs at least 2000 nodes")
    kk = max(k, 2)
    lam_c, _, _, _ = _tridiagonal_eigs(problem, kk)
    fine = problem.refined()
    lam_f, vecs, d, e = _tridiagonal_eigs(fine, kk)
    lam = (4.0 * lam_f - lam_c) / 3.0
    lam2 = lam[1]
    if not fine.hard_walls and not (fine.W[0] > 10.0 * lam2 and fine.W[-1] > 10.0 * lam2):
        raise TruncationError(
            f"truncation inadequate: W(y_lo)={fine.W[0]:.4g}, W(y_hi)={fine.W[-1]:.4g}, "
            f"lambda2~{lam2:.4g}; use a larger x_max or a smaller x_min")
    h = fine.h
    vecs = vecs / np.sqrt(h * (vecs**2).sum(axis=1))[:, None]
    mid = fine.n // 2
    for i in range(kk):
        if i == 0:
            sgn = np.sign(vecs[0, mid])
        else:
            # first node where the function is clearly nonzero
            j = int(np.argmax(np.abs(vecs[i]) > 1e-6 * np.abs(vecs[i]).max()))
            sgn = np.sign(vecs[i, j])
        vecs[i] *= sgn if sgn != 0 else 1.0
    res = np.empty(kk)
    for i in range(kk):
        v = vecs[i]
        hv = d * v
        hv[:-1] += e * v[1:]
        hv[1:] += e * v[:-1]
        res[i] = math.sqrt(h * np.sum((hv - lam_f[i] * v) ** 2))
    return SpectralResult(lam[:k], lam_f[:k], lam_c[:k], vecs[:k], res[:k], fine)


# ---------------------------------------------------------------------------
# Model-level wrappers
# ---------------------------------------------------------------------------


def _require_rate_regime(model: Model, eps: float):
    if not eps > 0:
        raise DomainError("eps must be positive")
    if stochastic_growth_rate(model) == 0.0:
        raise DomainError("Lambda0 = 0 is the critical case and is not supported")


@functools.lru_cache(maxsize=64)
def spectral_solve(model: Model, eps: float, k: int = 2, n: int = 4000,
                   x_max: float | None = None) -> SpectralResult:
    """Build and solve the transformed problem for ``(model, eps)`` (cached)."""
    _require_rate_regime(model, eps)
    return solve_eigen(build_problem(model, float(eps), n=n, x_max=x_max), k)


class ExtinctionRate(float):
    """A float carrying an extrapolation error estimate in ``.error``."""

    error: float
    lambda2: float

    def __new__(cls, value, error, lambda2):
        obj = super().__new__(cls, value)
        obj.error = float(error)
        obj.lambda2 = float(lambda2)
        return obj


def extinction_rate(model: Model, eps: float, n: int = 4000, x_max: float | None = None) -> ExtinctionRate:
    """Principal eigenvalue ``lambda_eps,1`` of the absorbed generator."""
    r = spectral_solve(model, float(eps), 2, n, x_max)
    return ExtinctionRate(r.lambdas[0], r.errors[0], r.lambdas[1])


def _model_problem(result: SpectralResult) -> SchrodingerProblem:
    p = result.problem
    if p.model is None:
        raise DomainError("operation needs a problem built from a model")
    return p


def _scaled_sqrt_v(p: SchrodingerProblem):
    lv = p.log_v
    shift = float(np.max(lv))
    return np.exp(0.5 * (lv - shift)), shift


def _psi_spline(result: SpectralResult, i: int) -> CubicSpline:
    p = result.problem
    y = np.concatenate(([p.y_lo], p.y_grid, [p.y_hi]))
    psi = np.concatenate(([0.0], result.eigenfunctions[i], [0.0]))
    return CubicSpline(y, psi)


def eigenfunction_x(result: SpectralResult, i: int, x) -> np.ndarray:
    """``phi_i(x) = psi_i(xi(x)) / sqrt(v(xi(x)))`` on the model's x-axis.

    The overall scale follows the internal normalization of ``v``; ratios
    and the sign pattern are meaningful, the scale is not.
    """
    p = _model_problem(result)
    x = np.asarray(x, dtype=float)
    y = p.transform.xi(np.clip(x, 0, p.transform.x_max))
    psi = np.where((y > p.y_lo) & (y < p.y_hi), _psi_spline(result, i)(y), 0.0)
    _, shift = _scaled_sqrt_v(p)
    pot = Potential(p.model, p.eps, x_hi=p.transform.x_max)
    lv = pot.log_gibbs(np.maximum(x, X_FLOOR)) + 0.5 * np.log(alpha_eps(p.model, p.eps, np.maximum(x, X_FLOOR)))
    return psi * np.exp(-0.5 * (lv - shift))


def alpha1(result: SpectralResult, x0: float) -> float:
    """``||phi_1||_{L1(u^G)} phi_1(x0)``, the weight of the QSD in the law started at ``x0``."""
    p = _model_problem(result)
    sv, _ = _scaled_sqrt_v(p)
    l1 = p.h * float(np.sum(result.eigenfunctions[0] * sv))
    return l1 * float(eigenfunction_x(result, 0, np.array([x0]))[0])


def fk_expansion(result: SpectralResult, f: Callable[[np.ndarray], np.ndarray], t: float, x0: float) -> float:
    """``sum_i exp(-lambda_i t) <f, phi_i> phi_i(x0)`` over the computed pairs.

    Approximates ``E_x0[f(X_t); t < T_0]``.
    """
    p = _model_problem(result)
    sv, _ = _scaled_sqrt_v(p)
    fx = np.asarray(f(p.x_grid), dtype=float)
    total = 0.0
    for i in range(result.k):
        coef = p.h * float(np.sum(fx * result.eigenfunctions[i] * sv))
        total += math.exp(-result.lambdas[i] * t) * coef * float(eigenfunction_x(result, i, np.array([x0]))[0])
    return total


@dataclass(frozen=True)
class QSDensity:
    """Quasi-stationary density ``u_eps`` on an x-grid, with its extinction rate."""

    table: DensityTable
    lambda1: float
    result: SpectralResult = field(repr=False)

    def bin_masses(self, edges) -> np.ndarray:
        """QSD mass of each interval ``[edges[j], edges[j+1]]`` (exact in y)."""
        return qsd_bin_masses(self.result, edges)

    def mass_below(self, x: float) -> float:
        return float(qsd_bin_masses(self.result, np.array([0.0, x]))[0])


def _qsd_cdf_y(result: SpectralResult):
    p = _model_problem(result)
    sv, _ = _scaled_sqrt_v(p)
    q = np.concatenate(([0.0], np.maximum(result.eigenfunctions[0], 0.0) * sv, [0.0]))
    y = np.concatenate(([p.y_lo], p.y_grid, [p.y_hi]))
    c = np.concatenate(([0.0], np.cumsum(0.5 * (q[1:] + q[:-1]) * np.diff(y))))
    return y, c / c[-1]


def qsd_bin_masses(result: SpectralResult, edges) -> np.ndarray:
    """QSD probabilities of the intervals defined by increasing ``edges``.

    Edges beyond ``x_max`` are clipped (the truncated tail carries no mass).
    """
    p = _model_problem(result)
    y, c = _qsd_cdf_y(result)
    e = np.clip(np.asarray(edges, dtype=float), 0.0, p.transform.x_max)
    ye = p.transform.xi(e)
    return np.diff(np.interp(ye, y, c))


def qsd_density(model: Model, eps: float, grid: Grid | None = None, n: int = 4000,
                x_max: float | None = None) -> QSDensity:
    """Quasi-stationary density ``u_eps = phi_1 u^G / ||phi_1||_{L1(u^G)}``.

    Computed in log-space as ``log psi_1 + log sqrt(v) - log sqrt(alpha)`` at
    ``y = xi(x)`` and normalized to unit mass by grid quadrature.
    """
    res = spectral_solve(model, float(eps), 2, n, x_max)
    p = res.problem
    if grid is None:
        grid = make_grid(p.transform.x_max, x_min=X_MIN)
    x = grid.nodes
    y = p.transform.xi(np.minimum(x, p.transform.x_max))
    psi = np.where((y > p.y_lo) & (y < p.y_hi), _psi_spline(res, 0)(y), 0.0)
    pot = Potential(model, eps, x_hi=p.transform.x_max)
    with np.errstate(divide="ignore"):
        lv = pot.log_gibbs(x) + 0.5 * np.log(alpha_eps(model, eps, x))
        logu = np.log(np.maximum(psi, 0.0)) + 0.5 * lv - 0.5 * np.log(alpha_eps(model, eps, x))
    logu = logu - np.max(logu[np.isfinite(logu)])
    meta = {"model": model.name, "eps": repr(float(eps)), "anchor": 1.0, "lambda1": repr(float(res.lambdas[0]))}
    table = DensityTable(grid, logu, False, "u_eps", meta).normalize()
    return QSDensity(table, float(res.lambdas[0]), res)


def rayleigh_quotient(model: Model, eps: float, phi, n: int = 4000, x_max: float | None = None) -> float:
    """``0.5 int alpha |phi'|^2 u^G / int phi^2 u^G`` for a test function ``phi``.

    ``phi`` is a vectorized callable of ``x`` or a ``(grid, values)`` pair
    (interpolated).  The integrals are taken on the fine spectral ``y``-grid,
    where they read ``0.5 int (d phi/dy)^2 v dy / int phi^2 v dy``; the
    derivative term uses a conservative difference with geometric-mean
    weights at the half nodes.
    """
    res = spectral_solve(model, float(eps), 2, n, x_max)
    p = res.problem
    if not callable(phi):
        g, vals = phi
        nodes = g.nodes if isinstance(g, Grid) else np.asarray(g, dtype=float)
        vals = np.asarray(vals, dtype=float)
        phi = lambda x, nodes=nodes, vals=vals: np.interp(x, nodes, vals, left=0.0, right=0.0)  # noqa: E731
    x = np.concatenate(([0.0], p.x_grid, [p.transform.x_max]))
    y = np.concatenate(([p.y_lo], p.y_grid, [p.y_hi]))
    f = np.asarray(phi(x), dtype=float)
    lv = np.concatenate(([p.log_v[0]], p.log_v, [p.log_v[-1]]))
    shift = float(np.max(lv))
    v = np.exp(lv - shift)
    v_half = np.exp(0.5 * (lv[1:] + lv[:-1]) - shift)
    dy = np.diff(y)
    num = 0.5 * np.sum((np.diff(f) / dy) ** 2 * v_half * dy)
    den = np.sum(0.5 * (f[1:] ** 2 * v[1:] + f[:-1] ** 2 * v[:-1]) * dy)
    if not den > 0:
        raise DomainError("test function has zero weighted norm")
    return float(num / den)


def ramp_test_function(eps: float, x_cut: float) -> Callable[[np.ndarray], np.ndarray]:
    """Non-decreasing ramp: 0 on ``(0, eps)``, 1 on ``(2 eps, x_cut)``, linear in between.

    Beyond ``x_cut`` it decreases linearly to 0 at ``2 x_cut``.
    """
    def phi(x):
        x = np.asarray(x, dtype=float)
        up = np.clip((x - eps) / eps, 0.0, 1.0)
        down = np.clip((2.0 * x_cut - x) / x_cut, 0.0, 1.0)
        return np.minimum(up, down)

    return phi
