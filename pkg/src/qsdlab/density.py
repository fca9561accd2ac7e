"""Gibbs densities, the potential and the stationary density.

All densities are held as log-values: the potential ``V_eps`` reaches
hundreds for small ``eps`` and ``exp(-2V)`` would overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import integrate

from ._quadrature import LogAntiderivative
from .errors import DomainError, QuadratureError
from .model import Model, stochastic_growth_rate

#: Anchor of the potential; part of the table file format.
ANCHOR = 1.0
#: Smallest x reached by tabulated antiderivatives.
X_FLOOR = 1e-14


def alpha_eps(model: Model, eps: float, x):
    """``alpha_eps(x) = eps**2 * a(x) + sigma(x)**2``."""
    x = np.asarray(x, dtype=float)
    return eps**2 * model.a.eval(x) + model.sigma.eval(x) ** 2


def alpha_d1(model: Model, eps: float, x):
    """First derivative of :func:`alpha_eps`."""
    x = np.asarray(x, dtype=float)
    return eps**2 * model.a.d1(x) + 2.0 * model.sigma.eval(x) * model.sigma.d1(x)


def alpha_d2(model: Model, eps: float, x):
    """Second derivative of :func:`alpha_eps`."""
    x = np.asarray(x, dtype=float)
    s, s1, s2 = model.sigma.eval(x), model.sigma.d1(x), model.sigma.d2(x)
    return eps**2 * model.a.d2(x) + 2.0 * (s1 * s1 + s * s2)


def _drift_ratio(model: Model, eps: float):
    def f(s):
        return model.b.eval(s) / alpha_eps(model, eps, s)
    return f


def potential_V(model: Model, eps: float, x, epsrel: float = 1e-10):
    """``V_eps(x) = -int_1^x b/alpha_eps ds`` by adaptive quadrature.

    The integral is taken in ``u = ln s``, where the integrand is bounded
    near the origin.

    Raises
    ------
    QuadratureError
        If the adaptive rule does not reach ``epsrel``.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0):
        raise DomainError("potential_V requires x > 0")
    f = _drift_ratio(model, eps)

    def g(u):
        s = math.exp(u)
        return float(f(np.array([s]))[0]) * s

    out = np.empty_like(xs)
    for i, xi in enumerate(xs):
        if xi == ANCHOR:
            out[i] = 0.0
            continue
        lo, hi = 0.0, math.log(xi)
        val, err, *rest = integrate.quad(g, lo, hi, epsabs=0.0, epsrel=epsrel, limit=200, full_output=1)
        if len(rest) > 1 and rest[1] and "roundoff" not in str(rest[1]) and err > 10 * epsrel * abs(val) + 1e-300:
            raise QuadratureError("potential quadrature did not converge", (min(xi, ANCHOR), max(xi, ANCHOR)))
        out[i] = -val
    return out[0] if np.ndim(x) == 0 else out


class Potential:
    """Tabulated potential ``V_eps`` and log Gibbs density on ``[x_lo, x_hi]``.

    A fast companion to :func:`potential_V` used whenever many evaluations
    are needed.  Built once per ``(model, eps)``.
    """

    def __init__(self, model: Model, eps: float, x_hi: float, x_lo: float = X_FLOOR):
        self.model, self.eps = model, float(eps)
        self.x_lo, self.x_hi = float(x_lo), float(max(x_hi, ANCHOR))
        self._F = LogAntiderivative(_drift_ratio(model, eps), self.x_lo, self.x_hi, ANCHOR)

    def V(self, x):
        return -self._F(x)

    def log_alpha(self, x):
        return np.log(alpha_eps(self.model, self.eps, x))

    def log_gibbs(self, x):
        """``log u_eps^G = -log alpha - 2V`` (``eps = 0`` gives ``u_0^G``)."""
        return -self.log_alpha(x) - 2.0 * self.V(x)


@dataclass(frozen=True)
class Grid:
    """Graded grid with composite quadrature weights.

    Nodes are log-spaced on ``[x_min, x_split]`` and uniform on
    ``[x_split, x_max]``.  Weights are composite Simpson in ``ln x`` on the
    graded part and composite Simpson in ``x`` on the bulk.
    """

    nodes: np.ndarray
    weights: np.ndarray
    grading: Mapping[str, float] = field(default_factory=dict)

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def describe(self) -> str:
        g = self.grading
        return (f"n={self.nodes.size};log[{g['x_min']:g},{g['x_split']:g}]x{int(g['n_log'])};"
                f"uniform[{g['x_split']:g},{g['x_max']:g}]x{int(g['n_uniform'])}")


def _simpson_weights(n_nodes: int, h: float) -> np.ndarray:
    """Composite Simpson weights on ``n_nodes`` equispaced nodes (3/8 tail if needed)."""
    m = n_nodes - 1
    if m < 2:
        raise ValueError("need at least three nodes")
    w = np.zeros(n_nodes)
    m_simp = m if m % 2 == 0 else m - 3
    if m_simp > 0:
        w[0:m_simp + 1:2] += 2.0
        w[1:m_simp:2] += 4.0
        w[0] -= 1.0
        w[m_simp] -= 1.0
        w[:m_simp + 1] *= h / 3.0
    if m % 2 == 1:
        w[m_simp:m_simp + 4] += 3.0 * h / 8.0 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def make_grid(x_max: float, n: int = 2000, x_min: float = 1e-8, x_split: float = 0.1,
              log_fraction: float = 0.25) -> Grid:
    """Build the default graded grid.

    Parameters
    ----------
    x_max : float
        Right end of the grid.
    n : int
        Total node count.
    x_min, x_split : float
        The graded part covers ``[x_min, x_split]``.
    log_fraction : float
        Share of nodes placed on the graded part.
    """
    if not (0 < x_min < x_split < x_max):
        raise ValueError("need 0 < x_min < x_split < x_max")
    if x_min < 1e-12:
        raise ValueError("x_min must be at least 1e-12")
    n_log = max(3, int(round(log_fraction * n)))
    n_uni = max(4, n - n_log + 1)
    u = np.linspace(math.log(x_min), math.log(x_split), n_log)
    x_log = np.exp(u)
    x_log[-1] = x_split
    x_uni = np.linspace(x_split, x_max, n_uni)
    w_log = _simpson_weights(n_log, u[1] - u[0]) * x_log
    w_uni = _simpson_weights(n_uni, x_uni[1] - x_uni[0])
    nodes = np.concatenate((x_log, x_uni[1:]))
    weights = np.concatenate((w_log[:-1], [w_log[-1] + w_uni[0]], w_uni[1:]))
    grading = {"x_min": x_min, "x_split": x_split, "x_max": float(x_max),
               "n_log": n_log, "n_uniform": n_uni}
    return Grid(nodes, weights, grading)


def default_x_max(model: Model, eps: float = 0.0, x_min: float = 1e-8, ratio: float = 1e-16) -> float:
    """Smallest ``x`` beyond the bulk where the Gibbs density drops below ``ratio * max``.

    Uses ``u_0^G`` when the environmental noise is non-degenerate and
    ``u_eps^G`` otherwise.  The maximum is taken over ``[x_min, inf)``.
    """
    e = eps if model.sigma_d1_0 == 0.0 else 0.0
    if e == 0.0 and model.sigma_d1_0 == 0.0:
        raise DomainError("cannot choose x_max: both noise terms vanish")
    x_hi = 1.0
    log_ratio = math.log(ratio)
    for _ in range(12):
        x_hi *= 4.0
        pot = Potential(model, e, x_hi, x_lo=x_min)
        xs = np.concatenate((np.geomspace(x_min, 1.0, 400), np.linspace(1.0, x_hi, 4000)[1:]))
        lg = pot.log_gibbs(xs)
        i_max = int(np.argmax(lg))
        below = lg < lg[i_max] + log_ratio
        after = np.arange(xs.size) > i_max
        tail_ok = below & after
        idx = np.flatnonzero(tail_ok)
        if idx.size and np.all(tail_ok[idx[0]:]):
            return float(xs[idx[0]])
    raise DomainError("Gibbs density does not decay; check (H)(1)")


@dataclass(frozen=True)
class DensityTable:
    """A density tabulated on a :class:`Grid`, stored as log-values.

    Attributes
    ----------
    grid : Grid
    log_values : ndarray
        ``log`` of the density at the nodes (``-inf`` for zeros).
    normalized : bool
    label : str
        What is tabulated (``"u_eps^G"``, ``"u_0"``, ...).
    meta : mapping
        Echoed into file headers (model, eps, anchor, ...).
    exponent : float or None
        Estimated near-origin power exponent, when reported.
    integrable : bool or None
        Whether the density is integrable at the origin.
    """

    grid: Grid
    log_values: np.ndarray
    normalized: bool
    label: str = ""
    meta: Mapping[str, object] = field(default_factory=dict)
    exponent: float | None = None
    integrable: bool | None = None

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def normalize(self) -> "DensityTable":
        lm = math.log(self.mass)
        return DensityTable(self.grid, self.log_values - lm, True, self.label, self.meta,
                            self.exponent, self.integrable)

    def header(self) -> dict:
        h = {"table": self.label}
        h.update(self.meta)
        h["normalized"] = str(self.normalized).lower()
        h["grid"] = self.grid.describe()
        return h

    def rows(self):
        return zip(self.nodes, self.values, self.log_values)


def _near_origin_exponent(x: np.ndarray, logv: np.ndarray, x_cut: float = 1e-6) -> float:
    sel = x <= max(x_cut, x[2])
    return float(np.polyfit(np.log(x[sel]), logv[sel], 1)[0])


def gibbs_density(model: Model, eps: float, grid: Grid) -> DensityTable:
    """Tabulate the (non-integrable) Gibbs density ``u_eps^G = exp(-2V)/alpha``.

    The table carries the near-origin power exponent estimate; an
    exponent at or below ``-1`` flags the density as non-normalizable
    (its mass diverges as the grid is refined toward 0).
    """
    if not eps > 0:
        raise DomainError("gibbs_density requires eps > 0; use limit_gibbs for eps = 0")
    pot = Potential(model, eps, grid.x_max, x_lo=min(X_FLOOR, grid.nodes[0]))
    lg = pot.log_gibbs(grid.nodes)
    k = _near_origin_exponent(grid.nodes, lg)
    meta = {"model": model.name, "eps": repr(float(eps)), "anchor": ANCHOR}
    return DensityTable(grid, lg, False, "u_eps^G", meta, k, bool(k > -1.0 + 1e-3))


def limit_gibbs(model: Model, grid: Grid) -> DensityTable:
    """Tabulate ``u_0^G = exp(2 int_1^x b/sigma^2)/sigma^2`` with its near-0 exponent.

    Near the origin ``u_0^G(x) ~ x**k`` with ``k = 2b'(0)/sigma'(0)**2 - 2``;
    the table reports a least-squares estimate of ``k`` from the smallest
    nodes and flags integrability (``k > -1``).
    """
    if model.sigma_d1_0 == 0.0:
        raise DomainError("u_0^G is undefined when sigma'(0) = 0")
    pot = Potential(model, 0.0, grid.x_max, x_lo=min(X_FLOOR, grid.nodes[0]))
    lg = pot.log_gibbs(grid.nodes)
    k = _near_origin_exponent(grid.nodes, lg)
    meta = {"model": model.name, "eps": "0.0", "anchor": ANCHOR}
    return DensityTable(grid, lg, False, "u_0^G", meta, k, bool(k > -1.0))


def stationary_density(model: Model, grid: Grid | None = None) -> DensityTable:
    """Normalized stationary density ``u_0`` of the environmental-only SDE.

    Raises
    ------
    DomainError
        If ``Lambda0 <= 0``: no positive stationary distribution exists.
    """
    if not stochastic_growth_rate(model) > 0:
        raise DomainError("no positive stationary distribution (Lambda0 <= 0)")
    if grid is None:
        grid = make_grid(default_x_max(model))
    t = limit_gibbs(model, grid).normalize()
    return DensityTable(t.grid, t.log_values, True, "u_0", t.meta, t.exponent, t.integrable)


def gamma_logpdf(x, shape: float, rate: float):
    """Log density of Gamma(shape, rate); the closed-form ``u_0`` of the logistic family."""
    from scipy.special import gammaln

    x = np.asarray(x, dtype=float)
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def logistic_stationary_params(model: Model) -> tuple[float, float]:
    """(shape, rate) of the Gamma stationary law of the environmental-only logistic SDE."""
    if model.kind not in ("logistic", "theta_logistic") or model.params.get("theta", 1.0) != 1.0:
        raise DomainError("closed-form stationary law is available for the logistic family only")
    if not stochastic_growth_rate(model) > 0:
        raise DomainError("no positive stationary distribution (Lambda0 <= 0)")
    p = model.params
    s2 = p["sigma"] ** 2
    return 2.0 * p["mu"] / s2 - 1.0, 2.0 * p["kappa"] / s2


def total_variation(grid: Grid, p, q) -> float:
    """``0.5 * int |p - q|`` by grid quadrature."""
    return 0.5 * grid.integrate(np.abs(np.asarray(p) - np.asarray(q)))
