"""Coefficient triples for absorbed population diffusions.

A :class:`Model` bundles the drift ``b``, the environmental noise amplitude
``sigma`` and the demographic noise shape ``a`` of

    dX = b(X) dt + sigma(X) dB + eps * sqrt(a(X)) dW,

each carried as a :class:`ScalarField` with analytic first and second
derivatives.  The module also audits the structural hypotheses on the
coefficients and computes the stochastic growth rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ModelError

ArrayFunc = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A scalar coefficient with analytic derivatives.

    Parameters
    ----------
    eval, d1, d2 : callable
        Vectorized maps ``x -> f(x)``, ``f'(x)`` and ``f''(x)``.
    label : str
        Short human-readable name, e.g. ``"x*(1-1*x)"``.
    """

    eval: ArrayFunc
    d1: ArrayFunc
    d2: ArrayFunc
    label: str = ""

    def __call__(self, x):
        return self.eval(x)


def _const_field(value: float, label: str) -> ScalarField:
    return ScalarField(
        eval=lambda x, v=value: np.full_like(np.asarray(x, dtype=float), v),
        d1=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        d2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        label=label,
    )


def linear_field(c: float, label: str | None = None) -> ScalarField:
    """The field ``x -> c*x``."""
    return ScalarField(
        eval=lambda x, c=c: c * np.asarray(x, dtype=float),
        d1=lambda x, c=c: np.full_like(np.asarray(x, dtype=float), c),
        d2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        label=label if label is not None else f"{c:g}*x",
    )


def theta_logistic_drift(mu: float, kappa: float, theta: float) -> ScalarField:
    """Drift ``x*(mu - kappa*x**theta)`` with exact derivatives."""
    if theta == 1.0:
        return ScalarField(
            eval=lambda x: np.asarray(x, dtype=float) * (mu - kappa * np.asarray(x, dtype=float)),
            d1=lambda x: mu - 2.0 * kappa * np.asarray(x, dtype=float),
            d2=lambda x: np.full_like(np.asarray(x, dtype=float), -2.0 * kappa),
            label=f"x*({mu:g}-{kappa:g}*x)",
        )

    def ev(x):
        x = np.asarray(x, dtype=float)
        return x * (mu - kappa * x**theta)

    def d1(x):
        x = np.asarray(x, dtype=float)
        return mu - kappa * (theta + 1.0) * x**theta

    def d2(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return -kappa * (theta + 1.0) * theta * x ** (theta - 1.0)

    return ScalarField(ev, d1, d2, label=f"x*({mu:g}-{kappa:g}*x^{theta:g})")


@dataclass(frozen=True, eq=False)
class Model:
    """Coefficient triple ``(b, sigma, a)`` plus parameter metadata.

    Construction enforces ``b(0) = sigma(0) = a(0) = 0`` exactly, together
    with ``b'(0) > 0`` and ``a'(0) > 0``.  A vanishing ``sigma'(0)`` is
    allowed so that the demographic-only variant and deliberately broken
    models can be built and then audited by :func:`check_hypotheses`.

    Attributes
    ----------
    b, sigma, a : ScalarField
        Drift, environmental noise amplitude and demographic noise shape.
    params : mapping
        Named numeric parameters (``mu``, ``kappa``, ...).
    kind : str
        Family tag: ``"logistic"``, ``"theta_logistic"`` or ``"custom"``.
        The compiled path sampler recognises the two logistic families.
    """

    b: ScalarField
    sigma: ScalarField
    a: ScalarField
    params: Mapping[str, float] = field(default_factory=dict)
    kind: str = "custom"

    def __post_init__(self):
        zero = np.zeros(1)
        for name, f in (("b", self.b), ("sigma", self.sigma), ("a", self.a)):
            v = float(f.eval(zero)[0])
            if v != 0.0:
                raise ModelError(f"{name}(0) = {v!r}; the origin must be absorbing")
        if not float(self.b.d1(zero)[0]) > 0.0:
            raise ModelError("(H)(1) violated: b'(0) must be positive")
        if not float(self.a.d1(zero)[0]) > 0.0:
            raise ModelError("(H)(3) violated: a'(0) must be positive")
        object.__setattr__(self, "params", dict(self.params))

    @property
    def name(self) -> str:
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.kind}({inner})"

    @property
    def b_d1_0(self) -> float:
        return float(self.b.d1(np.zeros(1))[0])

    @property
    def sigma_d1_0(self) -> float:
        return float(self.sigma.d1(np.zeros(1))[0])

    @property
    def a_d1_0(self) -> float:
        return float(self.a.d1(np.zeros(1))[0])

    def demographic_only(self) -> "Model":
        """The same model with ``sigma`` replaced by zero."""
        params = dict(self.params)
        if "sigma" in params:
            params["sigma"] = 0.0
        return Model(self.b, _const_field(0.0, "0"), self.a, params, self.kind)

    def scaled_demography(self, c: float) -> "Model":
        """The same model with ``a`` replaced by ``c*a``."""
        if not c > 0:
            raise ModelError("demographic scale factor must be positive")
        a = self.a
        field_ = ScalarField(
            eval=lambda x: c * a.eval(x),
            d1=lambda x: c * a.d1(x),
            d2=lambda x: c * a.d2(x),
            label=f"{c:g}*({a.label})",
        )
        params = dict(self.params)
        if "gamma" in params:
            params["gamma"] = c * params["gamma"]
        return Model(self.b, self.sigma, field_, params, self.kind)


def build_theta_logistic(mu: float, kappa: float, theta: float, sigma: float, gamma: float) -> Model:
    """Stochastic theta-logistic model.

    ``b(x) = x*(mu - kappa*x**theta)``, ``sigma(x) = sigma*x``,
    ``a(x) = gamma*x``.

    Raises
    ------
    ModelError
        If ``mu``, ``kappa``, ``gamma`` or ``theta`` is not positive.
    """
    if not theta > 0:
        raise ModelError(f"theta must be positive (got {theta!r})")
    return _build(mu, kappa, theta, sigma, gamma, kind="theta_logistic")


def build_logistic(mu: float, kappa: float, sigma: float, gamma: float) -> Model:
    """Stochastic logistic model ``b(x) = x*(mu - kappa*x)``.

    Examples
    --------
    >>> m = build_logistic(1.0, 1.0, 1.0, 1.0)
    >>> float(m.b.eval(2.0))
    -2.0
    """
    return _build(mu, kappa, 1.0, sigma, gamma, kind="logistic")


def _build(mu, kappa, theta, sigma, gamma, kind):
    mu, kappa, theta, sigma, gamma = map(float, (mu, kappa, theta, sigma, gamma))
    if not mu > 0:
        raise ModelError(f"(H)(1) violated: growth rate mu must be positive (got {mu!r})")
    if not kappa > 0:
        raise ModelError(f"(H)(1) violated: competition kappa must be positive (got {kappa!r})")
    if not gamma > 0:
        raise ModelError(f"(H)(3) violated: demographic scale gamma must be positive (got {gamma!r})")
    if not math.isfinite(sigma):
        raise ModelError("sigma must be finite")
    params = {"mu": mu, "kappa": kappa, "theta": theta, "sigma": sigma, "gamma": gamma}
    if kind == "logistic":
        del params["theta"]
    return Model(
        b=theta_logistic_drift(mu, kappa, theta),
        sigma=linear_field(sigma),
        a=linear_field(gamma),
        params=params,
        kind=kind,
    )


def model_from_config(section: Mapping[str, object]) -> Model:
    """Build a model from a ``[model]`` config section.

    Recognised keys: ``kind`` (``"logistic"`` or ``"theta_logistic"``) and
    the numeric keys ``mu, kappa, theta, sigma, gamma``.
    """
    kind = section.get("kind", "logistic")
    get = lambda k, d: float(section.get(k, d))  # noqa: E731
    mu, kappa, sigma, gamma = get("mu", 1.0), get("kappa", 1.0), get("sigma", 1.0), get("gamma", 1.0)
    if kind == "logistic":
        if "theta" in section and float(section["theta"]) != 1.0:
            raise ModelError("theta is only meaningful for kind = 'theta_logistic'")
        return build_logistic(mu, kappa, sigma, gamma)
    if kind == "theta_logistic":
        return build_theta_logistic(mu, kappa, get("theta", 1.0), sigma, gamma)
    raise ModelError(f"unknown model kind {kind!r}")


def stochastic_growth_rate(model: Model) -> float:
    """Return ``Lambda0 = b'(0) - sigma'(0)**2 / 2``."""
    return model.b_d1_0 - 0.5 * model.sigma_d1_0**2


def kappa_exponent(model: Model) -> float:
    """Return ``2 b'(0) / sigma'(0)**2``, the exponent governing the scalings."""
    s1 = model.sigma_d1_0
    if s1 == 0.0:
        return math.inf
    return 2.0 * model.b_d1_0 / s1**2


# ---------------------------------------------------------------------------
# Hypothesis audit
# ---------------------------------------------------------------------------

PASS, FAIL, INDETERMINATE = "pass", "fail", "indeterminate"


@dataclass(frozen=True)
class ClauseVerdict:
    """Verdict for one hypothesis clause.

    ``worst_x``/``worst_value`` locate the largest violation (or, for an
    indeterminate clause, the least favourable trend evidence).
    """

    clause: str
    status: str
    detail: str
    worst_x: float | None = None
    worst_value: float | None = None


@dataclass(frozen=True)
class HypothesisReport:
    """Per-clause audit of a model on a finite grid."""

    model_name: str
    horizon: float
    window: tuple[float, float]
    clauses: tuple[ClauseVerdict, ...]

    def __getitem__(self, clause: str) -> ClauseVerdict:
        for c in self.clauses:
            if c.clause == clause:
                return c
        raise KeyError(clause)

    @property
    def hard_failures(self) -> list[ClauseVerdict]:
        return [c for c in self.clauses if c.status == FAIL]

    @property
    def ok(self) -> bool:
        return not self.hard_failures

    def to_text(self) -> str:
        lines = [
            f"hypothesis audit for {self.model_name}",
            f"grid horizon X = {self.horizon:g}; trend window [{self.window[0]:g}, {self.window[1]:g}] (last decade)",
        ]
        for c in self.clauses:
            loc = ""
            if c.worst_x is not None:
                loc = f" [worst at x={c.worst_x:.6g}, value={c.worst_value:.6g}]"
            lines.append(f"(H)({c.clause}) {c.status}: {c.detail}{loc}")
        return "\n".join(lines)


def _trend(values: np.ndarray, direction: int) -> tuple[bool, int]:
    """Check monotone trend; return (ok, index of worst violation)."""
    d = np.diff(values) * direction
    scale = np.maximum(np.abs(values[:-1]), 1e-300)
    rel = d / scale
    ok = bool(np.all(rel >= -1e-12))
    return ok, int(np.argmin(rel)) + 1


def check_hypotheses(model: Model, grid: np.ndarray) -> HypothesisReport:
    """Audit the structural hypotheses (1)-(4) on a finite grid.

    Clauses (1)-(3) are decided from values and derivatives at the origin
    and signs on the grid.  Clause (4) involves limits at infinity; the
    four ratios are evaluated over the last decade of the grid
    ``[X/10, X]`` and tested for a monotone trend in the required
    direction.  Clause (4) is therefore never reported as ``pass``: it is
    ``indeterminate`` (with ``consistent`` or ``non-monotone`` evidence),
    or ``fail`` when a ratio is not even finite on the window.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 3 or not np.all(np.diff(x) > 0) or not x[0] > 0:
        raise ValueError("grid must be strictly increasing with grid[0] > 0")
    X = float(x[-1])
    zero = np.zeros(1)
    b, s, a = model.b.eval(x), model.sigma.eval(x), model.a.eval(x)
    out = []

    # (1): b(0)=0, b'(0)>0, limsup b < 0
    b0 = float(model.b.eval(zero)[0])
    bd = model.b_d1_0
    tail = x >= X / 10.0
    if b0 != 0.0 or not bd > 0:
        out.append(ClauseVerdict("1", FAIL, f"b(0)={b0:g}, b'(0)={bd:g}; need b(0)=0 < b'(0)"))
    else:
        i = int(np.argmax(np.where(tail, b, -np.inf)))
        if b[i] >= 0.0:
            out.append(ClauseVerdict("1", FAIL, "limsup b < 0 violated on grid tail", float(x[i]), float(b[i])))
        else:
            out.append(ClauseVerdict("1", PASS, f"b(0)=0, b'(0)={bd:g} > 0, b < 0 on [{X/10:g}, {X:g}]",
                                     float(x[i]), float(b[i])))

    # (2): sigma(0)=0, sigma'(0) != 0
    s0 = float(model.sigma.eval(zero)[0])
    sd = model.sigma_d1_0
    if s0 != 0.0 or sd == 0.0:
        out.append(ClauseVerdict("2", FAIL, f"sigma(0)={s0:g}, sigma'(0)={sd:g}; need sigma'(0) != 0", 0.0, sd))
    else:
        out.append(ClauseVerdict("2", PASS, f"sigma(0)=0, sigma'(0)={sd:g}"))

    # (3): a(0)=0, a'(0)>0, a>0 on (0,inf)
    a0 = float(model.a.eval(zero)[0])
    ad = model.a_d1_0
    if a0 != 0.0 or not ad > 0:
        out.append(ClauseVerdict("3", FAIL, f"a(0)={a0:g}, a'(0)={ad:g}; need a'(0) > 0"))
    elif np.any(a <= 0):
        i = int(np.argmin(a))
        out.append(ClauseVerdict("3", FAIL, "a > 0 violated on grid", float(x[i]), float(a[i])))
    else:
        out.append(ClauseVerdict("3", PASS, f"a(0)=0, a'(0)={ad:g} > 0, a > 0 on grid"))

    # (4): four ratio trends over the last decade
    xw = x[tail]
    bw, sw, aw = b[tail], s[tail], a[tail]
    with np.errstate(divide="ignore", invalid="ignore"):
        s2 = sw**2
        ratios = {
            "a/sigma^2 bounded (non-increasing)": (aw / s2, -1),
            "b/|sigma| -> -inf (decreasing)": (bw / np.abs(sw), -1),
            "x*b/sigma^2 -> -inf (decreasing)": (xw * bw / s2, -1),
            "(sigma^2/|b|)*max(a'/a, |sigma'/sigma|) -> 0 (decreasing)": (
                s2 / np.abs(bw) * np.maximum(model.a.d1(xw) / aw, np.abs(model.sigma.d1(xw) / sw)), -1),
            "(sigma^2/b^2)*max(a'', (sigma^2)'', |b'|) -> 0 (decreasing)": (
                s2 / bw**2 * np.maximum.reduce([
                    model.a.d2(xw),
                    2.0 * (model.sigma.d1(xw) ** 2 + sw * model.sigma.d2(xw)),
                    np.abs(model.b.d1(xw)),
                ]), -1),
        }
    bad_finite = [k for k, (r, _) in ratios.items() if not np.all(np.isfinite(r))]
    window = (float(xw[0]), float(xw[-1]))
    if bad_finite:
        k = bad_finite[0]
        r = ratios[k][0]
        i = int(np.argmax(~np.isfinite(r)))
        out.append(ClauseVerdict("4", FAIL, f"ratio not finite on window: {k}", float(xw[i]), float(r[i])))
    else:
        failing = []
        for k, (r, direction) in ratios.items():
            ok, i = _trend(r, direction)
            if not ok:
                failing.append((k, float(xw[i]), float(r[i])))
        if failing:
            k, wx, wv = failing[0]
            out.append(ClauseVerdict("4", INDETERMINATE, f"non-monotone: {k}", wx, wv))
        else:
            out.append(ClauseVerdict("4", INDETERMINATE,
                                     "consistent (all four ratios trend correctly on the window; "
                                     "limits at infinity cannot be certified on a finite grid)"))
    return HypothesisReport(model.name, X, window, tuple(out))
