"""Sweeps over eps, scaling fits and pass/fail verdicts.

Each sweep runs one estimator (spectral or Monte Carlo) over a ladder of
``eps`` values and fits the scaling law predicted for that quantity.
:func:`emit_report` assembles verdicts into a plain-text report and a
summary table ``theorem,metric,expected,fitted,tolerance,verdict``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import spectral as sp
from .density import gamma_logpdf, logistic_stationary_params, make_grid, stationary_density, total_variation
from .errors import DomainError
from .fitting import ScalingFit, ols_fit
from .model import Model, kappa_exponent, stochastic_growth_rate
from .sde import CensoringWarning, ExtinctionSample, SimConfig, sample_extinction_times

#: Default slope tolerances: spectral-driven and Monte Carlo-driven fits.
TOL_SPECTRAL = 0.2
TOL_MC = 0.25


@dataclass(frozen=True, eq=False)
class SweepSpec:
    """A ladder of ``eps`` values and per-point budgets.

    The ladder is stored in decreasing order whatever the input order, so
    permuted ladders describe the same sweep.
    """

    model: Model
    eps_ladder: tuple[float, ...]
    estimators: tuple[str, ...] = ("spectral",)
    n_paths: int = 10_000
    n_grid: int = 4000
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        eps = [float(e) for e in self.eps_ladder]
        if any(not e > 0 for e in eps):
            raise DomainError("eps ladder entries must be positive")
        if len(set(eps)) != len(eps):
            raise DomainError("eps ladder entries must be distinct")
        object.__setattr__(self, "eps_ladder", tuple(sorted(eps, reverse=True)))
        bad = set(self.estimators) - {"spectral", "mc", "scale"}
        if bad:
            raise DomainError(f"unknown estimators {sorted(bad)}")

    @property
    def eps(self) -> np.ndarray:
        return np.asarray(self.eps_ladder)

    def sim_config(self) -> SimConfig:
        return self.sim.with_(n_paths=self.n_paths)


def _require_fit_ladder(spec: SweepSpec):
    if len(spec.eps_ladder) < 4:
        raise DomainError("a scaling fit needs a ladder of at least 4 eps values")


def expected_lambda1_slope(model: Model) -> float:
    """``4 b'(0)/sigma'(0)^2 - 2``."""
    return 2.0 * kappa_exponent(model) - 2.0


def expected_mean_extinction_slope(model: Model) -> float:
    """``2 - 4 b'(0)/sigma'(0)^2``."""
    return -expected_lambda1_slope(model)


def sweep_lambda1(spec: SweepSpec, tolerance: float = TOL_SPECTRAL, r2_min: float | None = 0.98) -> ScalingFit:
    """Log-log fit of the spectral extinction rate against ``eps``."""
    if not stochastic_growth_rate(spec.model) > 0:
        raise DomainError("sweep_lambda1 requires Lambda0 > 0")
    _require_fit_ladder(spec)
    lam = np.array([sp.extinction_rate(spec.model, e, n=spec.n_grid) for e in spec.eps])
    fit = ols_fit(np.log(spec.eps), np.log(lam), "ln lambda1 vs ln eps",
                  expected_lambda1_slope(spec.model), tolerance, r2_min)
    return _with_data(fit, {"eps": spec.eps, "lambda1": lam})


def _with_data(fit: ScalingFit, data: Mapping) -> "ScalingFitWithData":
    return ScalingFitWithData(**{k: getattr(fit, k) for k in ScalingFit.__dataclass_fields__}, data=dict(data))


@dataclass(frozen=True)
class ScalingFitWithData(ScalingFit):
    """A :class:`ScalingFit` carrying the per-point sweep data."""

    data: Mapping[str, object] = field(default_factory=dict)


def sweep_mean_extinction(spec: SweepSpec, x0: float = 1.0, samples: dict | None = None,
                          max_censored: float = 0.05, tolerance: float = TOL_MC,
                          r2_min: float = 0.97) -> ScalingFit:
    """Fit Monte Carlo mean extinction times across the ladder.

    For ``Lambda0 > 0`` a log-log fit with expected slope
    ``2 - 4 b'(0)/sigma'(0)^2``; for ``Lambda0 < 0`` a linear fit of
    ``E[T_0]`` against ``|ln eps|`` judged by its R^2.  Points with a
    censored fraction above ``max_censored`` are excluded and flagged.

    Parameters
    ----------
    samples : dict, optional
        Cache ``eps -> ExtinctionSample``; filled with new samples and
        reused when present.
    """
    lam0 = stochastic_growth_rate(spec.model)
    if lam0 == 0.0:
        raise DomainError("Lambda0 = 0 is not supported")
    _require_fit_ladder(spec)
    cfg = spec.sim_config()
    cache = samples if samples is not None else {}
    means, ses, cens = [], [], []
    for e in spec.eps:
        s = cache.get(float(e))
        if s is None or s.x0 != x0 or s.config != cfg:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CensoringWarning)
                s = sample_extinction_times(spec.model, float(e), x0, cfg)
            cache[float(e)] = s
        means.append(s.mean), ses.append(s.se), cens.append(s.censored_fraction)
    means, ses, cens = map(np.asarray, (means, ses, cens))
    ok = cens <= max_censored
    if ok.sum() < 3:
        raise DomainError("too many censored ladder points for a fit")
    data = {"eps": spec.eps, "mean": means, "se": ses, "censored_fraction": cens, "excluded": spec.eps[~ok]}
    if lam0 > 0:
        fit = ols_fit(np.log(spec.eps[ok]), np.log(means[ok]), "ln E[T0] vs ln eps",
                      expected_mean_extinction_slope(spec.model), tolerance)
    else:
        fit = ols_fit(np.abs(np.log(spec.eps[ok])), means[ok], "E[T0] vs |ln eps|", r2_min=r2_min)
    return _with_data(fit, data)


@dataclass(frozen=True)
class QSDConvergence:
    """Per-eps distances of the QSD from its small-noise limit.

    For ``Lambda0 > 0``: ``tv[i] = TV(u_eps_i, u_0)``; for ``Lambda0 < 0``:
    ``mass_near_zero[i] = mu_eps_i((0, delta))``.
    """

    eps: np.ndarray
    lambda0: float
    tv: np.ndarray | None
    mass_near_zero: np.ndarray | None
    delta: float
    envelope: np.ndarray
    envelope_power: float

    @property
    def monotone(self) -> bool:
        """TV decreasing (or mass near 0 increasing) as eps decreases."""
        if self.tv is not None:
            return bool(np.all(np.diff(self.tv) < 0))
        return bool(np.all(np.diff(self.mass_near_zero) > 0))


def qsd_convergence_sweep(spec: SweepSpec, delta: float = 0.1, envelope_power: float = 0.9) -> QSDConvergence:
    """Distance of the spectral QSD from its limit along the ladder.

    Also records ``sup_{x < 0.1} u_eps(x) x^k`` (``k = envelope_power``).
    """
    model = spec.model
    lam0 = stochastic_growth_rate(model)
    if lam0 == 0.0:
        raise DomainError("Lambda0 = 0 is not supported")
    tv, mass, env = [], [], []
    for e in spec.eps:
        q = sp.qsd_density(model, float(e), n=spec.n_grid)
        x = q.table.nodes
        near = x < 0.1
        env.append(float(np.max(q.table.values[near] * x[near] ** envelope_power)))
        if lam0 > 0:
            g = q.table.grid
            try:
                shape, rate = logistic_stationary_params(model)
                u0 = np.exp(gamma_logpdf(x, shape, rate))
            except DomainError:
                u0 = stationary_density(model, g).values
            tv.append(total_variation(g, q.table.values, u0))
        else:
            mass.append(q.mass_below(delta))
    return QSDConvergence(spec.eps, lam0, np.asarray(tv) if tv else None, np.asarray(mass) if mass else None,
                          delta, np.asarray(env), envelope_power)


@dataclass(frozen=True)
class GapSweep:
    """Eigenvalues along the ladder."""

    eps: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.lambda2 - self.lambda1

    @property
    def min_gap(self) -> float:
        return float(np.min(self.gap))

    @property
    def lambda2_band(self) -> float:
        """``max lambda2 / min lambda2`` over the ladder."""
        return float(np.max(self.lambda2) / np.min(self.lambda2))

    @property
    def lambda1_drop(self) -> float:
        """``max lambda1 / min lambda1`` over the ladder."""
        return float(np.max(self.lambda1) / np.min(self.lambda1))

    @property
    def uniform_positivity(self) -> bool:
        """``min lambda2 >= 0.1 * median lambda2``."""
        return bool(np.min(self.lambda2) >= 0.1 * np.median(self.lambda2))


def spectral_gap_sweep(spec: SweepSpec) -> GapSweep:
    """First two eigenvalues along the ladder (``Lambda0 > 0``)."""
    if not stochastic_growth_rate(spec.model) > 0:
        raise DomainError("spectral_gap_sweep requires Lambda0 > 0")
    l1, l2 = [], []
    for e in spec.eps:
        r = sp.spectral_solve(spec.model, float(e), 2, spec.n_grid)
        l1.append(r.lambdas[0]), l2.append(r.lambdas[1])
    return GapSweep(spec.eps, np.asarray(l1), np.asarray(l2))


def lambda1_log_trend(spec: SweepSpec) -> dict:
    """Exploratory (``Lambda0 < 0``): ``lambda1 * |ln eps|`` along the ladder, no verdict."""
    if not stochastic_growth_rate(spec.model) < 0:
        raise DomainError("lambda1_log_trend is meant for Lambda0 < 0")
    lam = np.array([sp.extinction_rate(spec.model, float(e), n=spec.n_grid) for e in spec.eps])
    return {"eps": spec.eps, "lambda1": lam, "lambda1_abs_ln_eps": lam * np.abs(np.log(spec.eps))}


def reciprocal_products(samples: Mapping[float, ExtinctionSample], model: Model,
                        eps: Iterable[float], n_grid: int = 4000) -> dict[float, float]:
    """``lambda1 * mean(T_0)`` per eps."""
    return {float(e): float(sp.extinction_rate(model, float(e), n=n_grid)) * samples[float(e)].mean for e in eps}


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    """One line of the summary table."""

    theorem: str
    metric: str
    expected: str
    fitted: float
    tolerance: str
    passed: bool | None  # None: reported without a verdict

    @property
    def verdict(self) -> str:
        return "n/a" if self.passed is None else ("pass" if self.passed else "fail")

    def row(self) -> tuple:
        return (self.theorem, self.metric, self.expected, _fmt(self.fitted), self.tolerance, self.verdict)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


@dataclass
class Section:
    """A report section: one theorem or oracle group."""

    title: str
    verdicts: list[Verdict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    figures: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)


def fit_verdicts(theorem: str, metric: str, fit: ScalingFit) -> list[Verdict]:
    """Verdict rows for a scaling fit (slope and/or R^2)."""
    out = []
    if fit.expected_slope is not None:
        out.append(Verdict(theorem, f"{metric} slope", _fmt(fit.expected_slope), fit.slope,
                           f"+-{fit.tolerance:g}", fit.slope_ok))
    if fit.r2_min is not None:
        out.append(Verdict(theorem, f"{metric} R^2", f">={fit.r2_min:g}", fit.r2, "-", fit.r2_ok))
    if not out:
        out.append(Verdict(theorem, f"{metric} slope", "-", fit.slope, "-", None))
    return out


@dataclass(frozen=True)
class Report:
    """Rendered report, summary rows and exit status."""

    text: str
    rows: list[tuple]
    figures: dict[str, tuple[tuple[str, ...], list[tuple]]]
    exit_status: int

    SUMMARY_HEADER = ("theorem", "metric", "expected", "fitted", "tolerance", "verdict")


def emit_report(sections: Sequence[Section]) -> Report:
    """Assemble sections into a report.

    Any failing verdict makes the exit status 1 and adds a FAILURES index
    at the top of the text.
    """
    if not sections:
        raise DomainError("emit_report needs at least one section")
    rows, failures, body = [], [], []
    figures = {}
    for sec in sections:
        body.append(f"== {sec.title} ==")
        for v in sec.verdicts:
            rows.append(v.row())
            body.append(f"  [{v.verdict.upper():4s}] {v.metric}: fitted {_fmt(v.fitted)}, expected {v.expected}"
                        f" (tolerance {v.tolerance})")
            if v.passed is False:
                failures.append(f"{sec.title}: {v.metric}")
        for n in sec.notes:
            body.append(f"  note: {n}")
        figures.update(sec.figures)
        body.append("")
    head = []
    if failures:
        head.append("FAILURES")
        head.extend(f"  - {f}" for f in failures)
        head.append("")
    n_pass = sum(1 for r in rows if r[-1] == "pass")
    n_fail = len(failures)
    head.append(f"verdicts: {n_pass} pass, {n_fail} fail, {len(rows) - n_pass - n_fail} reported only")
    head.append("")
    return Report("\n".join(head + body), rows, figures, 1 if failures else 0)

