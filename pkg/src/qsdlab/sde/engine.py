"""Monte Carlo engine for absorbed population diffusions.

Paths are advanced by an Euler scheme with two independent Gaussian
increments per step (one per Brownian driver).  The base step ``dt`` is
split into ``1/dt_boundary_factor`` substeps whenever the state at the
start of a step lies in the boundary layer ``x < 10 eps^2``.  The first
(sub)step that lands at or below 0 absorbs the path and records the end
time of that (sub)step.

Every path draws from its own PCG64 stream seeded by
``SeedSequence(seed, spawn_key=(path_id,))``, so results do not depend on
how paths are split across worker threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import stats

from ..density import DensityTable, Grid, default_x_max
from ..errors import DomainError, SimulationError
from ..fitting import ScalingFit, ols_fit
from ..model import Model
from . import _backend
from ._fallback import GenericCoef, make_update

SCHEMES = {"absorbed-euler": 0, "implicit-sqrt": 1}


class CensoringWarning(UserWarning):
    """Too many paths hit the censoring horizon."""


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    Attributes
    ----------
    dt : float
        Base time step.
    dt_boundary_factor : float
        Step shrink factor inside the boundary layer ``x < 10 eps^2``;
        its reciprocal must be an integer.
    scheme : {"absorbed-euler", "implicit-sqrt"}
        ``implicit-sqrt`` treats the negative part of ``b(x)/x`` implicitly.
    t_max : float
        Censoring horizon.
    seed : int
        Root seed of the per-path streams.
    n_paths : int
    threads : int
        Worker threads; results do not depend on this.
    backend : {"compiled", "python"} or None
        Kernel choice; ``None`` picks the fastest available.
    """

    dt: float = 0.01
    dt_boundary_factor: float = 1.0 / 16.0
    scheme: str = "absorbed-euler"
    t_max: float = 1e5
    seed: int = 20240601
    n_paths: int = 10_000
    threads: int = 1
    backend: str | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.dt_boundary_factor <= 1:
            raise ValueError("dt_boundary_factor must lie in (0, 1]")
        n_sub = 1.0 / self.dt_boundary_factor
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("1/dt_boundary_factor must be an integer")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.t_max > 0 or self.t_max / self.dt > 1e9:
            raise ValueError("t_max must be positive with t_max/dt <= 1e9")
        if self.n_paths < 1 or self.threads < 1:
            raise ValueError("n_paths and threads must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_sub(self) -> int:
        return int(round(1.0 / self.dt_boundary_factor))

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_max / self.dt - 1e-9))

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


def path_bitgens(seed: int, start: int, stop: int, stream: int = 0) -> list:
    """Per-path PCG64 generators for path ids ``start .. stop-1``.

    Stream 0 feeds the Gaussian increments; stream 1 feeds the uniforms of
    the barrier-crossing test in exit runs.
    """
    key = (lambda i: (i,)) if stream == 0 else (lambda i: (i, stream))
    return [np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key(i))) for i in range(start, stop)]


def _family_coef(model: Model, eps: float):
    """Parameter tuple for the compiled kernels, or ``None`` for other models."""
    if model.kind not in ("logistic", "theta_logistic"):
        return None
    p = model.params
    try:
        return (float(p["mu"]), float(p["kappa"]), float(p.get("theta", 1.0)),
                float(p["sigma"]), float(p["gamma"]), float(eps))
    except KeyError:
        return None


def boundary_layer(eps: float) -> float:
    """Threshold ``10 eps^2`` below which steps are refined."""
    return 10.0 * eps * eps


def _run(model: Model, eps: float, x0, cfg: SimConfig, mode: int = 0, beta: float = 0.0,
         obs_steps: Sequence[int] = ()):
    n = cfg.n_paths
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    if np.any(x0 <= 0):
        raise DomainError("initial states must be positive")
    obs = np.asarray(sorted(obs_steps), dtype=np.int64)
    coef = _family_coef(model, eps)
    kern = _backend.kernels(coef is not None, cfg.backend)
    if coef is None:
        coef = GenericCoef(model, float(eps))
    t_out = np.empty(n)
    s_out = np.empty(n, dtype=np.int8)
    o_out = np.empty((n, obs.size))
    n_steps = cfg.n_steps
    if obs.size and obs[-1] > n_steps:
        raise DomainError("observation times beyond t_max")
    chunks = np.array_split(np.arange(n), min(cfg.threads, n))

    def work(ids):
        if ids.size == 0:
            return
        a, b = int(ids[0]), int(ids[-1]) + 1
        tt = np.empty(b - a)
        ss = np.empty(b - a, dtype=np.int8)
        oo = np.empty((b - a, obs.size))
        ubg = path_bitgens(cfg.seed, a, b, stream=1) if mode == 1 else []
        kern.run_paths(x0[a:b], coef, cfg.dt, cfg.n_sub, boundary_layer(eps), n_steps, SCHEMES[cfg.scheme],
                       mode, float(beta), obs, path_bitgens(cfg.seed, a, b), ubg, tt, ss, oo)
        t_out[a:b], s_out[a:b], o_out[a:b] = tt, ss, oo

    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as ex:
            list(ex.map(work, chunks))
    return t_out, s_out, o_out


# ---------------------------------------------------------------------------
# Single step
# ---------------------------------------------------------------------------


class _Absorbed:
    def __repr__(self):
        return "ABSORBED"

    def __bool__(self):
        return False


#: Returned by :func:`step` when the state leaves ``(0, inf)``.
ABSORBED = _Absorbed()


def step(model: Model, eps: float, x: float, dt: float, noise: tuple[float, float],
         scheme: str = "absorbed-euler"):
    """One step of the scheme from ``x`` with Brownian increments ``noise = (dB, dW)``.

    Returns the next state, or :data:`ABSORBED` if it is ``<= 0``.
    """
    if not x > 0:
        raise DomainError("step requires x > 0")
    dB, dW = noise
    upd = make_update(GenericCoef(model, float(eps)))
    xn = float(upd(np.array([float(x)]), dt, np.array([dB]), np.array([dW]), SCHEMES[scheme])[0])
    return ABSORBED if xn <= 0.0 else xn


# ---------------------------------------------------------------------------
# Extinction times
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExtinctionSample:
    """Independent draws of the extinction time with censoring flags."""

    times: np.ndarray
    censored: np.ndarray
    x0: float
    eps: float
    model: Model
    config: SimConfig
    warnings: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def censored_fraction(self) -> float:
        return float(np.mean(self.censored))

    @property
    def mean(self) -> float:
        return float(np.mean(self.times))

    @property
    def se(self) -> float:
        return float(np.std(self.times, ddof=1) / math.sqrt(self.n))

    def header(self) -> dict:
        c = self.config
        return {"table": "extinction_sample", "model": self.model.name, "eps": repr(float(self.eps)),
                "x0": self.x0, "dt": c.dt, "dt_boundary_factor": c.dt_boundary_factor, "scheme": c.scheme,
                "t_max": c.t_max, "n_paths": c.n_paths, "seed": c.seed,
                "censored_fraction": self.censored_fraction}

    def rows(self):
        return ((i, t, int(c)) for i, (t, c) in enumerate(zip(self.times, self.censored)))


def sample_extinction_times(model: Model, eps: float, x0: float, config: SimConfig) -> ExtinctionSample:
    """Draw ``config.n_paths`` extinction times started at ``x0``.

    A censored fraction above 50% attaches a warning (``t_max`` too small).
    """
    if not eps > 0:
        raise DomainError("sample_extinction_times requires eps > 0")
    if not x0 > 0:
        raise DomainError("x0 must be positive")
    t, s, _ = _run(model, eps, x0, config)
    cens = s == 1
    msgs = []
    if cens.mean() > 0.5:
        msg = (f"{100 * cens.mean():.1f}% of paths censored at t_max={config.t_max:g}; "
               "increase t_max")
        msgs.append(msg)
        warnings.warn(msg, CensoringWarning, stacklevel=2)
    return ExtinctionSample(t, cens, float(x0), float(eps), model, config, tuple(msgs))


def tail_rate_estimate(sample: ExtinctionSample, quantile: float = 0.25) -> float:
    """Exponential-tail estimate of the extinction rate.

    Maximum-likelihood rate of the excess ``T - t_c`` over the threshold
    ``t_c`` (the given empirical quantile), accounting for censoring.
    """
    t = sample.times
    tc = float(np.quantile(t, quantile))
    above = t > tc
    events = np.sum(above & ~sample.censored)
    exposure = float(np.sum(t[above] - tc))
    if events == 0 or exposure <= 0:
        raise DomainError("no uncensored events above the tail threshold")
    return float(events / exposure)


def normalized_extinction_test(sample: ExtinctionSample, lambda1: float) -> float:
    """Kolmogorov-Smirnov distance between the law of ``lambda1 * T_0`` and Exp(1).

    Censored draws enter through the empirical CDF, which is only compared
    below the censoring horizon.
    """
    if sample.censored_fraction >= 0.05:
        raise DomainError("normalized_extinction_test requires a censored fraction below 5%")
    if not sample.censored.any():
        return float(stats.kstest(lambda1 * sample.times, "expon").statistic)
    n = sample.n
    s = np.sort(lambda1 * sample.times[~sample.censored])
    F = stats.expon.cdf(s)
    i = np.arange(1, s.size + 1)
    d = max(np.max(i / n - F), np.max(F - (i - 1) / n))
    t_cut = lambda1 * sample.config.t_max
    d = max(d, abs(s.size / n - stats.expon.cdf(t_cut)))
    return float(d)


def sample_states(model: Model, eps: float, x0: float, times: Sequence[float], config: SimConfig) -> np.ndarray:
    """Simulated states ``X_t`` at the given times, ``0`` for absorbed paths.

    Returns an array of shape ``(n_paths, len(times))``; times are rounded
    to multiples of ``config.dt`` and the columns follow the input order.
    """
    if not x0 > 0:
        raise DomainError("x0 must be positive")
    steps = np.rint(np.asarray(times, dtype=float) / config.dt).astype(np.int64)
    if np.any(steps < 0):
        raise DomainError("times must be nonnegative")
    order = np.argsort(steps, kind="stable")
    cfg = config.with_(t_max=max(int(steps.max()), 1) * config.dt)
    _, _, obs = _run(model, eps, x0, cfg, obs_steps=steps[order])
    out = np.empty_like(obs)
    out[:, order] = obs
    return out


# ---------------------------------------------------------------------------
# Exit problem
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExitStats:
    """Monte Carlo statistics of the exit from ``(0, beta)``."""

    n: int
    freq_beta: float
    freq_se: float
    mean_time: float
    mean_time_se: float
    censored: int

    @property
    def freq_ci95(self) -> tuple[float, float]:
        return (self.freq_beta - 1.96 * self.freq_se, self.freq_beta + 1.96 * self.freq_se)

    @property
    def mean_time_ci95(self) -> tuple[float, float]:
        return (self.mean_time - 1.96 * self.mean_time_se, self.mean_time + 1.96 * self.mean_time_se)


def exit_event_stats(model: Model, eps: float, x0: float, beta: float, config: SimConfig) -> ExitStats:
    """Frequency of exiting ``(0, beta)`` at ``beta`` and the mean exit time.

    Crossings of ``beta`` between grid points are detected with the
    Brownian-bridge probability ``exp(-2 (beta - x)(beta - x') / (alpha(x) h))``,
    which removes the ``O(sqrt(dt))`` delay of discrete monitoring.
    Absorption at 0 follows the ordinary rule.
    """
    if not 0 < x0 < beta:
        raise DomainError("need 0 < x0 < beta")
    t, s, _ = _run(model, eps, x0, config, mode=1, beta=beta)
    n = t.size
    hit = s == 2
    p = float(hit.mean())
    return ExitStats(n, p, math.sqrt(max(p * (1 - p), 0.0) / n), float(t.mean()),
                     float(np.std(t, ddof=1) / math.sqrt(n)), int(np.sum(s == 1)))


# ---------------------------------------------------------------------------
# Histograms and total variation
# ---------------------------------------------------------------------------


def tv_edges(x_max: float, n_log: int = 40, n_uniform: int = 160, x_split: float = 0.1,
             x_floor: float = 1e-6) -> np.ndarray:
    """Bin edges: log-graded on ``(0, x_split]`` and uniform on ``[x_split, x_max]``.

    The first bin is ``(0, x_floor]``.  The atom at exactly 0 is handled
    separately by the callers.
    """
    left = np.concatenate(([0.0], np.geomspace(x_floor, x_split, n_log)))
    right = np.linspace(x_split, x_max, n_uniform + 1)[1:]
    return np.concatenate((left, right))


def histogram(states: np.ndarray, edges: np.ndarray) -> tuple[float, np.ndarray]:
    """(atom mass at 0, bin probabilities) of a sample of states.

    States beyond the last edge are counted in the last bin.
    """
    states = np.asarray(states, dtype=float)
    n = states.size
    zero = states <= 0.0
    pos = states[~zero]
    b = np.clip(np.searchsorted(edges, pos, side="right") - 1, 0, edges.size - 2)
    counts = np.bincount(b, minlength=edges.size - 1)
    return float(zero.mean()), counts / n


def tv_distance(p0: float, p: np.ndarray, q0: float, q: np.ndarray) -> float:
    """``0.5 * (|p0 - q0| + sum |p - q|)`` for binned measures with an atom at 0."""
    return 0.5 * (abs(p0 - q0) + float(np.sum(np.abs(np.asarray(p) - np.asarray(q)))))


# ---------------------------------------------------------------------------
# Fleming-Viot estimator
# ---------------------------------------------------------------------------


@dataclass
class ParticleSystem:
    """State of a Fleming-Viot particle system."""

    n: int
    states: np.ndarray
    time: float = 0.0
    rebirth_count: int = 0


def empirical_qsd_fv(model: Model, eps: float, n_particles: int, t_burn: float, t_sample: float,
                     config: SimConfig | None = None, x0: float = 1.0, x_max: float | None = None,
                     return_system: bool = False):
    """Fleming-Viot estimate of the quasi-stationary density.

    All particles start at ``x0``.  After every base step, absorbed
    particles jump to the position of a survivor chosen uniformly.  After
    ``t_burn`` the positions are accumulated into a time-averaged
    histogram over ``t_sample`` (bins of :func:`tv_edges`).

    Returns
    -------
    DensityTable
        Bin-averaged density on the bin centres, with the bin widths as
        quadrature weights (so its mass is exactly 1).  ``meta`` records
        the rebirth count and the rebirth rate per unit time during
        sampling.  With ``return_system=True`` a ``(table, ParticleSystem)``
        pair is returned.

    Raises
    ------
    SimulationError
        If every particle is absorbed in a single step.
    """
    if n_particles < 1000:
        raise DomainError("the Fleming-Viot estimator needs at least 1000 particles")
    cfg = config or SimConfig()
    if x_max is None:
        x_max = default_x_max(model, eps)
    edges = tv_edges(x_max)
    coef = _family_coef(model, eps)
    kern = _backend.kernels(coef is not None, cfg.backend)
    if coef is None:
        coef = GenericCoef(model, float(eps))
    n_burn = int(round(t_burn / cfg.dt))
    n_steps = n_burn + int(round(t_sample / cfg.dt))
    x = np.full(int(n_particles), float(x0))
    counts = np.zeros(edges.size - 1, dtype=np.int64)
    bg = np.random.PCG64(np.random.SeedSequence(int(cfg.seed), spawn_key=(2**63,)))
    total, after, failed = kern.fv_run(x, coef, cfg.dt, cfg.n_sub, boundary_layer(eps), SCHEMES[cfg.scheme],
                                       n_steps, n_burn, bg, edges, counts)
    if failed >= 0:
        raise SimulationError(f"all particles absorbed in step {failed}; use a smaller dt")
    widths = np.diff(edges)
    probs = counts / counts.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    t_s = (n_steps - n_burn) * cfg.dt
    meta = {"model": model.name, "eps": repr(float(eps)), "n_particles": int(n_particles),
            "t_burn": t_burn, "t_sample": t_s, "rebirths": int(after),
            "rebirth_rate": after / t_s if t_s > 0 else float("nan"), "seed": cfg.seed}
    with np.errstate(divide="ignore"):
        logd = np.log(probs / widths)
    grid = Grid(centers, widths, {"x_min": float(edges[1]), "x_split": 0.1, "x_max": float(x_max),
                                  "n_log": 40, "n_uniform": 160})
    table = DensityTable(grid, logd, True, "u_eps_fv", meta)
    if return_system:
        return table, ParticleSystem(int(n_particles), x, n_steps * cfg.dt, int(total))
    return table


def fv_bin_masses(table: DensityTable) -> np.ndarray:
    """Bin probabilities of a Fleming-Viot density table."""
    return table.values * table.grid.weights


# ---------------------------------------------------------------------------
# Multiscale total-variation check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiscaleReport:
    """Per-time distances between the simulated law of ``X_t`` and its two-scale approximation.

    Attributes
    ----------
    times : ndarray
        Observation times (on the base time grid).
    tv_reference : ndarray
        TV to ``w(t) mu_eps + (1 - w(t)) delta_0`` with
        ``w(t) = exp(-lambda1 t) * alpha1(x0)``.
    tv_qsd : ndarray
        TV to ``mu_eps`` itself.
    tv_delta0 : ndarray
        TV to ``delta_0``, i.e. the survival probability.
    tv_conditional : ndarray
        TV between the law conditioned on survival and ``mu_eps``.
    bound : ndarray
        ``exp(-lambda2 t)``, the decay the theory attaches to ``tv_reference``.
    survival : ndarray
        Fraction of surviving paths.
    weight : ndarray
        ``w(t)``.
    """

    times: np.ndarray
    tv_reference: np.ndarray
    tv_qsd: np.ndarray
    tv_delta0: np.ndarray
    tv_conditional: np.ndarray
    bound: np.ndarray
    survival: np.ndarray
    weight: np.ndarray
    lambda1: float
    lambda2: float
    alpha1_x0: float


def multiscale_tv_check(model: Model, eps: float, x0: float, times: Sequence[float],
                        config: SimConfig, spectral=None) -> MultiscaleReport:
    """Compare the simulated law of ``X_t`` with the two-scale approximation.

    Parameters
    ----------
    times : sequence of float
        Observation times; rounded to multiples of ``config.dt``.
    spectral : SpectralResult, optional
        Precomputed eigen-solution; solved on demand otherwise.
    """
    from .. import spectral as sp

    res = spectral if spectral is not None else sp.spectral_solve(model, float(eps), 2)
    lam1, lam2 = float(res.lambdas[0]), float(res.lambdas[1])
    a1 = sp.alpha1(res, x0)
    steps = np.rint(np.asarray(times, dtype=float) / config.dt).astype(np.int64)
    order = np.argsort(steps)
    steps_sorted = steps[order]
    cfg = config.with_(t_max=max(int(steps_sorted[-1]), 1) * config.dt)
    _, _, obs = _run(model, eps, x0, cfg, obs_steps=steps_sorted)
    edges = tv_edges(res.problem.transform.x_max)
    q = sp.qsd_bin_masses(res, edges)
    out = {k: np.empty(steps.size) for k in ("ref", "qsd", "d0", "cond", "surv", "w")}
    for col, i in enumerate(order):
        t = steps[i] * config.dt
        p0, p = histogram(obs[:, col], edges)
        w = math.exp(-lam1 * t) * a1
        out["ref"][i] = tv_distance(p0, p, 1.0 - w, w * q)
        out["qsd"][i] = tv_distance(p0, p, 0.0, q)
        out["d0"][i] = 1.0 - p0
        out["cond"][i] = tv_distance(0.0, p / (1.0 - p0), 0.0, q) if p0 < 1.0 else float("nan")
        out["surv"][i] = 1.0 - p0
        out["w"][i] = w
    tt = steps * config.dt
    return MultiscaleReport(tt, out["ref"], out["qsd"], out["d0"], out["cond"], np.exp(-lam2 * tt),
                            out["surv"], out["w"], lam1, lam2, a1)


# ---------------------------------------------------------------------------
# Demographic-only contrast
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContrastResult:
    """Mean extinction times with and without environmental noise.

    ``exp_fit_*`` regress ``ln E[T_0]`` on ``eps^-2`` and ``loglog_fit_*``
    regress ``ln E[T_0]`` on ``ln eps``; censored ladder points are excluded.
    """

    eps: np.ndarray
    mean_full: np.ndarray
    se_full: np.ndarray
    censored_full: np.ndarray
    mean_demo: np.ndarray
    se_demo: np.ndarray
    censored_demo: np.ndarray
    exp_fit_demo: ScalingFit | None
    loglog_fit_full: ScalingFit | None
    exp_fit_full: ScalingFit | None
    loglog_fit_demo: ScalingFit | None

    @property
    def slope_ratio(self) -> float:
        """Ratio of the ``eps^-2`` slopes (demographic-only over full model)."""
        if self.exp_fit_demo is None or self.exp_fit_full is None:
            return float("nan")
        return self.exp_fit_demo.slope / self.exp_fit_full.slope


def demographic_only_contrast(model: Model, eps_list: Sequence[float], x0: float, config: SimConfig,
                              config_demo: SimConfig | None = None, r2_min: float = 0.95,
                              max_censored: float = 0.05) -> ContrastResult:
    """Mean extinction times for the full model and for ``sigma = 0``.

    Points whose censored fraction exceeds ``max_censored`` are reported
    but excluded from the fits.
    """
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    demo = model.demographic_only()
    cd = config_demo or config
    rows = {k: [] for k in ("mf", "sf", "cf", "md", "sd", "cdm")}
    for e in eps:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CensoringWarning)
            f = sample_extinction_times(model, e, x0, config)
            d = sample_extinction_times(demo, e, x0, cd)
        rows["mf"].append(f.mean), rows["sf"].append(f.se), rows["cf"].append(f.censored_fraction)
        rows["md"].append(d.mean), rows["sd"].append(d.se), rows["cdm"].append(d.censored_fraction)
    arr = {k: np.asarray(v) for k, v in rows.items()}

    def fits(mean, cens):
        ok = cens <= max_censored
        if ok.sum() < 3:
            return None, None
        y = np.log(mean[ok])
        return (ols_fit(eps[ok] ** -2.0, y, "ln E vs eps^-2", r2_min=r2_min),
                ols_fit(np.log(eps[ok]), y, "ln E vs ln eps", r2_min=r2_min))

    ed, ld = fits(arr["md"], arr["cdm"])
    ef, lf = fits(arr["mf"], arr["cf"])
    return ContrastResult(eps, arr["mf"], arr["sf"], arr["cf"], arr["md"], arr["sd"], arr["cdm"],
                          ed, lf, ef, ld)


