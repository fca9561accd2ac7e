"""Command-line front end.

Every subcommand reads a TOML config (``--config``; built-in defaults when
omitted), runs one pipeline and writes headed CSV/text artifacts into the
run directory (``--out``).  Exit codes: 0 pass, 1 verdict failure,
2 usage or config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import asymptotics as asy
from . import scale as sc
from . import spectral as sp
from .config import RunConfig, load_config
from .density import (default_x_max, gamma_logpdf, gibbs_density, limit_gibbs, logistic_stationary_params,
                      make_grid, stationary_density, total_variation)
from .errors import ConfigError, DomainError, ModelError, NumericalError, QsdLabError
from .io import read_csv, write_csv, write_text
from .model import check_hypotheses, stochastic_growth_rate
from .sde import (CensoringWarning, demographic_only_contrast, empirical_qsd_fv, exit_event_stats,
                  fv_bin_masses, multiscale_tv_check, normalized_extinction_test, sample_extinction_times,
                  tv_edges)

EXIT_PASS, EXIT_VERDICT, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

#: Contrast ladder of quick sweeps (cheaper than the default, still in the exponential regime).
QUICK_CONTRAST_EPS = (0.5, 0.45, 0.4, 0.35)

SUITES = ("lambda1", "mean", "law", "qsd", "gap", "oracle", "contrast", "multiscale")


class Run:
    """A config plus output directory, with helpers for headed artifacts."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.model = cfg.model()
        self.hash = cfg.config_hash()

    def csv(self, name: str, columns, rows, meta=None) -> Path:
        return write_csv(self.out / name, columns, rows, config_hash=self.hash, seed=self.cfg.seed, meta=meta)

    def text(self, name: str, text: str, meta=None) -> Path:
        return write_text(self.out / name, text, config_hash=self.hash, seed=self.cfg.seed, meta=meta)

    def eps_list(self, given) -> list[float]:
        if given:
            return list(given)
        return [self.cfg.sweep.eps[len(self.cfg.sweep.eps) // 2]]


def _tag(eps: float) -> str:
    return f"eps{eps:g}"


def _fmt_kv(d: dict) -> str:
    def f(v):
        if isinstance(v, float):
            return f"{v:.10g}"
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(f(x) for x in v) + "]"
        return str(v)

    return "\n".join(f"{k} = {f(v)}" for k, v in d.items())


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_check_model(run: Run, args) -> int:
    grid = np.geomspace(1e-4, args.horizon, 4000)
    rep = check_hypotheses(run.model, grid)
    text = rep.to_text()
    print(text)
    run.text("check_model.txt", text)
    if not rep.ok:
        for c in rep.hard_failures:
            print(f"hypothesis (H)({c.clause}) fails: {c.detail}", file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_PASS


def cmd_gibbs(run: Run, args) -> int:
    m, g = run.model, run.cfg.grid
    x_max = g.x_max or default_x_max(m, 0.0 if m.sigma_d1_0 != 0 else min(run.eps_list(args.eps)), g.x_min)
    grid = make_grid(x_max, g.n, g.x_min)
    for e in run.eps_list(args.eps):
        t = gibbs_density(m, e, grid)
        p = run.csv(f"gibbs_{_tag(e)}.csv", ("x", "value", "log_value"), t.rows(), t.header())
        print(f"wrote {p}")
    if m.sigma_d1_0 != 0:
        t = limit_gibbs(m, grid)
        print(f"wrote {run.csv('limit_gibbs.csv', ('x', 'value', 'log_value'), t.rows(), t.header())}")
        if stochastic_growth_rate(m) > 0:
            t = stationary_density(m, grid)
            print(f"wrote {run.csv('stationary.csv', ('x', 'value', 'log_value'), t.rows(), t.header())}")
    return EXIT_PASS


def cmd_scale(run: Run, args) -> int:
    status = EXIT_PASS
    for e in run.eps_list(args.eps):
        ctx = sc.ScaleContext(run.model, e, run.cfg.scale.x_star, run.cfg.scale.beta)
        sol = sc.exit_solution(ctx, run.cfg.grid.exit_n)
        run.csv(f"scale_{_tag(e)}.csv", ("x", "s", "r"), sol.rows(), sol.header())
        formula = sc.mean_exit_time_xstar(ctx)
        bvp = float(sc.mean_exit_time_bvp(ctx, np.array([ctx.x_star])).u[0])
        rel = abs(bvp - formula) / abs(formula)
        summary = {"eps": e, "x_star": ctx.x_star, "beta": ctx.beta, "s0_plus": sol.s0_plus,
                   "r0_plus": sol.r0_plus, "exit_prob_beta": float(sc.exit_prob_beta(ctx, ctx.x_star)),
                   "mean_exit_time_formula": formula, "mean_exit_time_bvp": bvp, "relative_difference": rel,
                   "verdict": "pass" if rel <= 1e-4 else "fail"}
        text = _fmt_kv(summary)
        print(text + "\n")
        run.text(f"scale_{_tag(e)}_summary.txt", text)
        if rel > 1e-4:
            status = EXIT_VERDICT
    return status


def _oracle(run: Run, name: str) -> int:
    res = sp.solve_eigen(sp.oracle_problem(name, run.cfg.grid.spectral_n), 2)
    exact = sp.ORACLE_EXACT[name]
    tol = 1e-4 if name == "harmonic" else 1e-6
    err = [abs(float(l) - x) for l, x in zip(res.lambdas, exact)]
    ok = max(err) <= tol
    text = (f"oracle {name}: lambda1={res.lambdas[0]:.10f} (exact {exact[0]}), "
            f"lambda2={res.lambdas[1]:.10f} (exact {exact[1]}); max error {max(err):.3g} "
            f"(tolerance {tol:g}): {'pass' if ok else 'fail'}")
    print(text)
    run.text(f"oracle_{name}.txt", text)
    return EXIT_PASS if ok else EXIT_VERDICT


def cmd_spectrum(run: Run, args) -> int:
    if args.oracle:
        return _oracle(run, args.oracle)
    status = EXIT_PASS
    n = run.cfg.grid.spectral_n
    for e in run.eps_list(args.eps):
        res = sp.spectral_solve(run.model, e, 2, n, run.cfg.grid.x_max)
        summary = {"eps": e, **{k: v for k, v in res.summary().items() if k != "eps"},
                   "alpha1_x0": sp.alpha1(res, run.cfg.x0), "x0": run.cfg.x0}
        ok = res.lambdas[0] < res.lambdas[1]
        summary["ordering"] = "lambda1 < lambda2" if ok else "VIOLATED"
        text = json.dumps(summary, indent=2)
        print(text)
        run.text(f"spectrum_{_tag(e)}_summary.txt", text)
        meta = {"model": run.model.name, "eps": repr(e), "lambda1": repr(float(res.lambdas[0])),
                "lambda2": repr(float(res.lambdas[1]))}
        run.csv(f"spectrum_{_tag(e)}.csv", ("y", "psi1", "psi2"), res.rows(), meta)
        q = sp.qsd_density(run.model, e, n=n)
        run.csv(f"qsd_{_tag(e)}.csv", ("x", "value", "log_value"), q.table.rows(), q.table.header())
        if not ok:
            status = EXIT_VERDICT
    return status


def cmd_simulate(run: Run, args) -> int:
    cfg = run.cfg.sim
    if args.n_paths is not None:
        cfg = cfg.with_(n_paths=args.n_paths)
    if args.t_max is not None:
        cfg = cfg.with_(t_max=args.t_max)
    x0 = args.x0 if args.x0 is not None else run.cfg.x0
    for e in run.eps_list(args.eps):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", CensoringWarning)
            s = sample_extinction_times(run.model, e, x0, cfg)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        run.csv(f"extinction_{_tag(e)}.csv", ("path_id", "t0", "censored"), s.rows(), s.header())
        print(f"eps={e:g}: mean T0 = {s.mean:.6g} +- {s.se:.3g} (censored {s.censored_fraction:.3%}, "
              f"n={s.n})")
        if args.fv:
            f = run.cfg.fv
            t = empirical_qsd_fv(run.model, e, f.n_particles, f.t_burn, f.t_sample, cfg, x0=x0)
            run.csv(f"fv_{_tag(e)}.csv", ("x", "value", "log_value"), t.rows(), t.header())
            print(f"eps={e:g}: Fleming-Viot rebirth rate {t.meta['rebirth_rate']:.6g} per unit time "
                  f"({f.n_particles} particles)")
    return EXIT_PASS


# ---------------------------------------------------------------------------
# Sweep suites
# ---------------------------------------------------------------------------


def _mc_ladder(run: Run, quick: bool) -> tuple[float, ...]:
    eps = run.cfg.sweep.eps
    if stochastic_growth_rate(run.model) > 0:
        eps = tuple(e for e in eps if e >= run.cfg.sweep.mc_eps_min)
    return eps


def _mc_sim(run: Run):
    return run.cfg.sim.with_(dt=run.cfg.sweep.mc_dt)


def _paths(run: Run, quick: bool) -> int:
    return run.cfg.sweep.quick_paths if quick else run.cfg.sim.n_paths


def suite_lambda1(run: Run, quick: bool) -> asy.Section:
    sec = asy.Section("extinction-rate exponent")
    if not stochastic_growth_rate(run.model) > 0:
        tr = asy.lambda1_log_trend(asy.SweepSpec(run.model, run.cfg.sweep.eps, n_grid=run.cfg.grid.spectral_n))
        sec.notes.append("Lambda0 < 0: exploratory lambda1*|ln eps| trend only, no verdict")
        sec.figures["lambda1_log_trend.csv"] = (("eps", "lambda1", "lambda1_abs_ln_eps"),
                                                list(zip(tr["eps"], tr["lambda1"], tr["lambda1_abs_ln_eps"])))
        return sec
    fit = asy.sweep_lambda1(asy.SweepSpec(run.model, run.cfg.sweep.eps, n_grid=run.cfg.grid.spectral_n))
    sec.verdicts += asy.fit_verdicts("extinction rate", "ln lambda1 vs ln eps", fit)
    sec.figures["lambda1_vs_eps.csv"] = (("eps", "lambda1"), list(zip(fit.data["eps"], fit.data["lambda1"])))
    return sec


def suite_mean(run: Run, quick: bool, cache: dict) -> asy.Section:
    sec = asy.Section("mean extinction time")
    spec = asy.SweepSpec(run.model, _mc_ladder(run, quick), n_paths=_paths(run, quick), sim=_mc_sim(run))
    fit = asy.sweep_mean_extinction(spec, run.cfg.x0, samples=cache)
    d = fit.data
    sec.verdicts += asy.fit_verdicts("mean extinction time", fit.kind, fit)
    if len(d["excluded"]):
        sec.notes.append(f"excluded for censoring > 5%: eps = {list(map(float, d['excluded']))}")
    sec.figures["mean_extinction_vs_eps.csv"] = (("eps", "mean_t0", "se", "censored_fraction"),
                                                 list(zip(d["eps"], d["mean"], d["se"], d["censored_fraction"])))
    return sec


def suite_law(run: Run, quick: bool, cache: dict) -> asy.Section:
    sec = asy.Section("extinction-time law")
    if not stochastic_growth_rate(run.model) > 0:
        sec.notes.append("Lambda0 < 0: reciprocal and exponential-law checks not applicable")
        return sec
    eps = run.cfg.sweep.law_eps[-1:] if quick else run.cfg.sweep.law_eps
    cfg = _mc_sim(run).with_(n_paths=_paths(run, quick))
    rows = []
    for e in eps:
        s = cache.get(float(e))
        if s is None or s.config != cfg or s.x0 != run.cfg.x0:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CensoringWarning)
                s = sample_extinction_times(run.model, e, run.cfg.x0, cfg)
            cache[float(e)] = s
        lam = float(sp.extinction_rate(run.model, e, n=run.cfg.grid.spectral_n))
        prod = lam * s.mean
        sec.verdicts.append(asy.Verdict("reciprocal law", f"lambda1*E[T0] at eps={e:g}", "[0.8, 1.2]", prod,
                                        "-", 0.8 <= prod <= 1.2))
        ks = normalized_extinction_test(s, lam)
        sec.verdicts.append(asy.Verdict("exponential law", f"KS(lambda1*T0, Exp(1)) at eps={e:g}", "<=0.05",
                                        ks, "-", ks <= 0.05))
        rows.append((e, lam, s.mean, s.se, prod, ks))
    sec.figures["extinction_law.csv"] = (("eps", "lambda1", "mean_t0", "se", "product", "ks"), rows)
    return sec


def suite_qsd(run: Run, quick: bool) -> asy.Section:
    sec = asy.Section("QSD convergence")
    conv = asy.qsd_convergence_sweep(asy.SweepSpec(run.model, run.cfg.sweep.eps, n_grid=run.cfg.grid.spectral_n))
    e_min = float(conv.eps[-1])
    if conv.tv is not None:
        sec.verdicts.append(asy.Verdict("QSD convergence", "TV(u_eps, u_0) decreasing along ladder", "monotone",
                                        float(conv.tv[-1]), "-", conv.monotone))
        if e_min <= 0.05:
            sec.verdicts.append(asy.Verdict("QSD convergence", f"TV(u_eps, u_0) at eps={e_min:g}", "<=0.05",
                                            float(conv.tv[-1]), "-", float(conv.tv[-1]) <= 0.05))
        sec.figures["qsd_tv_vs_eps.csv"] = (("eps", "tv", "envelope"), list(zip(conv.eps, conv.tv, conv.envelope)))
    else:
        sec.verdicts.append(asy.Verdict("QSD concentration", f"mu_eps((0,{conv.delta:g})) increasing along ladder",
                                        "monotone", float(conv.mass_near_zero[-1]), "-", conv.monotone))
        if e_min <= 0.01:
            m = float(conv.mass_near_zero[-1])
            sec.verdicts.append(asy.Verdict("QSD concentration", f"mu_eps((0,{conv.delta:g})) at eps={e_min:g}",
                                            ">=0.9", m, "-", m >= 0.9))
        sec.figures["qsd_mass_near_zero.csv"] = (("eps", "mass", "envelope"),
                                                 list(zip(conv.eps, conv.mass_near_zero, conv.envelope)))
    env = conv.envelope
    stable = bool(np.all(np.isfinite(env)) and env.max() <= 10.0 * env.min())
    sec.verdicts.append(asy.Verdict("QSD envelope", f"sup u_eps x^{conv.envelope_power:g} on (0,0.1) stable",
                                    "within factor 10", float(env.max() / env.min()), "-", stable))
    # Fleming-Viot cross-check at one ladder point
    e = run.cfg.sweep.multiscale_eps
    f = run.cfg.fv
    n_part, t_s = (2000, 30.0) if quick else (f.n_particles, f.t_sample)
    table = empirical_qsd_fv(run.model, e, n_part, f.t_burn, t_s, run.cfg.sim)
    res = sp.spectral_solve(run.model, e, 2, run.cfg.grid.spectral_n)
    q = sp.qsd_bin_masses(res, tv_edges(table.grid.grading["x_max"]))
    tv = 0.5 * float(np.abs(fv_bin_masses(table) - q).sum())
    sec.verdicts.append(asy.Verdict("QSD estimators", f"TV(Fleming-Viot, spectral) at eps={e:g}", "<=0.05", tv, "-",
                                    tv <= 0.05))
    return sec


def suite_gap(run: Run, quick: bool) -> asy.Section:
    sec = asy.Section("spectral gap")
    if not stochastic_growth_rate(run.model) > 0:
        sec.notes.append("Lambda0 < 0: gap sweep not applicable")
        return sec
    g = asy.spectral_gap_sweep(asy.SweepSpec(run.model, run.cfg.sweep.eps, n_grid=run.cfg.grid.spectral_n))
    sec.verdicts.append(asy.Verdict("spectral gap", "min lambda2 / median lambda2", ">=0.1",
                                    float(g.lambda2.min() / np.median(g.lambda2)), "-", g.uniform_positivity))
    sec.verdicts.append(asy.Verdict("spectral gap", "max lambda2 / min lambda2", "<=3", g.lambda2_band, "-",
                                    g.lambda2_band <= 3.0))
    sec.verdicts.append(asy.Verdict("spectral gap", "max lambda1 / min lambda1", ">=10", g.lambda1_drop, "-",
                                    g.lambda1_drop >= 10.0))
    sec.figures["spectral_gap.csv"] = (("eps", "lambda1", "lambda2", "gap"),
                                       list(zip(g.eps, g.lambda1, g.lambda2, g.gap)))
    return sec


def suite_oracle(run: Run, quick: bool) -> asy.Section:
    sec = asy.Section("oracles")
    n = run.cfg.grid.spectral_n
    for name, tol in (("harmonic", 1e-4), ("box", 1e-6)):
        r = sp.solve_eigen(sp.oracle_problem(name, n), 2)
        err = max(abs(float(l) - x) for l, x in zip(r.lambdas, sp.ORACLE_EXACT[name]))
        sec.verdicts.append(asy.Verdict("oracle", f"{name} eigenvalue error", "0", err, f"{tol:g}", err <= tol))
    m = run.model
    try:
        shape, rate = logistic_stationary_params(m)
    except DomainError:
        sec.notes.append("Gamma stationary oracle needs a logistic model with Lambda0 > 0")
    else:
        grid = make_grid(default_x_max(m), run.cfg.grid.n, run.cfg.grid.x_min)
        tv = total_variation(grid, stationary_density(m, grid).values, np.exp(gamma_logpdf(grid.nodes, shape, rate)))
        sec.verdicts.append(asy.Verdict("oracle", "TV(stationary density, Gamma)", "0", tv, "1e-06", tv <= 1e-6))
    e = run.cfg.sweep.oracle_eps
    ctx = sc.ScaleContext(m, e, run.cfg.scale.x_star, run.cfg.scale.beta)
    formula = sc.mean_exit_time_xstar(ctx)
    bvp = float(sc.mean_exit_time_bvp(ctx, np.array([ctx.x_star])).u[0])
    rel = abs(bvp - formula) / abs(formula)
    sec.verdicts.append(asy.Verdict("oracle", f"mean exit time formula vs BVP (rel) at eps={e:g}", "0", rel, "1e-04",
                                    rel <= 1e-4))
    cfg = run.cfg.sim.with_(n_paths=2000 if quick else run.cfg.sim.n_paths)
    st = exit_event_stats(m, e, ctx.x_star, ctx.beta, cfg)
    p = float(sc.exit_prob_beta(ctx, ctx.x_star))
    z = abs(st.freq_beta - p) / st.freq_se
    sec.verdicts.append(asy.Verdict("oracle", f"exit probability MC vs formula at eps={e:g} (in SE)", f"{p:.6g}",
                                    z, "3 SE", z <= 3.0))
    return sec


def suite_contrast(run: Run, quick: bool) -> asy.Section:
    sec = asy.Section("demographic-only contrast")
    eps = QUICK_CONTRAST_EPS if quick else run.cfg.sweep.contrast_eps
    n_full = _paths(run, quick)
    n_demo = min(run.cfg.sweep.contrast_paths // (2 if quick else 1), n_full)
    cfg = run.cfg.sim.with_(n_paths=n_full)
    cdemo = run.cfg.sim.with_(n_paths=n_demo, t_max=max(run.cfg.sim.t_max, 2e6))
    c = demographic_only_contrast(run.model, eps, run.cfg.x0, cfg, cdemo)
    if c.exp_fit_demo is None or c.loglog_fit_full is None:
        sec.notes.append("too many censored points for the contrast fits")
        sec.verdicts.append(asy.Verdict("contrast", "fits available", "yes", float("nan"), "-", False))
        return sec
    sec.verdicts.append(asy.Verdict("contrast", "sigma=0: ln E[T0] vs eps^-2 R^2", ">=0.95", c.exp_fit_demo.r2, "-",
                                    c.exp_fit_demo.r2_ok))
    sec.verdicts.append(asy.Verdict("contrast", "full: ln E[T0] vs ln eps R^2", ">=0.95", c.loglog_fit_full.r2, "-",
                                    c.loglog_fit_full.r2_ok))
    ratio = c.slope_ratio
    sec.verdicts.append(asy.Verdict("contrast", "eps^-2 slope ratio (sigma=0 over full)", ">5", ratio, "-",
                                    ratio > 5.0))
    sec.figures["contrast.csv"] = (("eps", "mean_full", "se_full", "mean_demographic", "se_demographic"),
                                   list(zip(c.eps, c.mean_full, c.se_full, c.mean_demo, c.se_demo)))
    return sec


def suite_multiscale(run: Run, quick: bool) -> asy.Section:
    sec = asy.Section("multiscale estimate")
    if not stochastic_growth_rate(run.model) > 0:
        sec.notes.append("Lambda0 < 0: multiscale check not applicable")
        return sec
    e = run.cfg.sweep.multiscale_eps
    res = sp.spectral_solve(run.model, e, 2, run.cfg.grid.spectral_n)
    l1, l2 = float(res.lambdas[0]), float(res.lambdas[1])
    t_lo, t_hi, t_end = 3.0 / l2, 0.1 / l1, 5.0 / l1
    times = list(np.linspace(t_lo, t_hi, 5)) + [t_end] if t_lo < t_hi else [t_hi, t_end]
    n = 4000 if quick else run.cfg.sweep.multiscale_paths
    rep = multiscale_tv_check(run.model, e, run.cfg.x0, times, run.cfg.sim.with_(n_paths=n, t_max=t_end),
                              spectral=res)
    mid = np.arange(rep.times.size) < rep.times.size - 1
    worst = float(rep.tv_qsd[mid].max())
    sec.verdicts.append(asy.Verdict("multiscale", f"max TV(law X_t, mu_eps), t in [3/lambda2, 0.1/lambda1], eps={e:g}",
                                    "<=0.1", worst, "-", worst <= 0.1))
    d0 = float(rep.tv_delta0[~mid][0])
    sec.verdicts.append(asy.Verdict("multiscale", f"TV(law X_t, delta_0) at t=5/lambda1, eps={e:g}", "<=0.1", d0, "-",
                                    d0 <= 0.1))
    if t_lo >= t_hi:
        sec.notes.append("window [3/lambda2, 0.1/lambda1] is empty; checked at 0.1/lambda1 only")
    sec.figures["multiscale_tv.csv"] = (("t", "tv_reference", "tv_qsd", "tv_delta0", "tv_conditional", "bound"),
                                        list(zip(rep.times, rep.tv_reference, rep.tv_qsd, rep.tv_delta0,
                                                 rep.tv_conditional, rep.bound)))
    return sec


def run_suites(run: Run, suites: Sequence[str], quick: bool) -> asy.Report:
    cache: dict = {}
    sections = []
    for name in suites:
        t0 = time.perf_counter()
        if name == "lambda1":
            sec = suite_lambda1(run, quick)
        elif name == "mean":
            sec = suite_mean(run, quick, cache)
        elif name == "law":
            sec = suite_law(run, quick, cache)
        elif name == "qsd":
            sec = suite_qsd(run, quick)
        elif name == "gap":
            sec = suite_gap(run, quick)
        elif name == "oracle":
            sec = suite_oracle(run, quick)
        elif name == "contrast":
            sec = suite_contrast(run, quick)
        else:
            sec = suite_multiscale(run, quick)
        print(f"suite {name}: done in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
        sections.append(sec)
    return asy.emit_report(sections)


def _write_report(run: Run, report: asy.Report, meta: dict):
    run.text("report.txt", report.text, meta)
    run.csv("summary.csv", asy.Report.SUMMARY_HEADER, report.rows, meta)
    for name, (cols, rows) in report.figures.items():
        run.csv(name, cols, rows, meta)


def cmd_sweep(run: Run, args) -> int:
    suites = SUITES if args.suite == "all" else (args.suite,)
    report = run_suites(run, suites, args.quick)
    meta = {"model": run.model.name, "suite": args.suite, "quick": str(bool(args.quick)).lower()}
    _write_report(run, report, meta)
    print(report.text)
    return report.exit_status


def cmd_report(run: Run, args) -> int:
    path = run.out / "summary.csv"
    if not path.exists():
        raise ConfigError(f"no summary.csv in {str(run.out)!r}; run 'sweep' first")
    meta, cols, rows = read_csv(path)
    if tuple(cols) != asy.Report.SUMMARY_HEADER:
        raise ConfigError(f"{str(path)!r} is not a sweep summary")
    sections: dict[str, asy.Section] = {}
    for th, metric, expected, fitted, tol, verdict in rows:
        passed = None if verdict == "n/a" else verdict == "pass"
        sections.setdefault(th, asy.Section(th)).verdicts.append(
            asy.Verdict(th, metric, expected, float(fitted), tol, passed))
    report = asy.emit_report(list(sections.values()))
    print(f"summary from {path} (config_hash={meta.get('config_hash')}, seed={meta.get('seed')})")
    print(report.text)
    return report.exit_status


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=d, help="TOML run configuration")
    p.add_argument("--out", metavar="DIR", default=d, help="run directory for artifacts")
    p.add_argument("--seed", type=int, metavar="N", default=d, help="root RNG seed")
    p.add_argument("--threads", type=int, metavar="N", default=d, help="Monte Carlo worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsdlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qsdlab {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = add("check-model", help_="audit the structural hypotheses of the configured model")
    p.add_argument("--horizon", type=float, default=100.0, help="right end of the audit grid")
    p.set_defaults(func=cmd_check_model)

    eps_help = "noise level (repeatable)"
    p = add("gibbs", help_="tabulate Gibbs densities")
    p.add_argument("--eps", type=float, action="append", help=eps_help)
    p.set_defaults(func=cmd_gibbs)

    p = add("scale", help_="scale function, exit probability and mean exit time")
    p.add_argument("--eps", type=float, action="append", help=eps_help)
    p.set_defaults(func=cmd_scale)

    p = add("spectrum", help_="leading eigenpairs and the QSD")
    p.add_argument("--eps", type=float, action="append", help=eps_help)
    p.add_argument("--oracle", choices=("harmonic", "box"), help="solve a reference problem instead")
    p.set_defaults(func=cmd_spectrum)

    p = add("simulate", help_="Monte Carlo extinction times (and Fleming-Viot QSD)")
    p.add_argument("--eps", type=float, action="append", help=eps_help)
    p.add_argument("--x0", type=float, help="initial state")
    p.add_argument("--n-paths", type=int, help="number of paths")
    p.add_argument("--t-max", type=float, help="censoring horizon")
    p.add_argument("--fv", action="store_true", help="also estimate the QSD with a Fleming-Viot system")
    p.set_defaults(func=cmd_simulate)

    p = add("sweep", help_="run scaling-law suites and write a report")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--quick", action="store_true", help="reduced Monte Carlo budgets")
    p.set_defaults(func=cmd_sweep)

    p = add("report", help_="re-render the report of an earlier sweep")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.threads, args.out)
        out = Path(cfg.output_dir)
        run = Run(cfg, out)
        for e in getattr(args, "eps", None) or ():
            if not (e > 0 and math.isfinite(e)):
                raise ConfigError(f"--eps must be positive and finite, got {e}")
        return args.func(run, args)
    except (ConfigError, ModelError, DomainError) as exc:
        print(f"qsdlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"qsdlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except QsdLabError as exc:
        print(f"qsdlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
