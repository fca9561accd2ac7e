"""Compiled vs numpy path kernels: wall time and agreement.

Runs the extinction-time sampler, the exit-event sampler and the
Fleming-Viot loop with both backends on identical seeds, checks that the
outputs are bit-identical, and prints the time per backend and the
speed-up.

Usage::

    python benchmarks/bench_kernels.py [--paths N] [--eps E] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qsdlab.model import build_logistic
from qsdlab.sde import BACKEND, SimConfig, empirical_qsd_fv, exit_event_stats, sample_extinction_times


def _best(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=2000, help="paths per sampler run")
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--repeat", type=int, default=3, help="timing repetitions (best is reported)")
    args = p.parse_args(argv)

    if BACKEND != "compiled":
        print("compiled kernels are not built; only the numpy backend is available")
        return 1

    model = build_logistic(1.0, 1.0, 1.0, 1.0)
    cfg = SimConfig(n_paths=args.paths, seed=2024)
    cases = {
        "extinction times": lambda c: sample_extinction_times(model, args.eps, 1.0, c).times,
        "exit events": lambda c: exit_event_stats(model, args.eps, 0.25, 0.5, c),
        "Fleming-Viot": lambda c: empirical_qsd_fv(model, 0.1, 2000, 2.0, 8.0, c).values,
    }
    print(f"{'kernel':<18}{'compiled [s]':>14}{'numpy [s]':>12}{'speed-up':>10}  identical")
    for name, fn in cases.items():
        tc, oc = _best(lambda: fn(cfg.with_(backend="compiled")), args.repeat)
        tp, op = _best(lambda: fn(cfg.with_(backend="python")), args.repeat)
        same = np.array_equal(oc, op) if isinstance(oc, np.ndarray) else oc == op
        print(f"{name:<18}{tc:>14.3f}{tp:>12.3f}{tp / tc:>10.1f}  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
