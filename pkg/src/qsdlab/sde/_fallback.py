"""Pure-numpy path kernels.

Same call signatures and the same per-path random streams as the compiled
kernels, vectorized across paths.  Used when the extension is not built,
when ``QSDLAB_BACKEND=python`` is set, and for models outside the
theta-logistic family (``coef`` is then a :class:`GenericCoef`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_BUF = 4096


@dataclass(frozen=True)
class GenericCoef:
    """Coefficients of an arbitrary model, evaluated through its fields."""

    model: object
    eps: float


def make_alpha(coef):
    """Vectorized ``alpha_eps(x) = eps^2 a(x) + sigma(x)^2``."""
    if isinstance(coef, GenericCoef):
        model, eps = coef.model, coef.eps
        return lambda x: eps * eps * model.a.eval(x) + model.sigma.eval(x) ** 2
    mu, kappa, theta, sig, gam, eps = coef
    return lambda x: eps * eps * gam * x + sig * sig * x * x


def make_update(coef):
    """Vectorized one-step map ``(x, h, dB, dW, scheme) -> x'``."""
    if isinstance(coef, GenericCoef):
        model, eps = coef.model, coef.eps

        def update(x, h, dB, dW, scheme):
            noise = model.sigma.eval(x) * dB + eps * np.sqrt(np.maximum(model.a.eval(x), 0.0)) * dW
            if scheme == 0:
                return x + model.b.eval(x) * h + noise
            g = model.b.eval(x) / x
            return (x + x * np.maximum(g, 0.0) * h + noise) / (1.0 + np.maximum(-g, 0.0) * h)

        return update

    mu, kappa, theta, sig, gam, eps = coef

    def update(x, h, dB, dW, scheme):
        xt = x if theta == 1.0 else np.power(x, theta)
        g = mu - kappa * xt
        if scheme == 0:
            return x + x * g * h + sig * x * dB + eps * np.sqrt(np.maximum(gam * x, 0.0)) * dW
        return ((x + x * np.maximum(g, 0.0) * h + sig * x * dB + eps * np.sqrt(np.maximum(gam * x, 0.0)) * dW)
                / (1.0 + np.maximum(-g, 0.0) * h))

    return update


class _Streams:
    """Per-path buffers read sequentially from each path's generator.

    ``kind`` selects standard normals or standard uniforms.
    """

    def __init__(self, bitgens, size=_BUF, kind="normal"):
        self.gens = [np.random.Generator(bg) for bg in bitgens]
        self.size = size
        self.draw = (lambda g, k: g.standard_normal(k)) if kind == "normal" else (lambda g, k: g.random(k))
        self.buf = np.empty((len(bitgens), size))
        for i, g in enumerate(self.gens):
            self.buf[i] = self.draw(g, size)
        self.cur = np.zeros(len(bitgens), dtype=np.int64)

    def ensure(self, idx, need):
        low = idx[self.cur[idx] + need > self.size]
        for i in low:
            c = self.cur[i]
            rest = self.buf[i, c:].copy()
            self.buf[i, : rest.size] = rest
            self.buf[i, rest.size:] = self.draw(self.gens[i], c)
            self.cur[i] = 0

    def take(self, idx):
        c = self.cur[idx]
        z1 = self.buf[idx, c]
        z2 = self.buf[idx, c + 1]
        self.cur[idx] = c + 2
        return z1, z2

    def take_one(self, idx):
        c = self.cur[idx]
        self.cur[idx] = c + 1
        return self.buf[idx, c]


def run_paths(x0, coef, dt, n_sub, x_bl, n_steps, scheme, mode, beta, obs_steps, bitgens,
              ubitgens, t_out, status_out, obs_out):
    update = make_update(coef)
    alpha = make_alpha(coef)
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    obs_steps = np.asarray(obs_steps, dtype=np.int64)
    streams = _Streams(bitgens)
    ustreams = _Streams(ubitgens, kind="uniform") if mode == 1 else None
    x = x0.copy()
    status = np.ones(n, dtype=np.int8)
    T = np.full(n, n_steps * dt)
    j_obs = 0
    while j_obs < obs_steps.size and obs_steps[j_obs] == 0:
        obs_out[:, j_obs] = x
        j_obs += 1
    active = np.arange(n)
    sqrt_dt = np.sqrt(dt)
    h_sub = dt / n_sub
    sh_sub = np.sqrt(h_sub)
    for k in range(n_steps):
        if active.size == 0:
            break
        xa = x[active]
        refined = xa < x_bl
        plain = active[~refined]
        fine = active[refined]
        if plain.size:
            streams.ensure(plain, 2)
            z1, z2 = streams.take(plain)
            xp = x[plain]
            xn = update(xp, dt, sqrt_dt * z1, sqrt_dt * z2, scheme)
            x[plain] = xn
            dead = xn <= 0.0
            if dead.any():
                d = plain[dead]
                status[d], x[d], T[d] = 0, 0.0, k * dt + 1 * dt
            if mode == 1:
                live = plain[~dead]
                ustreams.ensure(live, 1)
                u = np.ones(plain.size)
                u[~dead] = ustreams.take_one(live)
                with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                    pc = np.exp(-2.0 * (beta - xp) * (beta - xn) / (alpha(xp) * dt))
                out = (xn >= beta) | (u < pc)
                out &= ~dead
                if out.any():
                    o = plain[out]
                    status[o], T[o] = 2, k * dt + 1 * dt
        if fine.size:
            streams.ensure(fine, 2 * n_sub)
            alive = fine
            for s in range(n_sub):
                if alive.size == 0:
                    break
                z1, z2 = streams.take(alive)
                xp = x[alive]
                xn = update(xp, h_sub, sh_sub * z1, sh_sub * z2, scheme)
                x[alive] = xn
                dead = xn <= 0.0
                stop = dead.copy()
                if dead.any():
                    d = alive[dead]
                    status[d], x[d], T[d] = 0, 0.0, k * dt + (s + 1) * h_sub
                if mode == 1:
                    live = alive[~dead]
                    ustreams.ensure(live, 1)
                    u = np.ones(alive.size)
                    u[~dead] = ustreams.take_one(live)
                    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                        pc = np.exp(-2.0 * (beta - xp) * (beta - xn) / (alpha(xp) * h_sub))
                    out = ((xn >= beta) | (u < pc)) & ~dead
                    if out.any():
                        o = alive[out]
                        status[o], T[o] = 2, k * dt + (s + 1) * h_sub
                    stop |= out
                alive = alive[~stop]
        active = active[status[active] == 1]
        while j_obs < obs_steps.size and obs_steps[j_obs] == k + 1:
            obs_out[:, j_obs] = x
            j_obs += 1
    while j_obs < obs_steps.size:
        obs_out[:, j_obs] = x
        j_obs += 1
    t_out[:] = T
    status_out[:] = status


def fv_run(x, coef, dt, n_sub, x_bl, scheme, n_steps, n_burn, bitgen, edges, counts):
    update = make_update(coef)
    gen = np.random.Generator(bitgen)
    n = x.size
    n_bins = edges.size - 1
    total = after = 0
    sqrt_dt = np.sqrt(dt)
    h_sub = dt / n_sub
    sh_sub = np.sqrt(h_sub)
    for k in range(n_steps):
        refined = x < x_bl
        m = np.where(refined, n_sub, 1)
        off = np.concatenate(([0], np.cumsum(2 * m)[:-1]))
        Z = gen.standard_normal(int(2 * m.sum()))
        xn = x.copy()
        dead = np.zeros(n, dtype=bool)
        plain = np.flatnonzero(~refined)
        if plain.size:
            o = off[plain]
            v = update(x[plain], dt, sqrt_dt * Z[o], sqrt_dt * Z[o + 1], scheme)
            xn[plain] = v
            dead[plain] = v <= 0.0
        fine = np.flatnonzero(refined)
        if fine.size:
            o = off[fine]
            xf = x[fine]
            df = np.zeros(fine.size, dtype=bool)
            for s in range(n_sub):
                live = ~df
                v = update(xf[live], h_sub, sh_sub * Z[o[live] + 2 * s], sh_sub * Z[o[live] + 2 * s + 1], scheme)
                xf[live] = v
                df[live] = v <= 0.0
            xn[fine] = xf
            dead[fine] = df
        surv = np.flatnonzero(~dead)
        if surv.size == 0:
            return total, after, k
        dead_idx = np.flatnonzero(dead)
        x[:] = xn
        if dead_idx.size:
            u = gen.random(dead_idx.size)
            jj = np.minimum((u * surv.size).astype(np.int64), surv.size - 1)
            x[dead_idx] = xn[surv[jj]]
            total += dead_idx.size
            if k >= n_burn:
                after += dead_idx.size
        if k >= n_burn:
            b = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
            counts += np.bincount(b, minlength=n_bins).astype(counts.dtype)
    return total, after, -1
