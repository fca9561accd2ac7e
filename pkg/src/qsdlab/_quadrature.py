"""Composite Gauss-Legendre antiderivatives on panel grids.

Several quantities (the potential, the scale function, the r-function,
the Liouville transform) are antiderivatives that must be evaluated at
many points, sometimes nested inside one another.  Instead of calling an
adaptive integrator per point, an antiderivative is tabulated once on a
fine panel grid in a smoothing variable and then evaluated anywhere by
adding one extra Gauss-Legendre panel.  For the analytic integrands used
here this is accurate to near machine precision.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    if order not in _GL_CACHE:
        t, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (0.5 * (t + 1.0), 0.5 * w)
    return _GL_CACHE[order]


class PanelAntiderivative:
    """``F(v) = int_{v_anchor}^{v} g(w) dw`` on ``[v_knots[0], v_knots[-1]]``.

    Parameters
    ----------
    g : callable
        Vectorized integrand in the panel variable.
    v_knots : array_like
        Strictly increasing panel boundaries.
    v_anchor : float
        Point where ``F`` vanishes; inserted as a knot if absent.
    order : int
        Gauss-Legendre order per panel.
    """

    def __init__(self, g: Callable[[np.ndarray], np.ndarray], v_knots, v_anchor: float, order: int = 16):
        knots = np.unique(np.append(np.asarray(v_knots, dtype=float), float(v_anchor)))
        self.g = g
        self.order = order
        self.knots = knots
        t, w = gauss_legendre(order)
        h = np.diff(knots)
        pts = knots[:-1, None] + h[:, None] * t[None, :]
        vals = g(pts.ravel()).reshape(pts.shape)
        panel = (vals * w[None, :]).sum(axis=1) * h
        cum = np.concatenate(([0.0], np.cumsum(panel)))
        ia = int(np.searchsorted(knots, v_anchor))
        self.values = cum - cum[ia]
        self.v_anchor = float(v_anchor)

    @property
    def lo(self) -> float:
        return float(self.knots[0])

    @property
    def hi(self) -> float:
        return float(self.knots[-1])

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        shape = v.shape
        v = v.ravel()
        tol_lo, tol_hi = 1e-12 * max(1.0, abs(self.lo)), 1e-12 * max(1.0, abs(self.hi))
        if np.any(v < self.lo - tol_lo) or np.any(v > self.hi + tol_hi):
            raise ValueError(f"argument outside tabulated range [{self.lo:g}, {self.hi:g}]")
        v = np.clip(v, self.lo, self.hi)
        k = np.clip(np.searchsorted(self.knots, v, side="right") - 1, 0, len(self.knots) - 2)
        v0 = self.knots[k]
        dv = v - v0
        t, w = gauss_legendre(self.order)
        pts = v0[:, None] + dv[:, None] * t[None, :]
        vals = self.g(pts.ravel()).reshape(pts.shape)
        out = self.values[k] + (vals * w[None, :]).sum(axis=1) * dv
        return out.reshape(shape) if shape else out[0]


class LogAntiderivative:
    """``F(x) = int_{anchor}^{x} f(s) ds`` for ``x`` in ``[x_lo, x_hi]``.

    Integration runs in ``u = ln s`` so that integrands with algebraic
    behaviour at the origin become smooth.
    """

    def __init__(self, f, x_lo: float, x_hi: float, anchor: float, du: float = 0.05, order: int = 16):
        u_lo, u_hi = np.log(x_lo), np.log(x_hi)
        n = max(2, int(np.ceil((u_hi - u_lo) / du)) + 1)
        self.f = f
        self.x_lo, self.x_hi, self.anchor = float(x_lo), float(x_hi), float(anchor)
        self._F = PanelAntiderivative(lambda u: f(np.exp(u)) * np.exp(u), np.linspace(u_lo, u_hi, n),
                                      np.log(anchor), order)

    def __call__(self, x):
        return self._F(np.log(np.asarray(x, dtype=float)))

    def knots_x(self) -> np.ndarray:
        return np.exp(self._F.knots)
