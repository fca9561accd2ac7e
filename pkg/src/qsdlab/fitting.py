"""Ordinary least-squares scaling fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ScalingFit:
    """Result of a straight-line fit ``Y = slope * X + intercept``.

    ``X``/``Y`` are the transformed coordinates (e.g. ``ln eps`` and
    ``ln lambda``); ``kind`` names the transform.  The verdict is a pass
    iff the slope lies within ``tolerance`` of ``expected_slope`` (when an
    expected slope is given) and ``r2 >= r2_min`` (when a floor is given).
    """

    kind: str
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    r2: float
    residuals: np.ndarray
    expected_slope: float | None = None
    tolerance: float | None = None
    r2_min: float | None = None

    @property
    def slope_ok(self) -> bool:
        if self.expected_slope is None:
            return True
        return abs(self.slope - self.expected_slope) <= self.tolerance

    @property
    def r2_ok(self) -> bool:
        return self.r2_min is None or self.r2 >= self.r2_min

    @property
    def passed(self) -> bool:
        return self.slope_ok and self.r2_ok

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def recomputed_r2(self) -> float:
        """R^2 from the stored residuals (internal consistency check)."""
        ss_res = float(np.sum(self.residuals**2))
        ss_tot = float(np.sum((self.y - self.y.mean()) ** 2))
        return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def ols_fit(x, y, kind: str = "linear", expected_slope: float | None = None,
            tolerance: float | None = None, r2_min: float | None = None, min_points: int = 2) -> ScalingFit:
    """Least-squares line through ``(x, y)``; points are sorted by ``x`` first.

    Sorting makes the fit independent of the input order.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if x.size < min_points:
        raise DomainError(f"need at least {min_points} points for a fit (got {x.size})")
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    intercept = float(ym - slope * xm)
    res = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss_tot if ss_tot > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    if expected_slope is not None and tolerance is None:
        raise ValueError("an expected slope needs a tolerance")
    return ScalingFit(kind, x, y, slope, intercept, r2, res, expected_slope, tolerance, r2_min)
