"""Least-squares power-law fits shared by the spectral, percolation and
analysis modules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class FitError(ValueError):
    pass


@dataclass
class ScalingFit:
    exponent: float
    stderr: float
    points: list = field(default_factory=list)
    method: str = "loglog_ls"
    window: str = ""
    intercept: float = float("nan")
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "exponent": self.exponent,
            "stderr": self.stderr,
            "points": [list(map(float, p)) for p in self.points],
            "method": self.method,
            "window": self.window,
            "intercept": self.intercept,
            **self.extra,
        }


def linear_fit(x, y, sigma=None):
    """Slope, intercept and their standard errors.

    Without ``sigma`` the residual scatter sets the error scale; an exact fit
    reports a tiny positive stderr rather than zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise FitError("need at least two points")
    if sigma is None:
        w = np.ones_like(x)
    else:
        w = 1.0 / np.asarray(sigma, dtype=float) ** 2
    W = w.sum()
    xm = (w * x).sum() / W
    ym = (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    if sxx == 0:
        raise FitError("degenerate abscissa")
    slope = (w * (x - xm) * (y - ym)).sum() / sxx
    icpt = ym - slope * xm
    resid = y - (icpt + slope * x)
    dof = max(x.size - 2, 1)
    if sigma is None:
        s2 = (resid ** 2).sum() / dof
        var_slope = s2 / sxx
        var_icpt = s2 * (1.0 / W + xm * xm / sxx)
    else:
        var_slope = 1.0 / sxx
        var_icpt = 1.0 / W + xm * xm / sxx
    tiny = np.finfo(float).eps * max(abs(slope), 1.0)
    return slope, icpt, max(np.sqrt(var_slope), tiny), max(np.sqrt(var_icpt), tiny)


def loglog_fit(x, y, yerr=None, min_points=3, window=""):
    """Fit y ~ x**exponent by least squares on logs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < min_points:
        raise FitError(f"need >= {min_points} points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("log-log fit needs positive data")
    sig = None
    if yerr is not None:
        yerr = np.asarray(yerr, dtype=float)
        if np.all(yerr > 0):
            sig = yerr / y
    slope, icpt, es, _ = linear_fit(np.log(x), np.log(y), sig)
    pts = [(float(a), float(b), float(e)) for a, b, e in
           zip(x, y, yerr if yerr is not None else np.zeros_like(x))]
    return ScalingFit(float(slope), float(es), pts, "loglog_ls", window, float(icpt))
