"""Scaling exponents, scalability classification and critical points."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .fitting import FitError, ScalingFit, loglog_fit

log = logging.getLogger(__name__)

SCALABLE = "scalable"
NON_SCALABLE = "non_scalable"
UNDECIDED = "undecided"


class AnalysisError(ValueError):
    pass


@dataclass
class Minimum:
    t: float
    xi2: float
    err: float
    index: int
    at_edge: bool


def locate_minimum(times, xi2, xi2_err=None, t_floor=0.0):
    """Grid minimum of xi2 over t >= t_floor, refined by the parabola through
    the minimum and its two neighbours.

    ``at_edge`` is set when the grid minimum is the first or last usable
    point; no refinement is attempted then.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(xi2, dtype=float)
    ok = np.flatnonzero((t >= t_floor) & np.isfinite(x))
    if ok.size == 0:
        raise AnalysisError("no finite points after the time floor")
    # the usable stretch ends at the first breakdown (NaN) after the floor
    gaps = np.flatnonzero(np.diff(ok) != 1)
    if gaps.size:
        ok = ok[:gaps[0] + 1]
    k = ok[int(np.argmin(x[ok]))]
    err = float(xi2_err[k]) if xi2_err is not None else 0.0
    if k == ok[0] or k == ok[-1]:
        return Minimum(float(t[k]), float(x[k]), err, int(k), True)
    t0, t1, t2 = t[k - 1:k + 2]
    y0, y1, y2 = x[k - 1:k + 2]
    # Newton form of the interpolating parabola
    d01 = (y1 - y0) / (t1 - t0)
    d12 = (y2 - y1) / (t2 - t1)
    a = (d12 - d01) / (t2 - t0)
    if a <= 0:
        return Minimum(float(t1), float(y1), err, int(k), False)
    b = d01 - a * (t0 + t1)
    tm = -b / (2 * a)
    ym = y0 + d01 * (tm - t0) + a * (tm - t0) * (tm - t1)
    return Minimum(float(tm), float(ym), err, int(k), False)


def minima_table(sizes, traces, t_floors=None):
    out = []
    for i, (n, tr) in enumerate(zip(sizes, traces)):
        floor = 0.0 if t_floors is None else t_floors[i]
        err = getattr(tr, "xi2_err", None)
        out.append((n, locate_minimum(tr.times, tr.xi2, err, floor)))
    return out


def fit_mu_nu(sizes, traces, t_floors=None):
    """xi2_min ~ N^-mu and t_min ~ N^nu from one trace per size."""
    rows = []
    for n, m in minima_table(sizes, traces, t_floors):
        if m.at_edge:
            log.warning("minimum at grid boundary for N=%s; size excluded", n)
            continue
        rows.append((n, m))
    if len(rows) < 3:
        raise FitError(f"only {len(rows)} sizes with interior minima (need 3)")
    N = np.array([r[0] for r in rows], dtype=float)
    x = np.array([r[1].xi2 for r in rows])
    e = np.array([r[1].err for r in rows])
    t = np.array([r[1].t for r in rows])
    window = f"N in [{N.min():g}, {N.max():g}]"
    fx = loglog_fit(N, x, e if np.all(e > 0) else None, window=window)
    ft = loglog_fit(N, t, window=window)
    mu = ScalingFit(-fx.exponent, fx.stderr, fx.points, "loglog_ls", window, fx.intercept)
    return mu, ft


def classify_minima(values, errors, n_sigma=2.0):
    """Scalable: strictly decreasing in N with total drop above n_sigma
    combined errors.  Non-scalable: every pair within n_sigma.  Otherwise
    undecided."""
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if v.size < 3:
        raise AnalysisError("classification needs >= 3 sizes")
    if not np.all(np.isfinite(v)):
        return UNDECIDED
    drop = v[0] - v[-1]
    if np.all(np.diff(v) < 0) and drop > n_sigma * math.hypot(e[0], e[-1]):
        return SCALABLE
    for i in range(v.size):
        for j in range(i + 1, v.size):
            if abs(v[i] - v[j]) > n_sigma * math.hypot(e[i], e[j]):
                return UNDECIDED
    return NON_SCALABLE


def classify_scalability(sizes, traces, t_floors=None, n_sigma=2.0):
    """Classify a size series of squeezing traces.

    ``t_floors`` (per size) discards minima before the collective time
    scale, e.g. 1/deg_avg.
    """
    order = np.argsort(sizes)
    sizes = [sizes[i] for i in order]
    traces = [traces[i] for i in order]
    floors = None if t_floors is None else [t_floors[i] for i in order]
    if len(sizes) < 3 or sizes[-1] < 4 * sizes[0]:
        raise AnalysisError("need >= 3 sizes spanning a factor >= 4")
    mins = [m for _, m in minima_table(sizes, traces, floors)]
    cls = classify_minima([m.xi2 for m in mins], [m.err for m in mins], n_sigma)
    return cls, mins


def extract_critical_point(values, classify, refine_rounds=3):
    """Midpoint of the bracket between the last scalable and the first
    non-scalable control value, refined by bisection.

    ``classify(value) -> str`` runs (or looks up) the classification at a
    control value.  Returns a ScalingFit with method "crossing" whose
    exponent field holds the critical value and stderr the half-width.
    """
    vals = sorted(set(float(v) for v in values))
    if len(vals) < 3:
        raise AnalysisError("need >= 3 control values")
    cls = {v: classify(v) for v in vals}
    bracket = _bracket(vals, cls)
    if bracket is None:
        listing = ", ".join(f"{v:g}: {c}" for v, c in cls.items())
        raise AnalysisError(f"no scalable/non-scalable bracket found ({listing})")
    lo, hi = bracket
    for _ in range(refine_rounds):
        mid = 0.5 * (lo + hi)
        c = classify(mid)
        cls[mid] = c
        if c == cls[lo]:
            lo = mid
        elif c == cls[hi]:
            hi = mid
        else:
            break
    centre = 0.5 * (lo + hi)
    pts = [(v, 1.0 if c == SCALABLE else 0.0 if c == NON_SCALABLE else 0.5, 0.0)
           for v, c in sorted(cls.items())]
    return ScalingFit(centre, max(0.5 * abs(hi - lo), 1e-300), pts, "crossing",
                      f"bracket [{min(lo, hi):g}, {max(lo, hi):g}]",
                      extra={"classifications": {f"{v:g}": c for v, c in sorted(cls.items())}})


def _bracket(vals, cls):
    for a, b in zip(vals, vals[1:]):
        pair = {cls[a], cls[b]}
        if pair == {SCALABLE, NON_SCALABLE}:
            return a, b
    # allow undecided points between the two regimes
    sc = [v for v in vals if cls[v] == SCALABLE]
    ns = [v for v in vals if cls[v] == NON_SCALABLE]
    if not sc or not ns:
        return None
    if max(sc) < min(ns):
        return max(sc), min(ns)
    if max(ns) < min(sc):
        return max(ns), min(sc)
    return None


def size_crossing(values, sizes, minima):
    """Control value where xi2_min curves of successive sizes cross.

    ``minima[i][k]`` is xi2_min at sizes[i], values[k].  The sign change of
    xi2_min(N_large) - xi2_min(N_small) is interpolated linearly for every
    pair of consecutive sizes; the mean is returned with the spread as error.
    """
    v = np.asarray(values, dtype=float)
    order = np.argsort(v)
    v = v[order]
    M = np.asarray(minima, dtype=float)[:, order]
    idx = np.argsort(sizes)
    M = M[idx]
    xs = []
    for a, b in zip(M[:-1], M[1:]):
        d = b - a
        s = np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)
        if s.size:
            k = s[0]
            xs.append(v[k] + d[k] * (v[k + 1] - v[k]) / (d[k] - d[k + 1]))
    if not xs:
        raise AnalysisError("xi2_min curves do not cross")
    xs = np.array(xs)
    err = xs.std(ddof=1) if xs.size > 1 else 0.5 * float(np.min(np.diff(v)))
    return ScalingFit(float(xs.mean()), max(float(err), 1e-300),
                      [(float(x), 0.0, 0.0) for x in xs], "size_independence",
                      f"{len(xs)} size pairs")


def predicted_deltac_exponent(geometry, alpha, dimension=1, gamma=1.0):
    """2 gamma / d_s near the percolation point."""
    from .spectral import predicted_ds
    geo = "ring1d" if geometry == "correlated_bond" else geometry
    ds = predicted_ds(geo, alpha, dimension)
    if not math.isfinite(ds):
        return 0.0
    return 2.0 * gamma / ds


def test_deltac_scaling(distances, one_minus_deltac, predicted, tolerance=0.2, errors=None):
    """Fit (1 - Delta_c) ~ distance^theta and compare theta with ``predicted``
    (relative tolerance)."""
    d = np.asarray(distances, dtype=float)
    y = np.asarray(one_minus_deltac, dtype=float)
    if d.size < 3:
        raise AnalysisError("need >= 3 points")
    fit = loglog_fit(d, y, errors, window=f"distance in [{d.min():g}, {d.max():g}]")
    ok = abs(fit.exponent - predicted) <= tolerance * abs(predicted) if predicted else abs(fit.exponent) <= tolerance
    fit.extra.update(predicted=predicted, tolerance=tolerance, passed=bool(ok))
    return fit


test_deltac_scaling.__test__ = False
