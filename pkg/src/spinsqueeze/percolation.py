"""Cluster decomposition and percolation thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .fitting import FitError, loglog_fit
from .io import write_csv
from .rng import BOOTSTRAP_STREAM, GRAPH_STREAM, derive_seed, generator


class PercolationError(ValueError):
    pass


@dataclass
class ClusterReport:
    components: list
    giant_size: int
    giant_fraction: float
    mean_cluster_size_S: float
    z0_mean: float
    z0_second_moment: float
    n_active: int = 0

    @property
    def sizes(self):
        return [len(c) for c in self.components]


def _adjacency(g):
    A = g.csr().copy()
    A.data = (A.data > 0).astype(np.int8)
    A.eliminate_zeros()
    return A


def find_clusters(g):
    """Connected components of the bond relation J_ij > 0 on active sites.

    Ordered by descending size, ties by smallest member index.
    """
    active = np.flatnonzero(g.active_nodes)
    if active.size == 0:
        return ClusterReport([], 0, 0.0, 0.0, 0.0, 0.0, 0)
    A = _adjacency(g)[active][:, active]
    ncomp, labels = connected_components(A, directed=False)
    comps = [active[labels == c] for c in range(ncomp)]
    comps.sort(key=lambda c: (-c.size, c[0]))
    sizes = np.array([c.size for c in comps])
    giant = int(sizes[0])
    finite = sizes[1:]
    S = float((finite ** 2).sum() / finite.sum()) if finite.size else 0.0
    z = np.asarray(A.sum(axis=1)).ravel().astype(float)
    return ClusterReport(comps, giant, giant / active.size, S, float(z.mean()),
                         float((z ** 2).mean()), int(active.size))


def giant_component(g):
    rep = find_clusters(g)
    if not rep.components:
        raise PercolationError("graph has no active sites")
    return np.sort(rep.components[0])


def degree_moments(g):
    """<z> and <z^2> of the binary adjacency over active sites."""
    rep = find_clusters(g)
    return rep.z0_mean, rep.z0_second_moment


@dataclass
class ThresholdEstimate:
    value: float
    degenerate: bool = False


def threshold_from_moments(z0_mean, z0_m2):
    """p_p = 1 - 1/(<z^2>/<z> - 1), clamped to [0, 1].

    A ratio <= 1 lies outside the formula's validity; 0 is returned with the
    degeneracy flag set.
    """
    if not z0_mean > 0:
        raise PercolationError("z0_mean must be positive")
    kappa = z0_m2 / z0_mean - 1.0
    if kappa <= 1.0:
        return ThresholdEstimate(0.0, degenerate=kappa <= 0.0 or kappa < 1.0)
    return ThresholdEstimate(min(1.0, max(0.0, 1.0 - 1.0 / kappa)))


def pw2_threshold(n):
    """Finite-size site-percolation threshold of the PW2 graph,
    1 - 1/(log2 n - 5/2 - 1/n)."""
    if n < 1 or n & (n - 1):
        raise PercolationError(f"n must be a power of two, got {n}")
    den = math.log2(n) - 2.5 - 1.0 / n
    if den <= 0:
        raise PercolationError(f"denominator {den} <= 0 for n={n}")
    return 1.0 - 1.0 / den


def complete_graph_threshold(n):
    return 1.0 - 1.0 / (n - 2)


def zeta(s, tol=1e-12):
    """Riemann zeta for real s > 1: partial sum plus Euler-Maclaurin tail.

    The tail after M terms is M^(1-s)/(s-1) - M^-s/2 + s M^(-s-1)/12 - ...;
    M is chosen so the first neglected correction is below ``tol``.
    """
    if s <= 1:
        raise PercolationError(f"zeta diverges for s={s} <= 1")
    M = 64
    while s * (s + 1) * (s + 2) * M ** (-s - 3) / 720.0 > tol and M < 1 << 20:
        M *= 2
    k = np.arange(1, M, dtype=float)
    head = float(np.sum(k[::-1] ** (-s)))
    tail = (M ** (1 - s) / (s - 1) + 0.5 * M ** (-s) + s * M ** (-s - 1) / 12.0
            - s * (s + 1) * (s + 2) * M ** (-s - 3) / 720.0)
    return head + tail


def bethe_bound(alpha):
    """1 - 1/(2 zeta(alpha)), the Bethe-lattice bound quoted for C_c(alpha)."""
    if alpha <= 1:
        raise PercolationError(f"bound needs alpha > 1, got {alpha}")
    return 1.0 - 1.0 / (2.0 * zeta(alpha))


def mean_degree_threshold(alpha):
    """C at which the mean bond count 2 C zeta(alpha) of an infinite ring is 1."""
    if alpha <= 1:
        raise PercolationError(f"needs alpha > 1, got {alpha}")
    return 1.0 / (2.0 * zeta(alpha))


# --- Monte Carlo ------------------------------------------------------------

@dataclass
class PercolationPoint:
    param: float
    size: int
    giant_fraction: float
    giant_fraction_err: float
    S: float
    S_err: float
    kappa: float
    samples: np.ndarray = field(repr=False, default=None)


def giant_fraction(rep, min_size=2):
    """Share of active sites in the largest cluster, counting only clusters of
    at least ``min_size`` sites (an isolated site is not a giant cluster)."""
    if rep.n_active == 0 or rep.giant_size < min_size:
        return 0.0
    return rep.giant_size / rep.n_active


def sample_point(builder, param, size, seeds, min_size=2):
    gf, S, z1, z2 = [], [], 0.0, 0.0
    for s in seeds:
        g = builder(param, size, s)
        rep = find_clusters(g)
        gf.append(giant_fraction(rep, min_size))
        S.append(rep.mean_cluster_size_S)
        z1 += rep.z0_mean * rep.n_active
        z2 += rep.z0_second_moment * rep.n_active
    gf = np.array(gf)
    S = np.array(S)
    m = len(seeds)
    kappa = z2 / z1 if z1 > 0 else 0.0
    return PercolationPoint(float(param), int(size), float(gf.mean()),
                            float(gf.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0,
                            float(S.mean()), float(S.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0,
                            float(kappa), gf)


def _crossing(x, y, level):
    """Linear interpolation of the first downward crossing of ``level``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    above = y >= level
    idx = np.flatnonzero(above[:-1] & ~above[1:])
    if idx.size == 0:
        return None
    i = idx[0]
    if y[i] == y[i + 1]:
        return float(0.5 * (x[i] + x[i + 1]))
    return float(x[i] + (y[i] - level) * (x[i + 1] - x[i]) / (y[i] - y[i + 1]))


def _monotone_within_noise(y, err, nsig=3.0):
    """True if y is non-increasing up to ``nsig`` combined errors."""
    y = np.asarray(y)
    err = np.asarray(err)
    for i in range(len(y) - 1):
        rise = y[i + 1] - y[i]
        if rise > nsig * math.hypot(err[i], err[i + 1]) + 1e-12:
            return False
    return True


def empirical_threshold(builder, params_grid, sizes, seeds_per_point=100, level=0.5,
                        n_boot=200, seed=0, min_size=2, decreasing=True):
    """Giant-fraction crossing per size with bootstrap errors.

    ``builder(param, size, seed) -> Graph``; ``params_grid`` is the control
    parameter (dilution p, or bond amplitude C with ``decreasing=False``),
    either one sequence or a callable ``size -> sequence``.
    Returns a dict keyed by size with the crossing, its bootstrap error, the
    per-point table and the fitted gamma (S ~ |p_p - p|^-gamma) where the
    subcritical data allow it.
    """
    if len(sizes) < 3:
        raise PercolationError("need >= 3 sizes")
    if seeds_per_point < 100:
        raise PercolationError("need >= 100 seeds per point")
    rng = generator(seed, BOOTSTRAP_STREAM)
    out = {}
    for size in sizes:
        grid = _grid(params_grid(size) if callable(params_grid) else params_grid, decreasing)
        pts = []
        for k, param in enumerate(grid):
            seeds = [derive_seed(seed, (int(size) << 32) | (k << 16) | j, GRAPH_STREAM)
                     for j in range(seeds_per_point)]
            pts.append(sample_point(builder, param, size, seeds, min_size))
        y = np.array([p.giant_fraction for p in pts])
        e = np.array([p.giant_fraction_err for p in pts])
        entry = {"points": pts, "threshold": None, "threshold_err": None, "flag": None}
        if not _monotone_within_noise(y, e):
            entry["flag"] = "non-monotone giant fraction"
            out[size] = entry
            continue
        xc = _crossing(grid, y, level)
        if xc is None:
            entry["flag"] = "no crossing in grid"
            out[size] = entry
            continue
        boots = []
        samples = np.stack([p.samples for p in pts])
        m = samples.shape[1]
        for _ in range(n_boot):
            idx = rng.integers(0, m, size=(len(pts), m))
            yb = np.take_along_axis(samples, idx, axis=1).mean(axis=1)
            cb = _crossing(grid, yb, level)
            if cb is not None:
                boots.append(cb)
        entry["threshold"] = xc
        entry["threshold_err"] = float(np.std(boots, ddof=1)) if len(boots) > 1 else float("nan")
        entry["gamma"] = _gamma_fit(grid, pts, xc)
        out[size] = entry
    return out


def _grid(values, decreasing):
    grid = np.asarray(sorted(set(float(v) for v in values)), dtype=float)
    return grid if decreasing else grid[::-1]


def _gamma_fit(grid, pts, xc):
    """S ~ |xc - x|^-gamma on the giant-cluster side of the crossing."""
    x = np.array([p.param for p in pts])
    S = np.array([p.S for p in pts])
    Se = np.array([p.S_err for p in pts])
    dist = np.abs(xc - x)
    before = np.arange(len(x)) < np.searchsorted(np.abs(grid - grid[0]), abs(xc - grid[0]))
    sel = before & (S > 1) & (dist > 0)
    if np.count_nonzero(sel) < 3:
        return None
    try:
        fit = loglog_fit(dist[sel], S[sel], Se[sel])
    except FitError:
        return None
    return {"gamma": -fit.exponent, "gamma_err": fit.stderr, "n_points": int(sel.sum())}


def moment_threshold_curve(builder, params_grid, size, seeds, target=2.0, decreasing=True):
    """Locate where the pooled Molloy-Reed ratio <z^2>/<z> of sampled diluted
    graphs falls to ``target``."""
    grid = _grid(params_grid, decreasing)
    kap = np.array([sample_point(builder, q, size, seeds).kappa for q in grid])
    return _crossing(grid, kap, target), kap


POINT_HEADER = ("param", "size", "giant_fraction", "giant_fraction_err", "S", "S_err")


def write_points_csv(path, points):
    write_csv(path, POINT_HEADER, [(p.param, p.size, p.giant_fraction, p.giant_fraction_err,
                                    p.S, p.S_err) for p in points])
