"""Graph Laplacian spectra: gap, density of states, spectral dimension and
random-walk return probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fitting import FitError, loglog_fit, linear_fit
from .io import write_csv

DENSE_CAP = 4096
ZERO_TOL = 1e-9


class SpectralError(RuntimeError):
    pass


class ConvergenceError(SpectralError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (residual achieved {residual:.3e})")
        self.residual = residual


@dataclass
class SpectralSummary:
    eigenvalues: np.ndarray
    gap: float
    dos_edges: np.ndarray
    dos_counts: np.ndarray
    ds_from_dos: float | None
    ds_from_dos_err: float | None
    n_active: int
    ds_from_gap: float | None = None
    ds_from_gap_err: float | None = None


@dataclass
class RecurrenceTrace:
    times: np.ndarray
    p_avg: np.ndarray
    fitted_slope: float
    slope_err: float
    window: tuple
    t_star: float


def laplacian(g, nodes=None):
    """L = D - J restricted to ``nodes`` (default: active sites).

    Dense or CSR, following the graph's storage.
    """
    J = g.restricted(nodes)
    if sp.issparse(J):
        deg = np.asarray(J.sum(axis=1)).ravel()
        return (sp.diags(deg) - J).tocsr()
    deg = J.sum(axis=1)
    L = -J.copy()
    L[np.diag_indices_from(L)] += deg
    return L


def _as_dense(L):
    return L.toarray() if sp.issparse(L) else np.asarray(L, dtype=float)


def _matnorm(L):
    if sp.issparse(L):
        return float(abs(L).sum(axis=1).max()) if L.nnz else 0.0
    return float(np.abs(L).sum(axis=1).max()) if L.size else 0.0


def eigensystem(L, mode="full", k=None, vectors=False, dense_cap=DENSE_CAP, tol=1e-8):
    """Eigenvalues (ascending) of a symmetric matrix, optionally eigenvectors.

    ``mode="full"`` uses dense LAPACK and refuses matrices above ``dense_cap``.
    ``mode="extreme"`` returns the ``k`` smallest through shift-invert Lanczos
    and checks each residual against ``tol * ||L||``.
    """
    n = L.shape[0]
    if mode == "full":
        if n > dense_cap:
            raise SpectralError(f"full diagonalization of n={n} exceeds dense cap {dense_cap}")
        A = _as_dense(L)
        if vectors:
            w, v = scipy.linalg.eigh(A)
            return w, v
        return scipy.linalg.eigh(A, eigvals_only=True)
    if mode != "extreme":
        raise ValueError(f"unknown mode {mode!r}")
    if k is None or k < 1:
        raise ValueError("extreme mode needs k >= 1")
    if k >= n - 1 or n <= 64:
        A = _as_dense(L)
        w, v = scipy.linalg.eigh(A, subset_by_index=[0, min(k, n) - 1])
        return (w, v) if vectors else w
    norm = max(_matnorm(L), 1e-300)
    sigma = -1e-3 * norm
    try:
        w, v = spla.eigsh(sp.csr_matrix(L) if not sp.issparse(L) else L, k=k,
                          sigma=sigma, which="LM", tol=tol * 1e-3)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError("shift-invert Lanczos did not converge", float("inf")) from exc
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    Lv = L @ v
    res = np.linalg.norm(Lv - v * w, axis=0)
    worst = float(res.max())
    if worst > tol * norm:
        raise ConvergenceError("eigenpair residual above tolerance", worst)
    return (w, v) if vectors else w


def clean_spectrum(g):
    """Exact Laplacian spectrum of a clean translation-invariant graph via FFT."""
    if g.kernel is None:
        raise SpectralError("graph has no translation-invariant kernel (diluted or irregular)")
    K = g.kernel
    if K.ndim == 1:
        Jk = np.fft.fft(K).real
    else:
        Jk = np.fft.fft2(K).real.ravel()
    lam = K.sum() - Jk
    lam = np.sort(lam)
    lam[0] = max(lam[0], 0.0)
    return lam


def graph_spectrum(g, nodes=None, dense_cap=DENSE_CAP, k=None):
    """Laplacian eigenvalues, using the FFT path for clean periodic graphs."""
    if nodes is None and g.kernel is not None and g.active_nodes.all():
        lam = clean_spectrum(g)
        return lam if k is None else lam[:k]
    L = laplacian(g, nodes)
    if k is None:
        return eigensystem(L, "full", dense_cap=max(dense_cap, L.shape[0]))
    return eigensystem(L, "extreme", k=k, dense_cap=dense_cap)


def lowest_eigenvalues(g, nodes, n_modes, dtype=np.float64):
    """The ``n_modes`` smallest Laplacian eigenvalues by dense LAPACK,
    optionally in single precision."""
    L = _as_dense(laplacian(g, nodes)).astype(dtype, copy=False)
    n = L.shape[0]
    w = scipy.linalg.eigh(L, eigvals_only=True, subset_by_index=[0, min(n_modes, n) - 1],
                          overwrite_a=True, check_finite=False, driver="evr")
    return w.astype(float)


def count_zero_modes(eigenvalues):
    lam = np.asarray(eigenvalues)
    if lam.size == 0:
        return 0
    scale = max(float(np.abs(lam).max()), 1e-300)
    return int(np.count_nonzero(lam < ZERO_TOL * scale))


def spectral_gap(eigenvalues_or_summary):
    if isinstance(eigenvalues_or_summary, SpectralSummary):
        return eigenvalues_or_summary.gap
    lam = np.sort(np.asarray(eigenvalues_or_summary))
    return float(lam[1]) if lam.size > 1 else 0.0


def ds_from_gap(sizes, gaps, n_components=None):
    """d_s from delta_lambda ~ N**(-2/d_s) over a size series.

    Refuses when any graph had more than one component: the smallest nonzero
    eigenvalue would then not be the gap of a single connected graph.
    """
    sizes = np.asarray(sizes, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if n_components is not None and any(c != 1 for c in n_components):
        raise FitError("gap fit refused: a graph in the series is disconnected")
    if sizes.size < 4:
        raise FitError("gap fit needs >= 4 sizes")
    if sizes.max() / sizes.min() < 10:
        raise FitError("gap fit needs sizes spanning at least one decade")
    fit = loglog_fit(sizes, gaps, min_points=4, window=f"N in [{sizes.min():g}, {sizes.max():g}]")
    slope = fit.exponent
    if slope >= 0:
        fit.extra.update(ds=math.inf, ds_err=math.inf, slope=slope)
        return fit
    m = (sizes.size + 2) // 2
    sys_err = _window_spread(np.log(sizes), np.log(gaps), m, lambda b: -2.0 / b)
    _attach_ds(fit, -2.0 / slope, 2.0 * fit.stderr / slope ** 2, sys_err)
    fit.extra["slope"] = slope
    return fit


def _window_spread(lx, ly, m, to_ds):
    """|d_s(lower sub-window) - d_s(upper sub-window)|, a systematic error for
    fits whose statistical error is meaningless on exact spectra."""
    if m < 2 or lx.size < 3:
        return 0.0
    lo = np.polyfit(lx[:m], ly[:m], 1)[0]
    hi = np.polyfit(lx[-m:], ly[-m:], 1)[0]
    if lo == 0 or hi == 0:
        return math.inf
    return abs(to_ds(lo) - to_ds(hi))


def _attach_ds(fit, ds, stat, sys_err):
    fit.extra.update(ds=ds, ds_err=math.hypot(stat, sys_err), ds_stat_err=stat, ds_sys_err=sys_err)


def integrated_dos(eigenvalues):
    """(lambda, count) pairs for the cumulative eigenvalue count.

    A degenerate group is assigned the midpoint of the counts just below and
    just above it, which removes the half-step bias of the staircase at the
    bottom of the spectrum.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    tol = 1e-12 * max(float(np.abs(lam).max()) if lam.size else 0.0, 1e-300)
    counts = 0.5 * (np.searchsorted(lam, lam - tol, side="left")
                    + np.searchsorted(lam, lam + tol, side="right"))
    return lam, counts


def dos_and_ds(eigenvalues, low_lambda_fraction=0.05, min_count=20, skip_fraction=0.1):
    """d_s from the integrated DOS, count(lambda) ~ lambda**(d_s/2).

    The fit window is the lowest ``low_lambda_fraction`` of the spectrum minus
    zero modes and the bottom ``skip_fraction`` of that window, where finite-N
    corrections to the dispersion are largest.
    """
    if not 0 < low_lambda_fraction <= 0.2:
        raise ValueError("low_lambda_fraction must lie in (0, 0.2]")
    lam, counts = integrated_dos(eigenvalues)
    n = lam.size
    nz = max(count_zero_modes(lam), 1)
    top = int(math.floor(low_lambda_fraction * n))
    start = max(nz, int(math.floor(skip_fraction * top)))
    x, y = lam[start:top], counts[start:top]
    if x.size < min_count:
        raise FitError(f"DOS window holds {x.size} eigenvalues (< {min_count})")
    keep = np.r_[np.diff(x) > 1e-12 * max(x[-1], 1e-300), True]
    x, y = x[keep], y[keep]
    fit = loglog_fit(x, y, min_points=3,
                     window=f"eigenvalues {start}..{top - 1} of {n}")
    m = (x.size + 1) // 2
    sys_err = _window_spread(np.log(x), np.log(y), m, lambda b: 2.0 * b)
    _attach_ds(fit, 2 * fit.exponent, 2 * fit.stderr, sys_err)
    return fit


def dos_histogram(eigenvalues, bins=50):
    lam = np.asarray(eigenvalues)
    counts, edges = np.histogram(lam, bins=bins)
    return edges, counts / max(lam.size, 1)


def summarize(g, nodes=None, low_lambda_fraction=0.05, dense_cap=DENSE_CAP, bins=50):
    lam = graph_spectrum(g, nodes, dense_cap=dense_cap)
    edges, counts = dos_histogram(lam, bins)
    try:
        fit = dos_and_ds(lam, low_lambda_fraction)
        ds, dse = fit.extra["ds"], fit.extra["ds_err"]
    except FitError:
        ds = dse = None
    if _strong_long_range(g):
        ds, dse = math.inf, None
    return SpectralSummary(lam, spectral_gap(lam), edges, counts, ds, dse, lam.size)


def _strong_long_range(g):
    p = g.params
    return g.geometry in ("ring1d", "triangular2d") and p.alpha < p.dimension


def predicted_ds(geometry, alpha, dimension=1):
    """Clean-graph spectral dimension as a function of the decay exponent."""
    if geometry in ("ring1d", "triangular2d", "lattice"):
        d = dimension
        if alpha <= d:
            return math.inf
        if alpha < d + 2:
            return 2.0 * d / (alpha - d)
        return float(d)
    if geometry == "pw2":
        if alpha == 0:
            return math.inf
        if abs(alpha) < 2:
            return 2.0 / abs(alpha)
        return 1.0
    if geometry == "correlated_bond":
        return predicted_ds("ring1d", alpha, 1)
    raise ValueError(f"no prediction for geometry {geometry!r}")


def random_walk_rates(g, nodes):
    """Eigenvalues of D^-1/2 L D^-1/2, the rates of the continuous-time walk."""
    J = g.restricted(nodes)
    J = J.toarray() if sp.issparse(J) else np.asarray(J)
    deg = J.sum(axis=1)
    if np.any(deg <= 0):
        bad = np.asarray(nodes)[deg <= 0]
        raise SpectralError(f"zero-degree node(s) {bad[:5].tolist()} in the selected component")
    dm = 1.0 / np.sqrt(deg)
    M = -J * dm[:, None] * dm[None, :]
    M[np.diag_indices_from(M)] += 1.0
    return scipy.linalg.eigh(M, eigvals_only=True)


def return_probability(rates, times):
    """Node-averaged return probability (1/N) sum_n exp(-mu_n t).

    The diagonal of exp(-D^-1 L t) equals that of the similar symmetric
    propagator, so its average is a trace.
    """
    rates = np.clip(np.asarray(rates, dtype=float), 0.0, None)
    t = np.asarray(times, dtype=float)
    return np.exp(-np.outer(t, rates)).mean(axis=1)


def propagator(g, nodes, t):
    """Full transition matrix P(t) = exp(-D^-1 L t) (small graphs, checks)."""
    J = g.restricted(nodes)
    J = J.toarray() if sp.issparse(J) else np.asarray(J)
    deg = J.sum(axis=1)
    Q = J / deg[:, None]
    Q[np.diag_indices_from(Q)] -= 1.0
    return scipy.linalg.expm(Q * t)


def recurrence_probability(g, times, nodes=None, ds_hint=None, window=None):
    """Return-probability trace and its log-log slope before the gap time.

    The gap time t* is the inverse of the smallest nonzero walk rate, which
    scales as N**(2/d_s) but carries the right prefactor.  ``ds_hint`` swaps
    in the bare N**(2/d_s).  Default fit window is [t*/10, t*/3]: late enough
    to be past the short-distance crossover of diluted graphs, early enough
    to be clear of the 1/N plateau.
    """
    from .percolation import giant_component
    if nodes is None:
        nodes = giant_component(g)
    nodes = np.asarray(nodes)
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    rates = random_walk_rates(g, nodes)
    p = return_probability(rates, times)
    n = nodes.size
    if ds_hint is not None and math.isfinite(ds_hint):
        t_star = n ** (2.0 / ds_hint)
    else:
        pos = rates[rates > ZERO_TOL * max(rates.max(), 1e-300)]
        t_star = 1.0 / pos.min() if pos.size else math.inf
    if window is None:
        window = (t_star / 10.0, t_star / 3.0)
    sel = (times >= window[0]) & (times <= window[1]) & (times > 0)
    slope = err = float("nan")
    if np.count_nonzero(sel) >= 3:
        slope, _, err, _ = linear_fit(np.log(times[sel]), np.log(p[sel]))
    return RecurrenceTrace(times, p, float(slope), float(err),
                           (float(window[0]), float(window[1])), float(t_star))


def write_spectrum_csv(path, eigenvalues):
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    write_csv(path, ("index", "lambda"), [(i, float(x)) for i, x in enumerate(lam)])


def write_recurrence_csv(path, trace):
    write_csv(path, ("t", "p_avg"), [(float(t), float(p)) for t, p in zip(trace.times, trace.p_avg)])
