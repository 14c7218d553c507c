"""Rotor plus spin-wave theory of the squeezing dynamics.

Conventions: H = -sum_{i<j} J_ij (sx sx + sy sy + Delta sz sz), each bond
counted once.  Holstein-Primakoff about the x-polarized state gives
H2 = 1/2 Psi^dag [[A, B], [B, A]] Psi with A = s[D - J(1+Delta)/2] and
B = -s J (1-Delta)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .graphgen import degree_vector
from .io import write_csv, write_json
from .spectral import graph_spectrum, _as_dense


class SpinWaveError(ValueError):
    pass


@dataclass(frozen=True)
class SWConfig:
    delta: float
    spin_s: float = 0.5
    use_regular_approx: bool = True

    def __post_init__(self):
        if not -1.0 < self.delta <= 1.0:
            raise SpinWaveError(f"delta must lie in (-1, 1], got {self.delta}")
        if self.spin_s <= 0 or abs(2 * self.spin_s - round(2 * self.spin_s)) > 1e-12:
            raise SpinWaveError(f"spin_s must be a positive half-integer, got {self.spin_s}")

    def require_squeezing(self):
        if self.delta >= 1.0:
            raise SpinWaveError("delta = 1 has no rotor dynamics; squeezing needs delta < 1")


@dataclass
class SWSolution:
    omegas: np.ndarray
    bogoliubov_u: np.ndarray
    bogoliubov_v: np.ndarray
    chi: float
    avg_degree: float
    lambdas: np.ndarray = field(default=None, repr=False)
    n_nodes: int = 0
    spin_s: float = 0.5


def _nodes(g, nodes):
    if nodes is not None:
        return np.asarray(nodes)
    from .percolation import giant_component
    return giant_component(g)


def average_degree(g, nodes):
    deg = degree_vector(g)
    return float(deg[nodes].mean()) if len(nodes) else 0.0


def quadratic_hamiltonian(g, cfg, nodes=None):
    """The 2N x 2N matrix [[A, B], [B, A]] on the chosen nodes (default: active)."""
    if nodes is None:
        nodes = np.flatnonzero(g.active_nodes)
    J = _as_dense(g.restricted(nodes))
    s, d = cfg.spin_s, cfg.delta
    A = -s * (1.0 + d) / 2.0 * J
    A[np.diag_indices_from(A)] += s * J.sum(axis=1)
    B = -s * (1.0 - d) / 2.0 * J
    return np.block([[A, B], [B, A]])


def bogoliubov(Aval, Bval):
    """Per-mode 2x2 Bogoliubov solution: omega, U, V with U^2 - V^2 = 1.

    Zero modes (omega = 0) return U = 1, V = 0; the rotor handles them.
    """
    Aval = np.asarray(Aval, dtype=float)
    Bval = np.asarray(Bval, dtype=float)
    w2 = (Aval - Bval) * (Aval + Bval)
    scale = np.maximum(np.abs(Aval) + np.abs(Bval), 1e-300)
    bad = w2 < -1e-12 * scale ** 2
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise SpinWaveError(f"dynamical instability: A^2 < B^2 in mode {k}")
    w = np.sqrt(np.clip(w2, 0.0, None))
    zero = w <= 1e-12 * scale
    wsafe = np.where(zero, 1.0, w)
    v2 = np.where(zero, 0.0, (Aval / wsafe - 1.0) / 2.0)
    v2 = np.clip(v2, 0.0, None)
    uv = np.where(zero, 0.0, -Bval / (2.0 * wsafe))
    u = np.sqrt(1.0 + v2)
    # sign of V follows U V = -B / (2 omega)
    v = np.sign(uv) * np.sqrt(v2)
    return np.where(zero, 0.0, w), u, v


def rotor_frequency(g=None, cfg=None, nodes=None, avg_degree=None, n=None):
    """chi = deg_avg (1 - Delta) / (2 (N - 1))."""
    cfg.require_squeezing()
    if avg_degree is None or n is None:
        nodes = _nodes(g, nodes)
        avg_degree = average_degree(g, nodes)
        n = len(nodes)
    if n < 2:
        raise SpinWaveError("rotor needs at least two spins")
    return avg_degree * (1.0 - cfg.delta) / (2.0 * (n - 1))


def regular_approx_spectrum(g, cfg, nodes=None, lambdas=None):
    """Spin-wave modes in the regular-graph approximation.

    Each Laplacian eigenvalue becomes a 2x2 block with J_n = deg - lambda_n.
    """
    nodes = _nodes(g, nodes)
    if lambdas is None:
        full = nodes.size == g.n_active and g.kernel is not None
        lambdas = graph_spectrum(g, None if full else nodes)
    lam = np.sort(np.clip(np.asarray(lambdas, dtype=float), 0.0, None))
    deg = average_degree(g, nodes)
    s, d = cfg.spin_s, cfg.delta
    Jn = deg - lam
    A = s * (deg - Jn * (1.0 + d) / 2.0)
    B = -s * Jn * (1.0 - d) / 2.0
    w, u, v = bogoliubov(A, B)
    w[0], u[0], v[0] = 0.0, 1.0, 0.0
    chi = deg * (1.0 - d) / (2.0 * (nodes.size - 1)) if d < 1 and nodes.size > 1 else 0.0
    return SWSolution(w, u, v, chi, deg, lam, int(nodes.size), s)


def dispersion(lambdas, deg, delta, s=0.5):
    """omega = s sqrt(lambda (Delta lambda + deg (1 - Delta)))."""
    lam = np.asarray(lambdas, dtype=float)
    return s * np.sqrt(np.clip(lam * (delta * lam + deg * (1.0 - delta)), 0.0, None))


def full_spectrum(g, cfg, nodes=None, n_modes=None, dense_cap=None, dtype=np.float64):
    """Spin-wave frequencies from the full quadratic form, ascending.

    omega^2 are the eigenvalues of (A - B)(A + B) = s^2 (D - Delta J) L.  With
    D - Delta J = R^T R this is the symmetric problem R L R^T (R = D^1/2 when
    Delta = 0).  When the Cholesky factor does not exist (Delta = 1 on a graph
    with a zero mode) the symmetric square root of L is used instead.
    ``n_modes`` limits the output to the lowest modes; ``dtype=np.float32``
    halves the cost for large comparisons.
    """
    if nodes is None:
        nodes = np.flatnonzero(g.active_nodes)
    nodes = np.asarray(nodes)
    n = nodes.size
    if dense_cap is not None and n > dense_cap:
        raise SpinWaveError(f"full diagonalization of n={n} exceeds dense cap {dense_cap}")
    J = _as_dense(g.restricted(nodes))
    deg = J.sum(axis=1)
    s, d = cfg.spin_s, cfg.delta
    L = -J
    L[np.diag_indices_from(L)] += deg
    if d == 0.0:
        r = np.sqrt(deg)
        S = L * r[:, None] * r[None, :]
    else:
        M = d * L + (1.0 - d) * np.diag(deg)  # D - Delta J
        try:
            R = scipy.linalg.cholesky(M, lower=False, overwrite_a=True, check_finite=False)
            S = R @ L @ R.T
            del R
        except scipy.linalg.LinAlgError:
            w_l, U = scipy.linalg.eigh(L)
            root = (U * np.sqrt(np.clip(w_l, 0.0, None))) @ U.T
            S = root @ (d * L + (1.0 - d) * np.diag(deg)) @ root
        S = 0.5 * (S + S.T)
    del L, J
    sub = None if n_modes is None else [0, min(n_modes, n) - 1]
    w2 = scipy.linalg.eigh(S.astype(dtype, copy=False), eigvals_only=True, subset_by_index=sub,
                           overwrite_a=True, check_finite=False, driver="evr")
    return s * np.sqrt(np.clip(w2.astype(float), 0.0, None))


def symplectic_frequencies(H):
    """Positive eigenvalues of eta H, eta = diag(1, -1): the direct route,
    used to cross-check ``full_spectrum`` on small graphs."""
    n = H.shape[0] // 2
    eta = np.r_[np.ones(n), -np.ones(n)]
    ev = scipy.linalg.eigvals(eta[:, None] * H)
    ev = np.sort(np.abs(ev.real))
    return ev[::2]


def relative_deviation(approx, exact, floor=1e-12):
    approx = np.asarray(approx)
    exact = np.asarray(exact)
    return np.abs(approx - exact) / np.maximum(np.abs(exact), floor)


# --- rotor sector -----------------------------------------------------------

def rotor_oat_moments(n, chi, t):
    """One-axis-twisting moments of n spin-1/2: K_x and the minimal
    transverse variance.

    K_x = (n/2) cos^(n-1)(chi t),
    Var_min = n/4 + n(n-1)/16 (A - sqrt(A^2 + B^2)),
    A = 1 - cos^(n-2)(2 chi t), B = 4 sin(chi t) cos^(n-2)(chi t).
    """
    if n < 2:
        raise SpinWaveError("n must be >= 2")
    th = chi * np.asarray(t, dtype=float)
    c = np.cos(th)
    Kx = 0.5 * n * np.power(c, n - 1)
    A = 1.0 - np.power(np.cos(2.0 * th), n - 2)
    B = 4.0 * np.sin(th) * np.power(c, n - 2)
    root = np.sqrt(A * A + B * B)
    # A - root without cancellation when A > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = np.where(A > 0, -B * B / (A + root), A - root)
    diff = np.where(root == 0, 0.0, diff)
    var = 0.25 * n + n * (n - 1) / 16.0 * diff
    return Kx, var


def oat_xi2(n, chi, t):
    Kx, var = rotor_oat_moments(n, chi, t)
    return n * var / Kx ** 2


def spinwave_populations(sol, t):
    """G_n(t) and F_n(t) for modes n >= 1, shape (len(t), n_modes - 1)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    u, v, w = sol.bogoliubov_u[1:], sol.bogoliubov_v[1:], sol.omegas[1:]
    ph = 2.0 * np.outer(t, w)
    uv = u * v
    G = 2.0 * (uv * uv) * (1.0 - np.cos(ph))
    F = uv * (u * u * np.exp(-1j * ph) + v * v * np.exp(1j * ph) - 2.0 * v * v - 1.0)
    return G, F


@dataclass
class RotorTrace:
    times: np.ndarray
    xi2: np.ndarray
    Sx: np.ndarray
    varmin: np.ndarray
    breakdown: np.ndarray
    n_nodes: int = 0
    chi: float = 0.0

    def rows(self):
        return [(float(t), float(x), float(s), float(v), bool(b)) for t, x, s, v, b in
                zip(self.times, self.xi2, self.Sx, self.varmin, self.breakdown)]

    header = ("t", "xi2", "Sx", "varmin", "breakdown_flag")

    def to_csv(self, path):
        write_csv(path, self.header, self.rows())


def xi2_rotor_sw(g, cfg, times, nodes=None, include_spinwaves=True, sol=None):
    """Rotor squeezing trace with spin-wave depletion of the magnetization.

    For n spins of length s the rotor carries total spin n s, i.e. the OAT
    problem of 2 n s spin-1/2.  Each excited magnon lowers S_x by one:
    xi2 = 2ns Var_min / (K_x - sum_n G_n)^2.  Once the depleted magnetization
    reaches zero the trace is flagged and set to NaN.
    """
    cfg.require_squeezing()
    if sol is None:
        sol = regular_approx_spectrum(g, cfg, nodes)
    n = sol.n_nodes
    n_eff = int(round(2 * n * cfg.spin_s))
    times = np.asarray(times, dtype=float)
    Kx, var = rotor_oat_moments(n_eff, sol.chi, times)
    if include_spinwaves and n > 1:
        G, _ = spinwave_populations(sol, times)
        Sx = Kx - G.sum(axis=1)
    else:
        Sx = Kx
    broken = np.logical_or.accumulate(Sx <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi2 = np.where(broken, np.nan, n_eff * var / Sx ** 2)
    return RotorTrace(times, xi2, Sx, var, broken, n, sol.chi)


def rotor_time_estimate(n, chi):
    """OAT optimal time, about 3^(1/6) n^(-2/3) / chi for large n."""
    return 3 ** (1 / 6) * n ** (-2.0 / 3.0) / chi


def default_times(n, chi, n_points=200, factor=4.0):
    """t = 0 plus log-spaced points up to ``factor`` times the rotor t_min."""
    tmax = factor * rotor_time_estimate(n, chi)
    return np.r_[0.0, np.logspace(math.log10(tmax) - 3.0, math.log10(tmax), n_points - 1)]


@dataclass
class PerturbationReport:
    delta_lambda: float
    delta_eps: float
    delta_c: float
    avg_degree: float
    outside_range: bool

    def as_dict(self):
        return {"delta_lambda": self.delta_lambda, "delta_eps": self.delta_eps,
                "delta_c": self.delta_c, "avg_degree": self.avg_degree,
                "outside_range": self.outside_range}

    def to_json(self, path):
        write_json(path, self.as_dict())


def heisenberg_perturbation(g, delta, s=0.5, nodes=None, delta_lambda=None):
    """Compare the Laplacian gap with the anisotropy gap s (1 - Delta) deg_avg.

    Delta_c solves the equality: 1 - Delta_c = delta_lambda / (s deg_avg).
    ``outside_range`` flags 1 - Delta_c >= 2, i.e. order for every Delta > -1.
    """
    nodes = _nodes(g, nodes)
    deg = average_degree(g, nodes)
    if deg <= 0:
        raise SpinWaveError("average degree is zero")
    if delta_lambda is None:
        full = nodes.size == g.n_active and g.kernel is not None
        lam = graph_spectrum(g, None if full else nodes)
        delta_lambda = float(np.sort(lam)[1])
    one_minus = delta_lambda / (s * deg)
    return PerturbationReport(float(delta_lambda), float(s * (1.0 - delta) * deg),
                              float(1.0 - one_minus), deg, bool(one_minus >= 2.0))
