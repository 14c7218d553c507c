"""Discrete truncated Wigner simulation of XXZ squeezing dynamics.

Each sample draws a graph (for disordered geometries) and discrete initial
spins s^x = s, s^y = +-s, s^z = +-s, then integrates the classical
equations ds_i/dt = s_i x B_i with B_i = sum_j J_ij (s_j^x, s_j^y, Delta s_j^z).

Samples are integrated in fixed chunks as one stacked ODE.  Chunk boundaries
depend only on the sample index, so results are bit-identical however the
chunks are scheduled or resumed.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .graphgen import GraphParams, build_graph, degree_vector
from .io import atomic_write_bytes, write_csv
from .rng import DTWA_STREAM, GRAPH_STREAM, derive_seed, generator

log = logging.getLogger(__name__)

NORM_TOL = 1e-6
ENERGY_TOL = 1e-6
CHUNK = 50


class DTWAError(RuntimeError):
    pass


@dataclass
class TrajectoryState:
    spins: np.ndarray
    time: float = 0.0


def sample_initial(n_act, s, rng, n_samples=None):
    """x-polarized discrete Wigner sample(s): shape (n, 3) or (m, n, 3)."""
    if s <= 0:
        raise ValueError("spin length must be positive")
    shape = (n_act,) if n_samples is None else (n_samples, n_act)
    out = np.empty(shape + (3,))
    out[..., 0] = s
    signs = rng.integers(0, 2, size=shape + (2,)) * 2 - 1
    out[..., 1:] = s * signs
    return out


# --- fields -----------------------------------------------------------------

class Field:
    """Linear map S -> sum_j J_ij S_j on a stack of samples, shape (m, n, 3)."""

    def __call__(self, S):
        raise NotImplementedError


class DenseField(Field):
    def __init__(self, J):
        self.J = np.asarray(J, dtype=float)

    def __call__(self, S):
        m, n, _ = S.shape
        X = S.transpose(1, 0, 2).reshape(n, 3 * m)
        return (self.J @ X).reshape(n, m, 3).transpose(1, 0, 2)


class CirculantField(Field):
    """Translation-invariant kernel applied by FFT over the site axes."""

    def __init__(self, kernel):
        self.kernel = np.asarray(kernel, dtype=float)
        self.shape = self.kernel.shape
        axes = tuple(range(1, 1 + self.kernel.ndim))
        self.axes = axes
        self.kf = np.fft.rfftn(self.kernel)[None, ..., None]

    def __call__(self, S):
        m = S.shape[0]
        X = S.reshape((m,) + self.shape + (3,))
        # field_i = sum_j K(j - i) S_j; K is symmetric so this is a convolution
        Y = np.fft.irfftn(np.fft.rfftn(X, axes=self.axes) * self.kf,
                          s=self.shape, axes=self.axes)
        return Y.reshape(S.shape)


class BlockSparseField(Field):
    """One sparse block per sample, or a single block shared by the stack."""

    def __init__(self, mats):
        self.M = sp.block_diag(mats, format="csr")
        self.shared = len(mats) == 1

    def __call__(self, S):
        m, n, _ = S.shape
        if self.shared and m > 1:
            X = S.transpose(1, 0, 2).reshape(n, 3 * m)
            return (self.M @ X).reshape(n, m, 3).transpose(1, 0, 2)
        return (self.M @ S.reshape(m * n, 3)).reshape(m, n, 3)


class BatchDenseField(Field):
    def __init__(self, mats):
        self.J = np.stack([np.asarray(M, dtype=float) for M in mats])

    def __call__(self, S):
        return np.matmul(self.J, S)


def field_for(g):
    if g.kernel is not None and g.active_nodes.all():
        return CirculantField(g.kernel)
    if g.is_sparse:
        return BlockSparseField([g.csr()])
    return DenseField(g.dense())


def _apply_delta(B, delta):
    if delta != 1.0:
        B[..., 2] *= delta
    return B


def mean_field_rhs(state, g, delta, field_op=None):
    """ds_i/dt = s_i x B_i for one state (n, 3) or a stack (m, n, 3)."""
    S = np.asarray(state, dtype=float)
    single = S.ndim == 2
    if single:
        S = S[None]
    op = field_op or field_for(g)
    B = _apply_delta(op(S), delta)
    out = np.cross(S, B)
    return out[0] if single else out


def classical_energy(S, field_op, delta):
    """-1/2 sum_ij J_ij (sx sx + sy sy + Delta sz sz), per sample."""
    S = np.asarray(S)
    single = S.ndim == 2
    if single:
        S = S[None]
    B = _apply_delta(field_op(S), delta)
    E = -0.5 * np.einsum("mnk,mnk->m", S, B)
    return E[0] if single else E


@dataclass
class Trajectory:
    times: np.ndarray
    spins: np.ndarray  # (T, m, n, 3)
    norm_drift: np.ndarray
    energy_drift: np.ndarray
    nfev: int = 0


def integrate(state0, g, delta, t_grid, rtol=1e-8, atol=1e-10, field_op=None,
              norm_tol=NORM_TOL, energy_tol=ENERGY_TOL, method="DOP853"):
    """Adaptive Runge-Kutta integration with dense output on ``t_grid``.

    Works on one state (n, 3) or a stack (m, n, 3) integrated jointly.  The
    solver's error norm is an RMS over all components, so a stack of m
    trajectories runs at tolerances divided by sqrt(m): the worst single
    trajectory then meets the same bound it would alone.  Raises DTWAError
    when the solver fails or when the spin-norm or energy drift of any
    trajectory exceeds its bound.
    """
    S0 = np.asarray(state0, dtype=float)
    single = S0.ndim == 2
    if single:
        S0 = S0[None]
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    op = field_op or field_for(g)
    shape = S0.shape

    def rhs(_, y):
        S = y.reshape(shape)
        B = _apply_delta(op(S), delta)
        return np.cross(S, B).ravel()

    if t[-1] == t[0]:
        Y = S0[None].copy()
        nfev = 0
    else:
        shrink = math.sqrt(shape[0])
        sol = solve_ivp(rhs, (t[0], t[-1]), S0.ravel(), method=method, t_eval=t,
                        rtol=rtol / shrink, atol=atol / shrink)
        if sol.status != 0:
            raise DTWAError(f"integrator failed: {sol.message}")
        Y = sol.y.T.reshape((t.size,) + shape)
        nfev = sol.nfev
    n0 = np.linalg.norm(S0, axis=-1)
    nt = np.linalg.norm(Y, axis=-1)
    active = n0 > 0
    rel = np.where(active, np.abs(nt - n0) / np.where(active, n0, 1.0), 0.0)
    norm_drift = rel.max(axis=(0, 2))
    E0 = classical_energy(S0, op, delta)
    Et = np.stack([classical_energy(Y[k], op, delta) for k in (0, t.size - 1)])
    # drift is measured against the largest energy the spin lengths allow,
    # 1/2 sum_ij J_ij |s_i| |s_j|; E0 itself can vanish
    L = np.zeros_like(S0)
    L[..., 0] = n0
    scale = 0.5 * np.einsum("mn,mn->m", n0, op(L)[..., 0])
    energy_drift = np.abs(Et[-1] - E0) / np.where(scale > 0, scale, 1.0)
    if norm_drift.max() > norm_tol:
        k = int(norm_drift.argmax())
        raise DTWAError(f"spin-norm drift {norm_drift[k]:.2e} in trajectory {k} exceeds {norm_tol:g}")
    if energy_drift.max() > energy_tol:
        k = int(energy_drift.argmax())
        raise DTWAError(f"energy drift {energy_drift[k]:.2e} in trajectory {k} exceeds {energy_tol:g}")
    if single:
        Y = Y[:, 0]
    return Trajectory(t, Y, norm_drift, energy_drift, nfev)


# --- ensemble ---------------------------------------------------------------

@dataclass
class SqueezeTrace:
    times: np.ndarray
    xi2: np.ndarray
    xi2_err: np.ndarray
    Sx: np.ndarray
    Sx_err: np.ndarray
    var_y: np.ndarray
    var_z: np.ndarray
    cov_yz: np.ndarray
    varmin: np.ndarray
    m_xy: np.ndarray
    m_xy_err: np.ndarray
    Sz: np.ndarray
    Sz_err: np.ndarray
    n_samples: int
    n_active: float
    breakdown: np.ndarray
    meta: dict = field(default_factory=dict)

    header = ("t", "xi2", "Sx", "varmin", "breakdown_flag", "m_xy", "m_xy_err", "n_samples",
              "xi2_err")

    def rows(self):
        return [(float(t), float(x), float(s), float(v), bool(b), float(m), float(me),
                 self.n_samples, float(xe))
                for t, x, s, v, b, m, me, xe in zip(self.times, self.xi2, self.Sx, self.varmin,
                                                    self.breakdown, self.m_xy, self.m_xy_err,
                                                    self.xi2_err)]

    def to_csv(self, path):
        write_csv(path, self.header, self.rows())


def collective_estimators(S, n_act, times=None, spin_s=0.5):
    """Squeezing estimators from per-sample collective spins S (m, T, 3).

    Standard errors use the delta method: each estimator is expanded to first
    order in the sample moments and the spread of the resulting per-sample
    influence values gives the error.
    """
    S = np.asarray(S, dtype=float)
    m = S.shape[0]
    if m < 2:
        raise DTWAError("need at least two samples")
    N = float(np.mean(n_act))
    sx, sy, sz = S[..., 0], S[..., 1], S[..., 2]
    mx, my, mz = sx.mean(0), sy.mean(0), sz.mean(0)
    dy, dz = sy - my, sz - mz
    vy = (dy * dy).mean(0)
    vz = (dz * dz).mean(0)
    c = (dy * dz).mean(0)
    half = 0.5 * (vy - vz)
    rad = np.sqrt(half * half + c * c)
    lam = 0.5 * (vy + vz) - rad
    # eigenvector of the smaller eigenvalue: (c, lam - vy) or (lam - vz, c)
    e1 = np.where(vy <= vz, 1.0, 0.0)
    ay, az = np.where(rad > 0, c, e1), np.where(rad > 0, lam - vy, 1.0 - e1)
    swap = np.abs(ay) + np.abs(az) < 1e-300
    ay = np.where(swap, lam - vz, ay)
    az = np.where(swap, c, az)
    nrm = np.hypot(ay, az)
    nrm = np.where(nrm > 0, nrm, 1.0)
    ay, az = ay / nrm, az / nrm
    inf_lam = ay ** 2 * (dy * dy - vy) + az ** 2 * (dz * dz - vz) + 2 * ay * az * (dy * dz - c)
    inf_sx = sx - mx
    with np.errstate(divide="ignore", invalid="ignore"):
        xi2 = N * lam / mx ** 2
        inf_xi = N * inf_lam / mx ** 2 - 2.0 * N * lam * inf_sx / mx ** 3
    Q = (sx * sx + sy * sy).mean(0)
    mxy = np.sqrt(Q) / N
    with np.errstate(divide="ignore", invalid="ignore"):
        inf_m = (sx * sx + sy * sy - Q) / (2.0 * N * np.sqrt(Q))
    se = lambda v: v.std(0, ddof=1) / math.sqrt(m)
    breakdown = np.logical_or.accumulate(mx <= 0)
    xi2 = np.where(breakdown, np.nan, xi2)
    t = np.arange(S.shape[1], dtype=float) if times is None else np.asarray(times)
    return SqueezeTrace(t, xi2, se(inf_xi), mx, se(inf_sx), vy, vz, c, lam, mxy, se(inf_m),
                        mz, se(sz), m, N, breakdown)


@dataclass(frozen=True)
class EnsembleSpec:
    geometry: str
    params: GraphParams
    n: int
    delta: float
    spin_s: float = 0.5
    rtol: float = 1e-8
    atol: float = 1e-10


def _clean_kernel(spec):
    """Clean-graph kernel when every sample is that kernel on a site subset."""
    if spec.geometry not in ("ring1d", "triangular2d", "pw2"):
        return None
    clean = build_graph(spec.geometry, replace(spec.params, dilution_p=0.0), spec.n, 0)
    return clean


def sample_seeds(seed, index):
    return derive_seed(seed, index, GRAPH_STREAM), derive_seed(seed, index, DTWA_STREAM)


def _run_chunk(spec, seed, indices, t_grid):
    """Collective spin (len(indices), T, 3) and active counts for a chunk."""
    clean = _clean_kernel(spec)
    states, nact, graphs = [], [], []
    for k in indices:
        gseed, dseed = sample_seeds(seed, k)
        rng = generator(dseed, DTWA_STREAM, k)
        if clean is not None and spec.params.dilution_p == 0.0:
            mask = np.ones(spec.n, dtype=bool)
        else:
            g = build_graph(spec.geometry, spec.params, spec.n, gseed)
            mask = g.active_nodes
            graphs.append(g)
        S0 = np.zeros((spec.n, 3))
        S0[mask] = sample_initial(int(mask.sum()), spec.spin_s, rng)
        states.append(S0)
        nact.append(int(mask.sum()))
    S0 = np.stack(states)
    if clean is not None:
        op = CirculantField(clean.kernel) if clean.kernel is not None else DenseField(clean.dense())
    elif all(g.is_sparse for g in graphs):
        op = BlockSparseField([g.csr() for g in graphs])
    else:
        op = BatchDenseField([g.dense() for g in graphs])
    traj = integrate(S0, None, spec.delta, t_grid, spec.rtol, spec.atol, field_op=op)
    return traj.spins.sum(axis=2).transpose(1, 0, 2), np.array(nact, dtype=float)


def default_time_grid(spec, seed=0, n_points=200, factor=4.0):
    """t = 0 plus log-spaced points up to ``factor`` times the rotor t_min,
    using the average degree of the first sample's graph."""
    from .spinwave import rotor_time_estimate
    if spec.delta >= 1.0:
        raise DTWAError("delta = 1 has no rotor time scale; pass an explicit time grid")
    g = build_graph(spec.geometry, spec.params, spec.n, sample_seeds(seed, 0)[0])
    act = np.flatnonzero(g.active_nodes)
    deg = float(degree_vector(g)[act].mean())
    n = act.size
    chi = deg * (1.0 - spec.delta) / (2.0 * (n - 1))
    tmax = factor * rotor_time_estimate(n, chi)
    return np.r_[0.0, np.logspace(math.log10(tmax) - 3.0, math.log10(tmax), n_points - 1)]


def run_ensemble(spec, n_samples, t_grid=None, seed=0, chunk=CHUNK, workers=1,
                 checkpoint=None):
    """Joint disorder and DTWA average over ``n_samples`` samples.

    ``checkpoint`` names a file holding the per-sample collective spins; an
    existing compatible file is resumed at chunk granularity and the file is
    rewritten after every chunk.
    """
    if n_samples < 2:
        raise DTWAError("n_samples must be >= 2")
    if t_grid is None:
        t_grid = default_time_grid(spec, seed)
    t_grid = np.asarray(t_grid, dtype=float)
    S_all = np.zeros((n_samples, t_grid.size, 3))
    nact = np.zeros(n_samples)
    done = 0
    if checkpoint and os.path.exists(checkpoint):
        ck = read_checkpoint(checkpoint)
        if ck.times.shape == t_grid.shape and np.array_equal(ck.times, t_grid):
            done = min(ck.n_samples, n_samples) // chunk * chunk
            S_all[:done] = ck.S[:done]
            nact[:done] = ck.n_act[:done]
            log.info("resuming from %s at sample %d", checkpoint, done)
    starts = list(range(done, n_samples, chunk))
    tasks = [list(range(a, min(a + chunk, n_samples))) for a in starts]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_chunk, spec, seed, idx, t_grid) for idx in tasks]
            for idx, fut in zip(tasks, futs):
                S, na = fut.result()
                S_all[idx[0]:idx[-1] + 1], nact[idx[0]:idx[-1] + 1] = S, na
                if checkpoint:
                    write_checkpoint(checkpoint, t_grid, S_all[:idx[-1] + 1], nact[:idx[-1] + 1])
    else:
        for idx in tasks:
            S, na = _run_chunk(spec, seed, idx, t_grid)
            S_all[idx[0]:idx[-1] + 1], nact[idx[0]:idx[-1] + 1] = S, na
            if checkpoint:
                write_checkpoint(checkpoint, t_grid, S_all[:idx[-1] + 1], nact[:idx[-1] + 1])
    tr = collective_estimators(S_all, nact, t_grid, spec.spin_s)
    tr.meta = {"geometry": spec.geometry, "n": spec.n, "delta": spec.delta, "seed": seed,
               "chunk": chunk}
    return tr


# --- checkpoint -------------------------------------------------------------

MAGIC = b"SSQDTWA\0"
VERSION = 1
_HEADER = struct.Struct("<8sIIQ")


@dataclass
class Checkpoint:
    times: np.ndarray
    S: np.ndarray
    n_act: np.ndarray

    @property
    def n_samples(self):
        return self.S.shape[0]


def write_checkpoint(path, times, S, n_act):
    """Layout: magic (8 bytes), version u32, n_times u32, n_samples u64, then
    little-endian float64 times[n_times], n_act[n_samples] and
    S[n_samples, n_times, 3] in C order."""
    times = np.asarray(times, dtype="<f8")
    S = np.asarray(S, dtype="<f8")
    n_act = np.asarray(n_act, dtype="<f8")
    head = _HEADER.pack(MAGIC, VERSION, times.size, S.shape[0])
    atomic_write_bytes(path, head + times.tobytes() + n_act.tobytes() + S.tobytes())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise DTWAError("checkpoint truncated")
    magic, version, nt, ns = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DTWAError("not a DTWA checkpoint")
    if version != VERSION:
        raise DTWAError(f"unsupported checkpoint version {version}")
    need = _HEADER.size + 8 * (nt + ns + 3 * ns * nt)
    if len(data) != need:
        raise DTWAError(f"checkpoint size {len(data)} != expected {need}")
    off = _HEADER.size
    times = np.frombuffer(data, "<f8", nt, off)
    off += 8 * nt
    n_act = np.frombuffer(data, "<f8", ns, off)
    off += 8 * ns
    S = np.frombuffer(data, "<f8", 3 * ns * nt, off).reshape(ns, nt, 3)
    return Checkpoint(times.copy(), S.copy(), n_act.copy())
