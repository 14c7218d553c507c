"""Exact quantum references: one-axis twisting in the symmetric (Dicke)
sector and brute-force XXZ for a handful of spin-1/2."""

from __future__ import annotations

import numpy as np
import scipy.linalg
from scipy.special import gammaln


def dicke_operators(n):
    """S_x, S_y, S_z for total spin n/2 in the basis m = -n/2 .. n/2."""
    S = n / 2.0
    m = np.arange(n + 1) - S
    ladder = np.sqrt(S * (S + 1) - m[:-1] * (m[:-1] + 1))
    Sp = np.diag(ladder, -1)  # S+ |m> -> |m+1>
    Sx = 0.5 * (Sp + Sp.T)
    Sy = -0.5j * (Sp - Sp.T)
    return Sx, Sy, np.diag(m)


def x_coherent_state(n):
    """All n spins along +x, expanded in the Dicke basis."""
    k = np.arange(n + 1)
    logamp = 0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)) - 0.5 * n * np.log(2)
    return np.exp(logamp).astype(complex)


def _moments(psi, Sx, Sy, Sz):
    def ev(op):
        return np.einsum("ti,ij,tj->t", psi.conj(), op, psi).real
    sx, sy, sz = ev(Sx), ev(Sy), ev(Sz)
    vyy = ev(Sy @ Sy) - sy ** 2
    vzz = ev(Sz @ Sz) - sz ** 2
    cyz = 0.5 * ev(Sy @ Sz + Sz @ Sy) - sy * sz
    return sx, sy, sz, vyy, vzz, cyz


def _min_eig(vyy, vzz, cyz):
    return 0.5 * (vyy + vzz) - np.sqrt(0.25 * (vyy - vzz) ** 2 + cyz ** 2)


def oat_exact(n, chi, times):
    """Exact xi^2(t), <S_x>(t) and Var_min(t) under H = chi S_z^2."""
    Sx, Sy, Sz = dicke_operators(n)
    m = np.diag(Sz)
    psi0 = x_coherent_state(n)
    t = np.asarray(times, dtype=float)
    psi = psi0[None, :] * np.exp(-1j * chi * np.outer(t, m * m))
    sx, _, _, vyy, vzz, cyz = _moments(psi, Sx, Sy, Sz)
    var = _min_eig(vyy, vzz, cyz)
    return n * var / sx ** 2, sx, var


def oat_exact_minimum(n, chi, t_max=None, n_grid=4000):
    """(t_min, xi2_min) of the exact OAT trace, refined on a fine grid."""
    if t_max is None:
        t_max = 3.0 * n ** (-2.0 / 3.0) / chi
    t = np.linspace(0.0, t_max, n_grid)
    xi2, _, _ = oat_exact(n, chi, t)
    k = int(np.nanargmin(xi2))
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, n_grid - 1)]
    tf = np.linspace(lo, hi, 401)
    xf, _, _ = oat_exact(n, chi, tf)
    j = int(np.nanargmin(xf))
    return float(tf[j]), float(xf[j])


# --- full Hilbert space, spin-1/2 -------------------------------------------

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex) / 2,
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex) / 2,
    "z": np.array([[1, 0], [0, -1]], dtype=complex) / 2,
}


def site_operator(op, i, n):
    out = np.ones((1, 1), dtype=complex)
    for k in range(n):
        out = np.kron(out, _PAULI[op] if k == i else np.eye(2))
    return out


def xxz_hamiltonian(J, delta):
    """H = -sum_{i<j} J_ij (sx sx + sy sy + Delta sz sz), spin-1/2."""
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    ops = {a: [site_operator(a, i, n) for i in range(n)] for a in "xyz"}
    H = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            if J[i, j] == 0:
                continue
            H -= J[i, j] * (ops["x"][i] @ ops["x"][j] + ops["y"][i] @ ops["y"][j]
                            + delta * ops["z"][i] @ ops["z"][j])
    return H


def xxz_squeezing(J, delta, times):
    """Exact xi^2(t) for the x-polarized product state under the full XXZ."""
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    H = xxz_hamiltonian(J, delta)
    w, U = scipy.linalg.eigh(H)
    plus = np.array([1, 1], dtype=complex) / np.sqrt(2)
    psi0 = plus
    for _ in range(n - 1):
        psi0 = np.kron(psi0, plus)
    c = U.conj().T @ psi0
    t = np.asarray(times, dtype=float)
    psi = (np.exp(-1j * np.outer(t, w)) * c[None, :]) @ U.T
    S = {a: sum(site_operator(a, i, n) for i in range(n)) for a in "xyz"}
    sx, _, _, vyy, vzz, cyz = _moments(psi, S["x"], S["y"], S["z"])
    var = _min_eig(vyy, vzz, cyz)
    return n * var / sx ** 2
