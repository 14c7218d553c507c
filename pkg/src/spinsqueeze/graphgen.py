"""Interaction graphs: diluted long-range lattices, power-of-two graphs and
random graphs with distance-correlated bond dilution.

All geometries live on periodic supports (ring or rhombic torus) and use
minimum-image distances.  Site dilution is a mask: removed sites keep their
index and get zeroed rows/columns.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .rng import GRAPH_STREAM, generator

GEOMETRIES = ("ring1d", "triangular2d", "pw2", "correlated_bond")
SPARSE_DENSITY = 0.05


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class GraphParams:
    alpha: float = 0.0
    dimension: int = 1
    dilution_p: float = 0.0
    bond_C: float = 1.0
    kappa_scale: float = 0.0
    apply_kac: bool = True


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric nonnegative coupling matrix plus provenance.

    ``kernel`` is set only for clean translation-invariant graphs: the
    coupling of site 0 to every displacement (a length-n ring row, or an
    ``(L1, L2)`` array on the torus).  It enables FFT spectra and
    convolution-based fields and is never needed for correctness.
    """

    n_nodes: int
    couplings: object
    geometry: str
    params: GraphParams
    seed: int
    active_nodes: np.ndarray
    kernel: np.ndarray | None = None
    shape: tuple = field(default=())

    @property
    def is_sparse(self):
        return sp.issparse(self.couplings)

    @property
    def n_active(self):
        return int(np.count_nonzero(self.active_nodes))

    def dense(self):
        if self.is_sparse:
            return self.couplings.toarray()
        return self.couplings

    def csr(self):
        if self.is_sparse:
            return self.couplings.tocsr()
        return sp.csr_matrix(self.couplings)

    def restricted(self, nodes=None):
        """Coupling matrix restricted to ``nodes`` (default: active nodes)."""
        if nodes is None:
            nodes = np.flatnonzero(self.active_nodes)
        nodes = np.asarray(nodes)
        if self.is_sparse:
            m = self.couplings.tocsr()[nodes][:, nodes]
            return m.tocsr()
        return self.couplings[np.ix_(nodes, nodes)]

    def bond_count(self):
        if self.is_sparse:
            return self.couplings.nnz // 2
        return int(np.count_nonzero(np.triu(self.couplings, 1)))


def ring_distance(i, j, n):
    d = abs(int(i) - int(j)) % n
    return min(d, n - d)


def _ring_offsets(n):
    k = np.arange(n)
    return np.minimum(k, n - k)


def rhombus_shape(n):
    """Torus extents ``(L1, L2)`` with ``L1 * L2 == n`` and ``1 <= L1/L2 <= 2``.

    Square patches are preferred; ``n = 2 L^2`` gives a 2:1 rhombus.
    """
    L2 = math.isqrt(n)
    while L2 >= 1:
        if n % L2 == 0 and n // L2 <= 2 * L2:
            return n // L2, L2
        L2 -= 1
    raise GraphError(f"n={n} admits no rhombic L1 x L2 patch with aspect <= 2")


def triangular_distances(L1, L2):
    """Minimum-image distances from the origin on an L1 x L2 triangular torus.

    Lattice vectors e1 = (1, 0), e2 = (1/2, sqrt(3)/2); entry ``[a, b]`` is the
    distance to the site displaced by a*e1 + b*e2.
    """
    a = np.arange(L1)[:, None].astype(float)
    b = np.arange(L2)[None, :].astype(float)
    best = np.full((L1, L2), np.inf)
    for sa in (-1, 0, 1):
        for sb in (-1, 0, 1):
            aa = a + sa * L1
            bb = b + sb * L2
            best = np.minimum(best, aa * aa + bb * bb + aa * bb)
    return np.sqrt(best)


def _distance_kernel(n, dimension):
    if dimension == 1:
        return _ring_offsets(n).astype(float), (n,)
    if dimension == 2:
        L1, L2 = rhombus_shape(n)
        return triangular_distances(L1, L2), (L1, L2)
    raise GraphError(f"dimension must be 1 or 2, got {dimension}")


def _power(r, alpha):
    out = np.zeros_like(r, dtype=float)
    nz = r > 0
    out[nz] = r[nz] ** (-alpha)
    return out


def kac_norm(alpha, n, dimension=1):
    """Sum of r**-alpha over all other sites of the periodic lattice.

    This is the weighted degree of any site before normalization, so dividing
    by it gives unit degree on the clean lattice.
    """
    if n < 2:
        raise GraphError("kac_norm needs n >= 2")
    r, _ = _distance_kernel(n, dimension)
    return float(_power(r, alpha).sum())


def _kernel_to_dense(kernel):
    if kernel.ndim == 1:
        # symmetric kernel, so the circulant is symmetric
        return scipy.linalg.circulant(kernel)
    L1, L2 = kernel.shape
    da = (np.arange(L1)[None, :] - np.arange(L1)[:, None]) % L1
    db = (np.arange(L2)[None, :] - np.arange(L2)[:, None]) % L2
    J = kernel[da[:, None, :, None], db[None, :, None, :]]
    return J.reshape(L1 * L2, L1 * L2)


def _kernel_to_sparse(kernel, mask):
    """CSR couplings among active sites for a kernel with few nonzero offsets."""
    if kernel.ndim == 1:
        n = kernel.size
        idx = np.arange(n)
        offs = np.flatnonzero(kernel)
        rows = np.repeat(idx[None, :], offs.size, axis=0)
        cols = (rows + offs[:, None]) % n
        vals = np.repeat(kernel[offs][:, None], n, axis=1)
    else:
        L1, L2 = kernel.shape
        n = L1 * L2
        a, b = np.divmod(np.arange(n), L2)
        oa, ob = np.nonzero(kernel)
        rows = np.repeat(np.arange(n)[None, :], oa.size, axis=0)
        cols = ((a[None, :] + oa[:, None]) % L1) * L2 + (b[None, :] + ob[:, None]) % L2
        vals = np.repeat(kernel[oa, ob][:, None], n, axis=1)
    rows, cols, vals = rows.ravel(), cols.ravel(), vals.ravel()
    keep = mask[rows] & mask[cols]
    J = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))
    J.sum_duplicates()
    J.sort_indices()
    return J


def _couplings(kernel, mask):
    if np.count_nonzero(kernel) < SPARSE_DENSITY * kernel.size:
        return _kernel_to_sparse(kernel, mask)
    return _kernel_to_dense(kernel)


def _dilute(n, p, seed):
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"dilution_p must lie in [0, 1], got {p}")
    if p == 0.0:
        return np.ones(n, dtype=bool)
    rng = generator(seed, GRAPH_STREAM)
    return rng.random(n) >= p


def _finalize(J, geometry, params, seed, mask, kernel, shape):
    n = J.shape[0]
    clean = bool(mask.all())
    if not sp.issparse(J):
        if not clean:
            J[~mask, :] = 0.0
            J[:, ~mask] = 0.0
        if np.count_nonzero(J) < SPARSE_DENSITY * n * n:
            J = sp.csr_matrix(J)
    J_kernel = kernel if clean else None
    return Graph(n, J, geometry, params, int(seed), mask, J_kernel, tuple(shape))


def build_diluted_lr_lattice(params, n, seed=0):
    """Power-law couplings r**-alpha * exp(-kappa r) / N_kac on a diluted lattice.

    d=1 is a ring, d=2 a triangular torus; kappa = kappa_scale / n.
    """
    if n < 2:
        raise GraphError("lattice needs n >= 2")
    if params.dilution_p >= 1.0:
        raise GraphError("dilution_p must be < 1 for a lattice")
    r, shape = _distance_kernel(n, params.dimension)
    kernel = _power(r, params.alpha)
    if params.kappa_scale > 0:
        kernel = kernel * np.exp(-params.kappa_scale / n * r)
    if params.apply_kac:
        kernel = kernel / kac_norm(params.alpha, n, params.dimension)
    geometry = "ring1d" if params.dimension == 1 else "triangular2d"
    mask = _dilute(n, params.dilution_p, seed)
    J = _couplings(kernel, mask)
    return _finalize(J, geometry, params, seed, mask, kernel, shape)


def pw2_kernel(n, alpha, apply_kac=True):
    if n < 4 or n & (n - 1):
        raise GraphError(f"PW2 graph needs n a power of two >= 4, got {n}")
    r = _ring_offsets(n)
    is_pw2 = (r > 0) & ((r & (r - 1)) == 0)
    kernel = np.zeros(n)
    kernel[is_pw2] = r[is_pw2].astype(float) ** (-alpha)
    if alpha < 0:
        kernel *= float(n) ** alpha
    if apply_kac:
        kernel /= kernel.sum()
    return kernel


def build_pw2_graph(params, n, seed=0):
    """Ring with bonds only at distances 1, 2, 4, ..., n/2 (antipode once)."""
    kernel = pw2_kernel(n, params.alpha, params.apply_kac)
    if params.dilution_p >= 1.0:
        raise GraphError("dilution_p must be < 1")
    mask = _dilute(n, params.dilution_p, seed)
    J = _couplings(kernel, mask)
    return _finalize(J, "pw2", params, seed, mask, kernel, (n,))


def bond_probability(r, C, alpha):
    r = np.asarray(r, dtype=float)
    return np.minimum(1.0, C * r ** (-alpha))


def build_correlated_bond_graph(params, n, seed=0):
    """Unit bonds present with probability min(1, C r**-alpha), r = ring distance."""
    C = params.bond_C
    if not C > 0:
        raise GraphError(f"bond_C must be > 0, got {C}")
    if params.alpha <= 0:
        raise GraphError("correlated-bond graph needs alpha > 0")
    if n < 2:
        raise GraphError("graph needs n >= 2")
    rng = generator(seed, GRAPH_STREAM)
    rows, cols = [], []
    for r in range(1, n // 2 + 1):
        m = n // 2 if 2 * r == n else n
        i = np.arange(m)
        keep = rng.random(m) < bond_probability(r, C, params.alpha)
        rows.append(i[keep])
        cols.append((i[keep] + r) % n)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.ones(2 * rows.size)
    J = sp.coo_matrix((data, (np.r_[rows, cols], np.r_[cols, rows])), shape=(n, n)).tocsr()
    J.sum_duplicates()
    J.sort_indices()
    mask = np.ones(n, dtype=bool)
    if J.nnz >= SPARSE_DENSITY * n * n:
        J = J.toarray()
    return Graph(n, J, "correlated_bond", params, int(seed), mask, None, (n,))


def build_graph(geometry, params, n, seed=0):
    if geometry in ("ring1d", "triangular2d"):
        dim = 1 if geometry == "ring1d" else 2
        if params.dimension != dim:
            params = GraphParams(**{**asdict(params), "dimension": dim})
        return build_diluted_lr_lattice(params, n, seed)
    if geometry == "pw2":
        return build_pw2_graph(params, n, seed)
    if geometry == "correlated_bond":
        return build_correlated_bond_graph(params, n, seed)
    raise GraphError(f"unknown geometry {geometry!r}; expected one of {GEOMETRIES}")


def complete_graph(n, J=None):
    """Complete graph, default weight 1/(n-1) (unit degree)."""
    if J is None:
        J = 1.0 / (n - 1)
    M = np.full((n, n), float(J))
    np.fill_diagonal(M, 0.0)
    return from_matrix(M, geometry="ring1d", params=GraphParams(alpha=0.0))


def from_matrix(M, geometry="correlated_bond", params=None, seed=0, active=None):
    """Wrap an explicit coupling matrix (tests, imports)."""
    if sp.issparse(M):
        M = M.tocsr().astype(float)
        asym = abs(M - M.T).max() if M.nnz else 0.0
        diag = M.diagonal()
    else:
        M = np.array(M, dtype=float)
        asym = np.abs(M - M.T).max() if M.size else 0.0
        diag = np.diag(M)
    if asym != 0.0:
        raise GraphError("coupling matrix must be exactly symmetric")
    if np.any(diag != 0):
        raise GraphError("coupling matrix must have zero diagonal")
    if (M.data if sp.issparse(M) else M).min(initial=0.0) < 0:
        raise GraphError("couplings must be nonnegative")
    n = M.shape[0]
    if active is None:
        active = np.ones(n, dtype=bool)
    return Graph(n, M, geometry, params or GraphParams(), int(seed),
                 np.asarray(active, dtype=bool), None, (n,))


def degree_vector(g):
    """Weighted degrees deg_j = sum_l J_lj (zero on removed sites)."""
    return np.asarray(g.couplings.sum(axis=0)).ravel()


def mean_degree(g, nodes=None):
    deg = degree_vector(g)
    if nodes is None:
        nodes = np.flatnonzero(g.active_nodes)
    if len(nodes) == 0:
        return 0.0
    return float(deg[nodes].mean())


# --- columnar text export -------------------------------------------------

_HEADER_KEYS = ("geometry", "n", "seed", "alpha", "dimension", "dilution_p",
                "bond_C", "kappa_scale", "apply_kac")


def dumps(g):
    p = g.params
    head = (f"# geometry={g.geometry} n={g.n_nodes} seed={g.seed} alpha={p.alpha!r} "
            f"dimension={p.dimension} dilution_p={p.dilution_p!r} bond_C={p.bond_C!r} "
            f"kappa_scale={p.kappa_scale!r} apply_kac={int(p.apply_kac)}")
    inactive = np.flatnonzero(~g.active_nodes)
    lines = [head, "# inactive=" + ",".join(str(i) for i in inactive)]
    coo = sp.triu(g.csr(), k=1).tocoo()
    order = np.lexsort((coo.col, coo.row))
    for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        lines.append(f"{i} {j} {float(v)!r}")
    return "\n".join(lines) + "\n"


def loads(text):
    meta = {}
    inactive = []
    rows, cols, vals = [], [], []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("inactive="):
                spec = body[len("inactive="):]
                inactive = [int(x) for x in spec.split(",") if x]
            else:
                for tok in body.split():
                    k, _, v = tok.partition("=")
                    meta[k] = v
            continue
        i, j, v = line.split()
        rows.append(int(i))
        cols.append(int(j))
        vals.append(float(v))
    missing = [k for k in _HEADER_KEYS if k not in meta]
    if missing:
        raise GraphError(f"graph header lacks {missing}")
    n = int(meta["n"])
    params = GraphParams(alpha=float(meta["alpha"]), dimension=int(meta["dimension"]),
                         dilution_p=float(meta["dilution_p"]), bond_C=float(meta["bond_C"]),
                         kappa_scale=float(meta["kappa_scale"]),
                         apply_kac=bool(int(meta["apply_kac"])))
    rows = np.array(rows, dtype=np.int64)
    cols = np.array(cols, dtype=np.int64)
    vals = np.array(vals, dtype=float)
    J = sp.coo_matrix((np.r_[vals, vals], (np.r_[rows, cols], np.r_[cols, rows])),
                      shape=(n, n)).tocsr()
    J.sort_indices()
    if J.nnz >= SPARSE_DENSITY * n * n:
        J = J.toarray()
    active = np.ones(n, dtype=bool)
    active[inactive] = False
    return Graph(n, J, meta["geometry"], params, int(meta["seed"]), active, None, (n,))


def save(g, path):
    from .io import atomic_write_text
    atomic_write_text(path, dumps(g))


def load(path):
    with open(path) as fh:
        return loads(fh.read())
