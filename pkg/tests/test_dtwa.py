import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinsqueeze.dtwa import (DTWAError, DenseField, EnsembleSpec, classical_energy,
                              collective_estimators, default_time_grid, field_for, integrate,
                              mean_field_rhs, read_checkpoint, run_ensemble, sample_initial,
                              write_checkpoint)
from spinsqueeze.exact import oat_exact_minimum
from spinsqueeze.graphgen import GraphParams, build_graph, complete_graph, from_matrix
from spinsqueeze.io import read_csv
from spinsqueeze.rng import generator


def test_sample_initial_examples():
    rng = generator(1)
    S = sample_initial(1000, 0.5, rng)
    assert S.shape == (1000, 3)
    assert np.all(S[:, 0] == 0.5)
    assert set(np.unique(S[:, 1:])) == {-0.5, 0.5}
    # each sign is a fair coin: 3 sigma of 2000 draws
    assert abs((S[:, 1:] > 0).mean() - 0.5) < 3 * 0.5 / math.sqrt(2000)
    assert sample_initial(7, 1.5, rng, n_samples=4).shape == (4, 7, 3)
    with pytest.raises(ValueError):
        sample_initial(3, 0.0, rng)


def test_polarized_state_is_stationary():
    g = build_graph("ring1d", GraphParams(alpha=1.3, dilution_p=0.2), 40, 2)
    S = np.zeros((40, 3))
    S[g.active_nodes, 0] = 0.5
    for delta in (-0.5, 0.0, 0.7):
        np.testing.assert_allclose(mean_field_rhs(S, g, delta), 0.0, atol=1e-15)


def test_zero_coupling_keeps_state():
    g = from_matrix(np.zeros((5, 5)))
    S0 = sample_initial(5, 0.5, generator(0))
    tr = integrate(S0, g, 0.3, np.linspace(0, 10, 5))
    np.testing.assert_array_equal(tr.spins, np.broadcast_to(S0, tr.spins.shape))


def _rotate(v, axis, angle):
    k = axis / np.linalg.norm(axis)
    return (v * math.cos(angle) + np.cross(k, v) * math.sin(angle)
            + k * np.dot(k, v) * (1 - math.cos(angle)))


def test_two_spin_precession_heisenberg():
    # at Delta = 1 each spin precesses about the conserved total spin
    g = from_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    S0 = np.array([[0.5, 0.0, 0.0], [0.0, 0.5, 0.0]])
    tot = S0.sum(axis=0)
    t = np.linspace(0, 7, 15)
    tr = integrate(S0, g, 1.0, t, rtol=1e-11, atol=1e-13)
    for k, tk in enumerate(t):
        expect = _rotate(S0[0], tot, -np.linalg.norm(tot) * tk)
        np.testing.assert_allclose(tr.spins[k, 0], expect, atol=1e-8)
        np.testing.assert_allclose(tr.spins[k].sum(axis=0), tot, atol=1e-9)


@given(st.floats(-0.9, 0.9), st.integers(0, 10 ** 6))
def test_two_spin_conserves_total_sz(delta, seed):
    g = from_matrix(np.array([[0.0, 0.7], [0.7, 0.0]]))
    S0 = sample_initial(2, 0.5, generator(seed))
    tr = integrate(S0, g, delta, np.linspace(0, 20, 11))
    np.testing.assert_allclose(tr.spins[..., 2].sum(axis=-1), S0[:, 2].sum(), atol=1e-8)


@given(st.sampled_from(["ring1d", "pw2", "correlated_bond", "triangular2d"]),
       st.floats(-0.9, 0.9), st.integers(0, 10 ** 6))
def test_norm_and_energy_conserved(geo, delta, seed):
    g = build_graph(geo, GraphParams(alpha=1.5, bond_C=0.8, dimension=2 if geo == "triangular2d" else 1,
                                     dilution_p=0.0 if geo == "correlated_bond" else 0.2), 64, seed)
    S0 = np.zeros((64, 3))
    S0[g.active_nodes] = sample_initial(g.n_active, 0.5, generator(seed), n_samples=None)
    tr = integrate(np.stack([S0, -S0]), g, delta, np.linspace(0, 30, 7))
    assert tr.norm_drift.max() <= 1e-6
    assert tr.energy_drift.max() <= 1e-6
    op = field_for(g)
    E = [classical_energy(tr.spins[k, 0], op, delta) for k in range(7)]
    assert np.ptp(E) <= 1e-6 * max(abs(E[0]), 1e-12) + 1e-12


def test_drift_bound_raises():
    g = build_graph("ring1d", GraphParams(alpha=1.0), 16, 0)
    S0 = sample_initial(16, 0.5, generator(3))
    with pytest.raises(DTWAError, match="drift"):
        integrate(S0, g, 0.0, np.linspace(0, 50, 3), rtol=1e-2, atol=1e-2, norm_tol=1e-14)


def test_bad_time_grid():
    g = complete_graph(3)
    with pytest.raises(ValueError):
        integrate(np.zeros((3, 3)), g, 0.0, [0.0, 1.0, 0.5])


def test_field_backends_agree():
    g = build_graph("ring1d", GraphParams(alpha=1.2), 32, 0)
    S = sample_initial(32, 0.5, generator(2), n_samples=3)
    np.testing.assert_allclose(field_for(g)(S), DenseField(g.dense())(S), atol=1e-14)


def _spec(**kw):
    base = dict(geometry="ring1d", params=GraphParams(alpha=1.5, dilution_p=0.2), n=32, delta=0.0)
    base.update(kw)
    return EnsembleSpec(**base)


T = np.linspace(0.0, 20.0, 11)


def test_ensemble_deterministic_and_worker_independent():
    a = run_ensemble(_spec(), 60, T, seed=4, chunk=20)
    b = run_ensemble(_spec(), 60, T, seed=4, chunk=20)
    c = run_ensemble(_spec(), 60, T, seed=4, chunk=20, workers=2)
    assert a.rows() == b.rows() == c.rows()
    d = run_ensemble(_spec(), 60, T, seed=5, chunk=20)
    assert a.rows() != d.rows()


def test_checkpoint_resume_is_bit_identical(tmp_path):
    ck = tmp_path / "ck.bin"
    full = run_ensemble(_spec(), 100, T, seed=1, checkpoint=str(ck))
    data = read_checkpoint(ck)
    assert data.n_samples == 100 and np.array_equal(data.times, T)
    # keep only the first chunk, then resume
    write_checkpoint(ck, data.times, data.S[:50], data.n_act[:50])
    resumed = run_ensemble(_spec(), 100, T, seed=1, checkpoint=str(ck))
    assert resumed.rows() == full.rows()


def test_checkpoint_layout_and_errors(tmp_path):
    p = tmp_path / "c.bin"
    S = np.arange(2 * 3 * 3, dtype=float).reshape(2, 3, 3)
    write_checkpoint(p, [0.0, 1.0, 2.0], S, [4.0, 5.0])
    raw = p.read_bytes()
    assert raw[:8] == b"SSQDTWA\0"
    assert len(raw) == 24 + 8 * (3 + 2 + 18)
    ck = read_checkpoint(p)
    np.testing.assert_array_equal(ck.S, S)
    p.write_bytes(raw[:-8])
    with pytest.raises(DTWAError, match="size"):
        read_checkpoint(p)
    p.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(DTWAError, match="not a DTWA"):
        read_checkpoint(p)


def test_trace_csv(tmp_path):
    tr = run_ensemble(_spec(), 10, T, seed=0)
    tr.to_csv(tmp_path / "t.csv")
    h, rows = read_csv(tmp_path / "t.csv")
    assert h == ["t", "xi2", "Sx", "varmin", "breakdown_flag", "m_xy", "m_xy_err", "n_samples",
                 "xi2_err"]
    assert len(rows) == T.size and rows[0][7] == "10"


def test_estimator_examples():
    # two samples, one time: Sy = +-1, Sz = 0, Sx = 2
    S = np.array([[[2.0, 1.0, 0.0]], [[2.0, -1.0, 0.0]]])
    tr = collective_estimators(S, [4, 4])
    assert tr.varmin[0] == 0.0 and tr.xi2[0] == 0.0
    assert tr.Sx[0] == 2.0 and tr.Sx_err[0] == 0.0
    assert tr.m_xy[0] == pytest.approx(math.sqrt(5) / 4)
    with pytest.raises(DTWAError):
        collective_estimators(S[:1], [4])


def test_initial_squeezing_and_symmetry():
    spec = _spec(n=64)
    tr = run_ensemble(spec, 400, np.linspace(0, 60, 13), seed=2)
    assert abs(tr.xi2[0] - 1.0) <= 3 * tr.xi2_err[0]
    # the dynamics are symmetric under S_z -> -S_z
    assert np.all(np.abs(tr.Sz) <= 3 * tr.Sz_err + 1e-12)
    # coherent-state bound with the single-spin zero-point term
    s = spec.spin_s
    bound = s * np.sqrt(1 + 1 / (tr.n_active * s))
    assert np.all(tr.m_xy >= 0) and np.all(tr.m_xy <= bound + 3 * tr.m_xy_err)
    assert np.all(np.isfinite(tr.m_xy_err))


def test_complete_graph_matches_oat():
    n = 64
    spec = EnsembleSpec("ring1d", GraphParams(alpha=0.0), n, 0.0)
    chi = 1.0 / (2 * (n - 1))
    t_ex, xi_ex = oat_exact_minimum(n, chi)
    t = np.linspace(0, 2 * t_ex, 61)
    tr = run_ensemble(spec, 500, t, seed=0)
    assert np.nanmin(tr.xi2) == pytest.approx(xi_ex, rel=0.10)


def test_sample_count_convergence():
    spec = EnsembleSpec("triangular2d", GraphParams(alpha=3.0, dimension=2, dilution_p=0.2), 64, 0.0)
    t = default_time_grid(spec, seed=7, n_points=60)
    mins = []
    for m in (250, 500):
        tr = run_ensemble(spec, m, t, seed=7)
        k = int(np.nanargmin(tr.xi2))
        mins.append((tr.xi2[k], tr.xi2_err[k]))
    (a, ea), (b, eb) = mins
    assert abs(a - b) < math.hypot(ea, eb)
