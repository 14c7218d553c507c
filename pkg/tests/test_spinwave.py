import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import kitagawa_ueda, laplacian as brute_laplacian, oat_full_hilbert
from spinsqueeze.exact import oat_exact, oat_exact_minimum, xxz_hamiltonian, xxz_squeezing
from spinsqueeze.graphgen import GraphParams, build_graph, complete_graph, from_matrix
from spinsqueeze.io import read_csv
from spinsqueeze.spinwave import (SpinWaveError, SWConfig, bogoliubov, dispersion, full_spectrum,
                                  heisenberg_perturbation, oat_xi2, quadratic_hamiltonian,
                                  regular_approx_spectrum, relative_deviation, rotor_frequency,
                                  rotor_oat_moments, spinwave_populations,
                                  symplectic_frequencies, xi2_rotor_sw)


def two_node(J=0.8):
    return from_matrix(np.array([[0.0, J], [J, 0.0]]))


def test_config_validation():
    with pytest.raises(SpinWaveError):
        SWConfig(1.5)
    with pytest.raises(SpinWaveError):
        SWConfig(-1.0)
    with pytest.raises(SpinWaveError):
        SWConfig(0.0, spin_s=0.7)
    SWConfig(1.0)  # allowed for spectra
    with pytest.raises(SpinWaveError):
        SWConfig(1.0).require_squeezing()


def test_quadratic_hamiltonian_block_structure():
    g = build_graph("correlated_bond", GraphParams(alpha=1.5, bond_C=0.9), 12, 1)
    J = g.dense()
    D = np.diag(J.sum(axis=1))
    for delta in (-0.4, 0.0, 0.6, 1.0):
        H = quadratic_hamiltonian(g, SWConfig(delta, spin_s=1.0))
        A = 1.0 * (D - J * (1 + delta) / 2)
        B = -1.0 * J * (1 - delta) / 2
        np.testing.assert_allclose(H, np.block([[A, B], [B, A]]), atol=1e-14)
    H1 = quadratic_hamiltonian(g, SWConfig(1.0))
    np.testing.assert_array_equal(H1[:12, 12:], 0.0)
    np.testing.assert_allclose(H1[:12, :12], 0.5 * brute_laplacian(J), atol=1e-14)


def test_two_spin_calibration_against_exact_spectrum():
    # at the Heisenberg point the singlet sits J above the x-polarized triplet
    J = 0.8
    w = np.linalg.eigvalsh(xxz_hamiltonian(np.array([[0, J], [J, 0]]), 1.0))
    gap = w[-1] - w[0]
    assert gap == pytest.approx(J, rel=1e-12)
    assert full_spectrum(two_node(J), SWConfig(1.0))[-1] == pytest.approx(J, rel=1e-12)
    for delta in (0.0, 0.5):
        sym = symplectic_frequencies(quadratic_hamiltonian(two_node(J), SWConfig(delta)))
        # the zero mode is a Jordan block, so eta H only resolves it to sqrt(eps)
        np.testing.assert_allclose(sorted(sym), full_spectrum(two_node(J), SWConfig(delta)),
                                   atol=1e-7)


@pytest.mark.parametrize("n,delta", [(4, 0.0), (6, 0.3), (5, -0.5)])
def test_complete_graph_xxz_equals_oat(n, delta):
    K = complete_graph(n)
    t = np.linspace(0, 40, 9)
    chi = rotor_frequency(K, SWConfig(delta))
    assert chi == pytest.approx((1 - delta) / (2 * (n - 1)))
    exact_xxz = xxz_squeezing(K.dense(), delta, t)
    np.testing.assert_allclose(exact_xxz, oat_exact(n, chi, t)[0], rtol=1e-8, atol=1e-10)


def test_complete_graph_modes_degenerate():
    sol = regular_approx_spectrum(complete_graph(10), SWConfig(0.0))
    np.testing.assert_allclose(sol.omegas[1:], sol.omegas[1], rtol=1e-12)
    full = full_spectrum(complete_graph(10), SWConfig(0.0))
    np.testing.assert_allclose(full[1:], sol.omegas[1], rtol=1e-10)


def test_regular_approx_examples():
    g = build_graph("ring1d", GraphParams(alpha=1.5), 64, 0)
    sol = regular_approx_spectrum(g, SWConfig(1.0))
    np.testing.assert_allclose(sol.omegas, 0.5 * sol.lambdas, atol=1e-13)
    assert sol.omegas[0] == 0.0
    assert dispersion([0.0], 1.0, 0.3)[0] == 0.0


@given(st.sampled_from(["ring1d", "pw2", "correlated_bond"]), st.floats(0.0, 1.0),
       st.sampled_from([0.5, 1.0, 1.5]), st.integers(0, 10 ** 6), st.floats(0.0, 0.4))
def test_regular_approx_invariants(geo, delta, s, seed, p):
    params = GraphParams(alpha=1.4, bond_C=0.9, dilution_p=0.0 if geo == "correlated_bond" else p)
    g = build_graph(geo, params, 64, seed)
    sol = regular_approx_spectrum(g, SWConfig(delta, spin_s=s))
    nz = sol.lambdas > 1e-9
    np.testing.assert_allclose(sol.bogoliubov_u ** 2 - sol.bogoliubov_v ** 2, 1.0, atol=1e-10)
    ref = dispersion(sol.lambdas, sol.avg_degree, delta, s)
    np.testing.assert_allclose(sol.omegas[nz], ref[nz], rtol=1e-8)
    assert sol.omegas[0] == 0.0


@given(st.sampled_from(["ring1d", "pw2", "correlated_bond"]), st.floats(-0.9, 1.0),
       st.integers(0, 10 ** 6))
def test_full_spectrum_matches_symplectic(geo, delta, seed):
    g = build_graph(geo, GraphParams(alpha=1.2, bond_C=0.9, dilution_p=0.0), 16, seed)
    cfg = SWConfig(delta)
    direct = np.sort(symplectic_frequencies(quadratic_hamiltonian(g, cfg)))
    np.testing.assert_allclose(full_spectrum(g, cfg), direct, atol=1e-7)


def test_bogoliubov_instability_reported():
    with pytest.raises(SpinWaveError, match="mode 1"):
        bogoliubov([1.0, 0.1], [0.0, 1.0])


def test_negative_anisotropy_instability_on_heterogeneous_graph():
    # for Delta < 0 modes with lambda > deg_avg (1 - Delta) / abs(Delta) have no real frequency
    g = build_graph("correlated_bond", GraphParams(alpha=1.7, bond_C=0.9), 64, 1)
    with pytest.raises(SpinWaveError, match="instability"):
        regular_approx_spectrum(g, SWConfig(-0.5))


def test_bogoliubov_against_direct_block():
    A, B = 1.3, -0.4
    w, u, v = bogoliubov([A], [B])
    sym = symplectic_frequencies(np.array([[A, B], [B, A]]))
    assert w[0] == pytest.approx(sym[0], rel=1e-12)
    assert u[0] * v[0] == pytest.approx(-B / (2 * w[0]))


def test_rotor_frequency_examples():
    assert rotor_frequency(complete_graph(11), SWConfig(0.0)) == pytest.approx(1 / 20)
    assert rotor_frequency(cfg=SWConfig(0.999999), avg_degree=1.0, n=10) < 1e-6
    a = rotor_frequency(cfg=SWConfig(0.2), avg_degree=1.0, n=50)
    b = rotor_frequency(cfg=SWConfig(0.2), avg_degree=2.0, n=50)
    assert b == pytest.approx(2 * a)
    with pytest.raises(SpinWaveError):
        rotor_frequency(complete_graph(4), SWConfig(1.0))


def test_rotor_moments_examples():
    Kx, var = rotor_oat_moments(30, 0.01, 0.0)
    assert Kx == 15.0 and var == 7.5 and oat_xi2(30, 0.01, 0.0) == 1.0
    Kx, _ = rotor_oat_moments(8, 1.0, math.pi / 2)
    assert abs(Kx) < 1e-14
    n = 20
    chi = 1 / (2 * 19)
    t = np.linspace(0, 3 * n ** (-2 / 3) / chi, 4001)
    xi = oat_xi2(n, chi, t)
    k = int(np.argmin(xi))
    t_ex, xi_ex = oat_exact_minimum(n, chi)
    assert xi[k] == pytest.approx(xi_ex, rel=0.01)
    assert t[k] == pytest.approx(t_ex, rel=0.01)


@given(st.integers(2, 300), st.floats(1e-4, 0.2))
def test_rotor_moments_against_closed_form(n, chit):
    t = 1.0
    ours = oat_xi2(n, chit, t)
    ref = kitagawa_ueda(n, chit, t)
    if abs(math.cos(chit)) ** (n - 1) > 1e-3:
        assert ours == pytest.approx(ref, rel=1e-7)


def test_rotor_moments_against_full_hilbert():
    t = np.linspace(0, 2.0, 7)
    np.testing.assert_allclose(oat_xi2(6, 0.3, t), oat_full_hilbert(6, 0.3, t), rtol=1e-10)


def test_populations_examples():
    g = build_graph("ring1d", GraphParams(alpha=1.5), 32, 0)
    sol = regular_approx_spectrum(g, SWConfig(0.0))
    G, F = spinwave_populations(sol, [0.0])
    np.testing.assert_array_equal(G, 0.0)
    t = np.linspace(0, 50, 2001)
    G, _ = spinwave_populations(sol, t)
    uv2 = (sol.bogoliubov_u[1:] * sol.bogoliubov_v[1:]) ** 2
    assert np.all(G >= 0)
    assert np.all(G.max(axis=0) <= 4 * uv2 * (1 + 1e-12))
    trivial = regular_approx_spectrum(g, SWConfig(1.0))
    G, F = spinwave_populations(trivial, t)
    np.testing.assert_array_equal(G, 0.0)
    np.testing.assert_allclose(F, 0.0, atol=0)


@given(st.sampled_from(["ring1d", "pw2", "correlated_bond", "triangular2d"]),
       st.floats(0.0, 0.95), st.integers(0, 1000))
def test_xi2_starts_at_one(geo, delta, seed):
    g = build_graph(geo, GraphParams(
        alpha=1.7, bond_C=0.9, dimension=2 if geo == "triangular2d" else 1,
        dilution_p=0.1 if geo != "correlated_bond" else 0.0), 64, seed)
    tr = xi2_rotor_sw(g, SWConfig(delta), np.array([0.0, 1.0]))
    assert tr.xi2[0] == 1.0


def test_spinwaves_off_gives_oat():
    g = build_graph("ring1d", GraphParams(alpha=1.2, dilution_p=0.2), 128, 3)
    cfg = SWConfig(0.0)
    sol = regular_approx_spectrum(g, cfg)
    t = np.linspace(0, 200, 101)
    tr = xi2_rotor_sw(g, cfg, t, include_spinwaves=False, sol=sol)
    ref = oat_xi2(sol.n_nodes, sol.chi, t)
    np.testing.assert_allclose(tr.xi2, ref, rtol=1e-12, atol=0)


def test_breakdown_flag_for_short_range():
    g = build_graph("ring1d", GraphParams(alpha=2.8, dilution_p=0.1), 512, 0)
    cfg = SWConfig(0.0)
    sol = regular_approx_spectrum(g, cfg)
    t = np.linspace(0, 20 / sol.chi * sol.n_nodes ** (-2 / 3), 400)
    tr = xi2_rotor_sw(g, cfg, t, sol=sol)
    assert tr.breakdown.any()
    first = int(np.argmax(tr.breakdown))
    assert np.all(tr.breakdown[first:]) and np.all(np.isnan(tr.xi2[first:]))


@pytest.mark.parametrize("n", [8, 10, 12])
def test_oracle_equivalence_complete_graph(n):
    K = complete_graph(n)
    cfg = SWConfig(0.0)
    sol = regular_approx_spectrum(K, cfg)
    t = np.linspace(0, 3 * n ** (-2 / 3) / sol.chi, 3001)
    tr = xi2_rotor_sw(K, cfg, t, sol=sol)
    _, ex = oat_exact_minimum(n, sol.chi)
    assert np.nanmin(tr.xi2) == pytest.approx(ex, rel=0.05)


def test_degenerate_basis_independence():
    K = complete_graph(12)
    perm = np.random.default_rng(0).permutation(12)
    Kp = from_matrix(K.dense()[np.ix_(perm, perm)])
    t = np.linspace(0, 20, 50)
    a = xi2_rotor_sw(K, SWConfig(0.3), t).xi2
    b = xi2_rotor_sw(Kp, SWConfig(0.3), t).xi2
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_spin_s_generalization_starts_coherent():
    g = build_graph("ring1d", GraphParams(alpha=1.3), 64, 0)
    for s in (0.5, 1.0, 2.5):
        tr = xi2_rotor_sw(g, SWConfig(0.0, spin_s=s), np.array([0.0, 5.0]))
        assert tr.xi2[0] == 1.0 and tr.xi2[1] < 1.0


@pytest.mark.parametrize("p,delta", [(0.1, 0.0), (0.1, 0.5), (0.1, 0.9), (0.3, 0.5)])
def test_regular_approx_vs_full_lowest_decile(p, delta):
    g = build_graph("ring1d", GraphParams(alpha=1.4, dilution_p=p), 2048, 7)
    cfg = SWConfig(delta)
    sol = regular_approx_spectrum(g, cfg)
    k = sol.n_nodes // 10
    exact = full_spectrum(g, cfg, n_modes=k)
    assert relative_deviation(sol.omegas[1:k], exact[1:k]).max() < 0.10


def test_heisenberg_perturbation_examples():
    g = build_graph("correlated_bond", GraphParams(alpha=1.8, bond_C=0.9), 64, 2)
    rep = heisenberg_perturbation(g, 1.0)
    assert rep.delta_eps == 0.0
    n = 30
    rep = heisenberg_perturbation(complete_graph(n), 0.0)
    assert rep.delta_lambda == pytest.approx(n / (n - 1))
    assert 1 - rep.delta_c == pytest.approx(2 * n / (n - 1))
    assert rep.outside_range
    with pytest.raises(SpinWaveError):
        heisenberg_perturbation(from_matrix(np.zeros((3, 3))), 0.0, nodes=np.arange(3))
    assert set(rep.as_dict()) >= {"delta_lambda", "delta_eps", "delta_c"}


def test_perturbative_gap_crossing_trend_in_C():
    # a larger bond amplitude stiffens the graph: 1 - Delta_c grows with C
    est = []
    for C in (0.8, 0.9, 1.0):
        vals = [1 - heisenberg_perturbation(
            build_graph("correlated_bond", GraphParams(alpha=1.8, bond_C=C), 128, s), 0.0).delta_c
            for s in range(8)]
        est.append(np.mean(vals))
    assert est[0] < est[1] < est[2]


def test_trace_csv(tmp_path):
    tr = xi2_rotor_sw(complete_graph(10), SWConfig(0.0), np.array([0.0, 1.0]))
    tr.to_csv(tmp_path / "r.csv")
    h, rows = read_csv(tmp_path / "r.csv")
    assert h == ["t", "xi2", "Sx", "varmin", "breakdown_flag"]
    assert rows[0][1] == "1.0" and rows[0][4] == "0"
