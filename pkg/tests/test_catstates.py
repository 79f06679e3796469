"""Coherent, spin-coherent, cat, and steady-manifold state constructors."""

import numpy as np
import pytest
import scipy.special

from catsim import catstates as cs
from catsim import hilbert as hb
from catsim import models as md
from catsim.analysis import fidelity
from catsim.errors import (
    CoefficientConsistencyError,
    ParameterError,
    RepresentationError,
)


def test_bessel_i0_against_scipy():
    xs = [0.0, 0.3, 1.0, 4.0, 12.0, 60.0, 400.0]
    for x in xs:
        assert cs.bessel_i0(x) == pytest.approx(scipy.special.i0(x), rel=1e-12)


def test_coherent_state_amplitudes_and_mean():
    alpha = 0.7 + 0.2j
    psi = cs.coherent_state(alpha, 30)
    n = np.arange(31)
    expected = np.exp(-abs(alpha) ** 2 / 2) * alpha**n / np.sqrt(
        scipy.special.factorial(n)
    )
    np.testing.assert_allclose(psi.amplitudes, expected, atol=1e-12)
    num = hb.fock_number(30)
    assert num.expect(psi).real == pytest.approx(abs(alpha) ** 2, rel=1e-10)


def test_coherent_overlap_formula():
    # F(|0>, |alpha>) = exp(-|alpha|^2 / 2) as amplitude overlap
    alpha = 1.3
    psi = cs.coherent_state(alpha, 40)
    vac = hb.basis_ket(psi.space, (0,))
    assert abs(vac.overlap(psi)) == pytest.approx(np.exp(-(alpha**2) / 2), rel=1e-10)


def test_cat_normalization_constant():
    # 1 / sqrt(2 (1 + exp(-2|alpha|^2))) = 0.6636 at |alpha|^2 = 1
    p = cs.CatParams(alpha=1.0, parity="even", rep=hb.Fock(30))
    psi = cs.cat_state(p)
    a_plus = 1.0 / np.sqrt(2.0 * (1.0 + np.exp(-2.0)))
    assert a_plus == pytest.approx(0.6636, abs=5e-5)
    co = cs.coherent_state(1.0, 30)
    co_m = cs.coherent_state(-1.0, 30)
    expected = a_plus * (co.amplitudes + co_m.amplitudes)
    np.testing.assert_allclose(psi.amplitudes, expected, atol=1e-12)
    assert psi.norm == pytest.approx(1.0, abs=1e-12)


def test_cat_closed_form_large_alpha():
    # |alpha|^2 = 4: check even/odd cats against the explicit sum to 1e-10
    alpha = 2.0
    for parity, sign in (("even", 1.0), ("odd", -1.0)):
        psi = cs.cat_state(cs.CatParams(alpha=alpha, parity=parity, rep=hb.Fock(60)))
        norm = 1.0 / np.sqrt(2.0 * (1.0 + sign * np.exp(-2.0 * alpha**2)))
        plus = cs.coherent_state(alpha, 60).amplitudes
        minus = cs.coherent_state(-alpha, 60).amplitudes
        np.testing.assert_allclose(psi.amplitudes, norm * (plus + sign * minus),
                                   atol=1e-10)


def test_cats_are_orthogonal_parity_eigenstates():
    even = cs.cat_state(cs.CatParams(alpha=1.5, parity="even", rep=hb.Fock(40)))
    odd = cs.cat_state(cs.CatParams(alpha=1.5, parity="odd", rep=hb.Fock(40)))
    assert abs(even.overlap(odd)) < 1e-14
    assert np.abs(even.amplitudes[1::2]).max() == 0.0
    assert np.abs(odd.amplitudes[0::2]).max() == 0.0


def test_dark_state_recursion_matches_cat_state():
    # two independent routes to the same states, never collapse them
    for a2 in (0.5, 1.0, 2.0, 4.0):
        alpha = np.sqrt(a2) * 1j
        for parity in ("even", "odd"):
            direct = cs.cat_state(cs.CatParams(alpha=alpha, parity=parity,
                                               rep=hb.Fock(40)))
            recursed = cs.dark_state_recursion(alpha, parity, 40)
            ov = abs(direct.overlap(recursed))
            assert ov == pytest.approx(1.0, abs=1e-10)


def test_dark_state_recursion_annihilated_by_channel():
    alpha = 1.2j
    sd = hb.space(hb.Fock(40))
    a = hb.fock_destroy(40)
    ch = a @ a - hb.identity(sd) * alpha**2
    for parity in ("even", "odd"):
        psi = cs.dark_state_recursion(alpha, parity, 40)
        residual = np.linalg.norm((ch.matrix @ psi.amplitudes)[:-2])
        assert residual < 1e-10


def test_spin_coherent_overlap_with_bosonic_cat_regime():
    # N = 100, sqrt(N) tan(theta/2) = 1: holstein-primakoff image of |alpha=1>
    n_atoms = 100
    theta = 2.0 * np.arctan(1.0 / np.sqrt(n_atoms))
    psi = cs.spin_coherent(n_atoms, theta, np.pi / 2, 20)
    boson = cs.coherent_state(1j, 20).amplitudes
    ov = abs(np.vdot(boson, psi.amplitudes))
    assert ov > 0.99


def test_spin_coherent_poissonian_vs_exact():
    n_atoms = 100
    theta = 2.0 * np.arctan(1.2 / np.sqrt(n_atoms))
    exact = cs.spin_coherent(n_atoms, theta, 0.4, 15)
    approx = cs.spin_coherent_poissonian(n_atoms, theta, 0.4, 15)
    assert abs(exact.overlap(approx)) > 0.999


def test_spin_coherent_antipodal_phase_relation():
    # phi -> phi + pi flips the sign of every odd-n amplitude
    n_atoms, n_cut = 12, 6
    a = cs.spin_coherent(n_atoms, 0.8, 0.3, n_cut)
    b = cs.spin_coherent(n_atoms, 0.8, 0.3 + np.pi, n_cut)
    signs = (-1.0) ** np.arange(n_cut + 1)
    np.testing.assert_allclose(b.amplitudes, signs * a.amplitudes, atol=1e-12)


def test_cat_params_validation():
    with pytest.raises(ParameterError):
        cs.CatParams(alpha=1.0, parity="mixed", rep=hb.Fock(10))
    with pytest.raises(RepresentationError):
        # |alpha|^2 = 4 > N/4 = 2.5
        cs.CatParams(alpha=2.0, parity="even", rep=hb.Dicke(10, 8))


def test_dicke_cat_uses_spin_coherent_superposition():
    n_atoms = 100
    p = cs.CatParams(alpha=1j, parity="even", rep=hb.Dicke(n_atoms, 20))
    psi = cs.cat_state(p)
    theta = 2.0 * np.arctan(1.0 / np.sqrt(n_atoms))
    up = cs.spin_coherent(n_atoms, theta, np.pi / 2, 20).amplitudes
    dn = cs.spin_coherent(n_atoms, theta, np.pi / 2 + np.pi, 20).amplitudes
    sup = up + dn
    sup = sup / np.linalg.norm(sup)
    assert abs(np.vdot(sup, psi.amplitudes)) == pytest.approx(1.0, abs=1e-10)


def test_manifold_coeffs_vacuum_start():
    # c_pp = (1 + exp(-2|alpha0|^2)) / 2 at alpha0 = alpha limit alpha0 -> 0:
    # vacuum has even parity only
    alpha = 1.4j
    c = cs.manifold_coeffs(alpha, 0.0)
    assert c.c_pp == pytest.approx(1.0, abs=1e-10)
    assert c.c_mm == pytest.approx(0.0, abs=1e-10)


def test_manifold_coeffs_coherent_start():
    # |alpha0|^2 = 1 seed: even weight (1 + e^-2)/2 = 0.5677
    c = cs.manifold_coeffs(1j, 1j)
    assert c.c_pp == pytest.approx(0.5677, abs=5e-5)
    assert c.c_pp == pytest.approx((1.0 + np.exp(-2.0)) / 2.0, rel=1e-10)
    assert c.c_pp + c.c_mm == pytest.approx(1.0, abs=1e-12)


def test_manifold_coeffs_populations_sum_guard():
    with pytest.raises(CoefficientConsistencyError):
        cs.ManifoldCoeffs(c_pp=0.7, c_mm=0.2, c_pm=0.0)


def test_manifold_state_is_liouvillian_fixed_point():
    # ||L rho_ss||_F < 1e-6 kappa_2at for the two-photon stabilizer
    from catsim.analysis import liouvillian_matrix

    p = md.standard_params(100, alpha_sq=2.0, kappa_s_over_kappa_p=0.0)
    rates = md.derive_rates(p)
    model = md.build_effective_model(p, hb.Fock(30))
    rho = cs.manifold_state(rates.alpha, 1.0, hb.Fock(30))
    lmat = liouvillian_matrix(model, max_dim=40)
    resid = np.linalg.norm(lmat @ rho.entries.reshape(-1))
    assert resid < 1e-6 * rates.kappa_2at
    assert rho.trace.real == pytest.approx(1.0, abs=1e-10)


def test_manifold_state_matches_coeff_weights():
    alpha, alpha0 = 1.2j, 0.9j
    rho = cs.manifold_state(alpha, alpha0, hb.Fock(35))
    c = cs.manifold_coeffs(alpha, alpha0)
    even = cs.cat_state(cs.CatParams(alpha=alpha, parity="even", rep=hb.Fock(35)))
    odd = cs.cat_state(cs.CatParams(alpha=alpha, parity="odd", rep=hb.Fock(35)))
    assert fidelity(rho, even) ** 2 == pytest.approx(c.c_pp, abs=1e-8)
    assert fidelity(rho, odd) ** 2 == pytest.approx(c.c_mm, abs=1e-8)


def test_manifold_coeffs_match_steady_state_weights():
    # cross-check of the quadrature route against direct evolution comes in
    # the dynamics suite; here the closed forms for the diagonal weights
    a2 = 1.0
    c = cs.manifold_coeffs(1j * np.sqrt(a2), 1j * np.sqrt(a2))
    num = 1.0 + np.exp(-2.0 * a2)
    assert c.c_pp == pytest.approx(num / 2.0, rel=1e-12)
