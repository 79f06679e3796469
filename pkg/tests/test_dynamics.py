"""Master-equation integration, jump unraveling, steady states."""

import numpy as np
import pytest
import scipy.stats

from catsim import catstates as cs
from catsim import dynamics as dy
from catsim import hilbert as hb
from catsim import models as md
from catsim.analysis import fidelity
from catsim.errors import (
    AssemblyError,
    ConvergenceError,
    DegenerateSpectrumError,
    ParameterError,
)


def _decay_model(kappa: float, n_max: int = 1) -> md.ModelSpec:
    sd = hb.space(hb.Fock(n_max))
    h = hb.LinOp(sd, np.zeros((sd.total_dim, sd.total_dim)), hermitian=True)
    return md.ModelSpec(space=sd, hamiltonian=h,
                        dissipators=((kappa, hb.fock_destroy(n_max)),))


def _effective(alpha_sq: float, n_max: int):
    p = md.standard_params(100, alpha_sq=alpha_sq, kappa_s_over_kappa_p=0.0)
    return md.build_effective_model(p, hb.Fock(n_max)), md.derive_rates(p)


def test_master_coherent_state_decay():
    # H = 0, single loss channel: <a>(t) = alpha e^(-kappa t / 2)
    kappa, alpha = 0.8, 0.9 + 0.4j
    model = _decay_model(kappa, n_max=25)
    rho0 = cs.coherent_state(alpha, 25).to_density()
    times = np.linspace(0.0, 4.0, 9)
    cfg = dy.IntegratorConfig(store_times=times, rel_tol=1e-10, abs_tol=1e-12)
    rec = dy.evolve_master(model, rho0, cfg,
                           observables={"a": hb.fock_destroy(25)})
    expected = alpha * np.exp(-kappa * times / 2.0)
    np.testing.assert_allclose(rec.observables["a"], expected, rtol=1e-5)
    assert rec.states is None  # observables requested, states skipped
    assert rec.trace_drift.max() < 1e-6


def test_master_parity_conservation():
    model, rates = _effective(1.0, 14)
    times = np.linspace(0.0, 20.0 / rates.kappa_2at, 11)
    cfg = dy.IntegratorConfig(store_times=times)
    rho0 = hb.basis_ket(model.space, (0,)).to_density()
    rec = dy.evolve_master(model, rho0, cfg,
                           observables={"parity": hb.parity_diagonal(model.space)})
    np.testing.assert_allclose(rec.observables["parity"].real, 1.0, atol=1e-6)


def test_master_vacuum_reaches_even_cat():
    # fidelity to |C+> above 0.99 by t = 20 / kappa_2at
    model, rates = _effective(1.0, 16)
    times = (0.0, 20.0 / rates.kappa_2at)
    cfg = dy.IntegratorConfig(store_times=times)
    rho0 = hb.basis_ket(model.space, (0,)).to_density()
    rec = dy.evolve_master(model, rho0, cfg)
    cat = cs.cat_state(cs.CatParams(alpha=rates.alpha, parity="even",
                                    rep=hb.Fock(16)))
    assert fidelity(rec.states[-1], cat) > 0.99


def test_master_state_invariants():
    model, rates = _effective(2.0, 16)
    times = np.linspace(0.0, 10.0 / rates.kappa_2at, 6)
    cfg = dy.IntegratorConfig(store_times=times)
    rho0 = cs.coherent_state(1.0, 16).to_density()
    rec = dy.evolve_master(model, rho0, cfg)
    for state in rec.states:
        m = state.entries
        assert np.abs(m - m.conj().T).max() < 1e-8
        eigs = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
        assert eigs.min() > -1e-6
    assert rec.trace_drift.max() < 1e-6


def test_master_rk4_matches_adaptive():
    model, rates = _effective(1.0, 10)
    times = np.linspace(0.0, 2.0 / rates.kappa_2at, 5)
    rho0 = hb.basis_ket(model.space, (0,)).to_density()
    rec_a = dy.evolve_master(model, rho0,
                             dy.IntegratorConfig(store_times=times,
                                                 rel_tol=1e-10, abs_tol=1e-12))
    rec_f = dy.evolve_master(model, rho0,
                             dy.IntegratorConfig(store_times=times, method="rk4",
                                                 max_step=0.5 / rates.kappa_2at / 200))
    for a, f in zip(rec_a.states, rec_f.states):
        assert np.abs(a.entries - f.entries).max() < 1e-6


def test_integrator_config_validation():
    with pytest.raises(ParameterError):
        dy.IntegratorConfig(store_times=())
    with pytest.raises(ParameterError):
        dy.IntegratorConfig(store_times=(0.0, 0.0))
    with pytest.raises(ParameterError):
        dy.IntegratorConfig(store_times=(-1.0, 1.0))
    with pytest.raises(ParameterError):
        dy.IntegratorConfig(store_times=(0.0, 1.0), method="euler")
    with pytest.raises(ParameterError):
        dy.IntegratorConfig(store_times=(0.0, 1.0), method="rk4")  # no max_step
    with pytest.raises(ParameterError):
        dy.IntegratorConfig(store_times=(0.0, 1.0), rel_tol=0.0)


def test_master_space_mismatch():
    model = _decay_model(1.0)
    rho0 = hb.basis_ket(hb.space(hb.Fock(2)), (0,)).to_density()
    with pytest.raises(AssemblyError):
        dy.evolve_master(model, rho0, dy.IntegratorConfig(store_times=(0.0, 1.0)))


def test_trajectory_without_dissipators_is_unitary():
    # two-level Rabi flop: p_1(t) = sin^2(t)
    sd = hb.space(hb.Fock(1))
    h = hb.LinOp(sd, np.array([[0.0, 1.0], [1.0, 0.0]]), hermitian=True)
    model = md.ModelSpec(space=sd, hamiltonian=h, dissipators=())
    times = np.linspace(0.0, 3.0, 13)
    cfg = dy.IntegratorConfig(store_times=times, rel_tol=1e-10, abs_tol=1e-12)
    rec = dy.evolve_trajectory(model, hb.basis_ket(sd, (0,)), cfg, seed=5)
    assert rec.jump_events == ()
    p1 = np.array([abs(k.amplitudes[1]) ** 2 for k in rec.kets])
    np.testing.assert_allclose(p1, np.sin(times) ** 2, atol=1e-7)


def test_trajectory_requires_normalized_state():
    model = _decay_model(1.0)
    bad = hb.Ket(model.space, np.array([2.0, 0.0]))
    cfg = dy.IntegratorConfig(store_times=(0.0, 1.0))
    with pytest.raises(ParameterError):
        dy.evolve_trajectory(model, bad, cfg, seed=0)


def test_trajectory_seed_reproducibility():
    model, rates = _effective(1.0, 10)
    psi0 = hb.basis_ket(model.space, (0,))
    times = np.linspace(0.0, 5.0 / rates.kappa_2at, 21)
    cfg = dy.IntegratorConfig(store_times=times)
    rec1 = dy.evolve_trajectory(model, psi0, cfg, seed=42)
    rec2 = dy.evolve_trajectory(model, psi0, cfg, seed=42)
    assert rec1.jump_events == rec2.jump_events
    for k1, k2 in zip(rec1.kets, rec2.kets):
        np.testing.assert_array_equal(k1.amplitudes, k2.amplitudes)
    rec3 = dy.evolve_trajectory(model, psi0, cfg, seed=43)
    assert rec3.jump_events != rec1.jump_events


def test_jump_waiting_times_are_exponential():
    # single decay channel from |1>: the squared norm is exp(-kappa t), so
    # each waiting time must equal -ln(r)/kappa for that seed's first draw;
    # the ensemble over seeds is exponential with mean 1/kappa
    kappa = 1.3
    model = _decay_model(kappa)
    psi1 = hb.basis_ket(model.space, (1,))
    cfg = dy.IntegratorConfig(store_times=(0.0, 15.0 / kappa))
    n_samples = 10000
    waits = np.empty(n_samples)
    for s in range(n_samples):
        rec = dy.evolve_trajectory(model, psi1, cfg, seed=s)
        assert len(rec.jump_events) == 1
        waits[s] = rec.jump_events[0][0]
    predicted = np.array([-np.log(np.random.default_rng(s).random()) / kappa
                          for s in range(n_samples)])
    assert np.abs(waits - predicted).max() < 1e-6
    ks = scipy.stats.kstest(waits, "expon", args=(0.0, 1.0 / kappa))
    assert ks.pvalue > 0.01


def test_choose_channel_degenerate_guard():
    # b^2 annihilates |1>, so a forced jump there has no channel to take
    sd = hb.space(hb.Fock(4))
    b = hb.fock_destroy(4)
    model = md.ModelSpec(space=sd,
                         hamiltonian=hb.LinOp(sd, np.zeros((5, 5)), hermitian=True),
                         dissipators=((1.0, b @ b),))
    psi = hb.basis_ket(sd, (1,)).amplitudes
    rng = np.random.default_rng(0)
    with pytest.raises(DegenerateSpectrumError):
        dy._choose_channel(rng, model, psi)


def test_two_channel_branching_fractions():
    # channels kappa_a (to |0>) and kappa_b = 3 kappa_a: branching 1:3
    sd = hb.space(hb.Fock(1))
    h = hb.LinOp(sd, np.zeros((2, 2)), hermitian=True)
    a = hb.fock_destroy(1)
    model = md.ModelSpec(space=sd, hamiltonian=h,
                         dissipators=((0.25, a), (0.75, a)))
    psi1 = hb.basis_ket(sd, (1,))
    cfg = dy.IntegratorConfig(store_times=(0.0, 40.0))
    counts = [0, 0]
    n = 2000
    for s in range(n):
        rec = dy.evolve_trajectory(model, psi1, cfg, seed=s)
        counts[rec.jump_events[0][1]] += 1
    frac = counts[1] / n
    assert abs(frac - 0.75) < 4.0 * np.sqrt(0.75 * 0.25 / n)


def test_trajectory_rk4_jump_bisection():
    # fixed-step unraveling locates the same jump times as the adaptive one
    kappa = 0.9
    model = _decay_model(kappa)
    psi1 = hb.basis_ket(model.space, (1,))
    times = (0.0, 10.0)
    for seed in (1, 2, 3):
        ad = dy.evolve_trajectory(
            model, psi1, dy.IntegratorConfig(store_times=times), seed=seed)
        fx = dy.evolve_trajectory(
            model, psi1, dy.IntegratorConfig(store_times=times, method="rk4",
                                             max_step=0.005), seed=seed)
        assert len(ad.jump_events) == len(fx.jump_events) == 1
        assert fx.jump_events[0][0] == pytest.approx(ad.jump_events[0][0], abs=1e-4)


def test_expectation_series_kinds():
    model, rates = _effective(1.0, 10)
    psi0 = hb.basis_ket(model.space, (0,))
    cfg = dy.IntegratorConfig(store_times=np.linspace(0.0, 1.0 / rates.kappa_2at, 5))
    rec = dy.evolve_trajectory(model, psi0, cfg, seed=1)
    series = dy.expectation_series(
        rec, {"n": hb.fock_number(10), "p0": hb.basis_ket(model.space, (0,))})
    assert series["p0"][0] == pytest.approx(1.0)
    assert series["n"][0] == pytest.approx(0.0, abs=1e-12)
    assert series["n"].shape == (5,)
    with pytest.raises(ParameterError):
        dy.expectation_series(rec, {"bad": np.eye(11)})


def test_average_single_trajectory_equivalence():
    model, rates = _effective(1.0, 10)
    psi0 = hb.basis_ket(model.space, (0,))
    cfg = dy.IntegratorConfig(store_times=np.linspace(0.0, 2.0 / rates.kappa_2at, 7))
    obs = {"n": hb.fock_number(10)}
    rec_one = dy.evolve_trajectory(model, psi0, cfg, seed=11)
    single = dy.expectation_series(rec_one, obs)
    avg = dy.average_trajectories(model, psi0, cfg, n_traj=1, seed0=11,
                                  observables=obs)
    np.testing.assert_allclose(avg.observables["n"], single["n"], atol=1e-12)
    np.testing.assert_array_equal(avg.stderr["n"], 0.0)
    with pytest.raises(ParameterError):
        dy.average_trajectories(model, psi0, cfg, n_traj=0, seed0=0,
                                observables=obs)


def test_average_dissipation_free_zero_variance():
    sd = hb.space(hb.Fock(1))
    h = hb.LinOp(sd, np.array([[0.0, 1.0], [1.0, 0.0]]), hermitian=True)
    model = md.ModelSpec(space=sd, hamiltonian=h, dissipators=())
    cfg = dy.IntegratorConfig(store_times=np.linspace(0.0, 2.0, 5))
    avg = dy.average_trajectories(model, hb.basis_ket(sd, (0,)), cfg,
                                  n_traj=8, seed0=0,
                                  observables={"n": hb.fock_number(1)})
    assert avg.stderr["n"].max() < 1e-9


def test_average_matches_master_three_sigma():
    # 500 trajectories of the stabilized bosonic model against the master
    # equation, every stored time within 3 ensemble standard errors
    model, rates = _effective(1.0, 12)
    psi0 = hb.basis_ket(model.space, (0,))
    times = np.linspace(0.0, 6.0 / rates.kappa_2at, 13)
    cfg = dy.IntegratorConfig(store_times=times)
    obs = {"n": hb.fock_number(12)}
    avg = dy.average_trajectories(model, psi0, cfg, n_traj=500, seed0=1000,
                                  observables=obs)
    exact = dy.evolve_master(model, psi0.to_density(),
                             dy.IntegratorConfig(store_times=times,
                                                 rel_tol=1e-10, abs_tol=1e-12),
                             observables=obs)
    diff = np.abs(avg.observables["n"].real - exact.observables["n"].real)
    sigma = np.maximum(avg.stderr["n"].real, 1e-12)
    assert float((diff / sigma)[1:].max()) < 3.0


def test_average_worker_pool_reduction_is_order_independent(monkeypatch):
    model, rates = _effective(1.0, 8)
    psi0 = hb.basis_ket(model.space, (0,))
    cfg = dy.IntegratorConfig(store_times=np.linspace(0.0, 1.0 / rates.kappa_2at, 4))
    obs = {"n": hb.fock_number(8)}
    serial = dy.average_trajectories(model, psi0, cfg, n_traj=6, seed0=3,
                                     observables=obs)
    monkeypatch.setenv("CATSIM_WORKERS", "2")
    pooled = dy.average_trajectories(model, psi0, cfg, n_traj=6, seed0=3,
                                     observables=obs)
    np.testing.assert_array_equal(serial.observables["n"], pooled.observables["n"])


def test_steady_state_pure_decay():
    model = _decay_model(1.0, n_max=3)
    rho0 = hb.basis_ket(model.space, (1,)).to_density()
    ss = dy.steady_state(model, rho0, residual_tol=1e-9)
    vac = np.zeros((4, 4))
    vac[0, 0] = 1.0
    np.testing.assert_allclose(ss.entries, vac, atol=1e-6)


def test_steady_state_single_photon_gives_odd_cat():
    model, rates = _effective(1.0, 16)
    rho0 = hb.basis_ket(model.space, (1,)).to_density()
    ss = dy.steady_state(model, rho0, residual_tol=1e-9)
    odd = cs.cat_state(cs.CatParams(alpha=rates.alpha, parity="odd",
                                    rep=hb.Fock(16)))
    assert fidelity(ss, odd) > 0.999


def test_steady_state_coherent_seed_matches_manifold_coeffs():
    model, rates = _effective(1.0, 18)
    alpha0 = 0.8j
    rho0 = cs.coherent_state(alpha0, 18).to_density()
    ss = dy.steady_state(model, rho0, residual_tol=1e-9)
    coeffs = cs.manifold_coeffs(rates.alpha, alpha0)
    for parity, target in (("even", coeffs.c_pp), ("odd", coeffs.c_mm)):
        cat = cs.cat_state(cs.CatParams(alpha=rates.alpha, parity=parity,
                                        rep=hb.Fock(18)))
        pop = float(np.real(cat.to_density().entries.conj().ravel()
                            @ ss.entries.ravel()))
        assert pop == pytest.approx(target, abs=1e-3)


def test_steady_state_guards():
    model = _decay_model(1.0)
    rho0 = hb.basis_ket(model.space, (1,)).to_density()
    with pytest.raises(ParameterError):
        dy.steady_state(model, rho0, residual_tol=0.0)
    # a dissipation-free rotation never converges to a fixed point
    sd = hb.space(hb.Fock(1))
    h = hb.LinOp(sd, np.array([[0.0, 1.0], [1.0, 0.0]]), hermitian=True)
    spin = md.ModelSpec(space=sd, hamiltonian=h, dissipators=())
    with pytest.raises(ConvergenceError):
        dy.steady_state(spin, hb.basis_ket(sd, (0,)).to_density(),
                        residual_tol=1e-12, max_chunks=4)


def test_evolution_record_to_csv(tmp_path):
    model, rates = _effective(1.0, 8)
    times = np.linspace(0.0, 1.0 / rates.kappa_2at, 4)
    rec = dy.evolve_master(model, hb.basis_ket(model.space, (0,)).to_density(),
                           dy.IntegratorConfig(store_times=times),
                           observables={"n": hb.fock_number(8),
                                        "a": hb.fock_destroy(8)})
    path = tmp_path / "series.csv"
    rec.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header[0] == "time"
    assert "n" in header
    assert "population_leak" in header and "trace_drift" in header
    data = np.genfromtxt(path, delimiter=",", names=True)
    assert data.shape == (4,)
