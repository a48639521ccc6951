import json
import warnings

import numpy as np
import pytest

from wdeloc.dynamics import (
    BathSpec,
    K_B_CM,
    PRESETS,
    SiteHamiltonian,
    build_dissipator,
    config_from_dict,
    ek_series,
    ek_trajectory,
    gibbs_populations,
    lindblad_operators,
    load_config,
    propagate,
    rate_gamma,
    rate_gamma_cm,
    ring_hamiltonian,
    run_config,
    spectral_density,
    thermal_occupation,
    trajectory_table,
)
from wdeloc.errors import (
    ConfigError,
    DegenerateBasisWarning,
    NegativeFrequency,
    PositivityViolation,
    ZeroFrequency,
)
from wdeloc.measures import tau_max
from wdeloc.sxstate import from_pure, save_state, w_state

from conftest import random_state

BATH = BathSpec()
W6 = np.asarray(from_pure(w_state(6)))


@pytest.fixture(scope="module")
def ring():
    H = ring_hamiltonian()
    dec = lindblad_operators(H)
    return H, dec, build_dissipator(dec, BATH)


def test_ring_entries():
    m = ring_hamiltonian().matrix
    assert m[0, 0] == 12500 and m[1, 1] == 12000
    assert m[0, 5] == 300 and m[5, 0] == 300
    assert m[0, 2] == 0
    assert np.array_equal(m, m.T)


def test_hamiltonian_must_be_symmetric():
    with pytest.raises(ValueError):
        SiteHamiltonian(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_bath_must_be_positive():
    with pytest.raises(ValueError):
        BathSpec(cutoff=0.0)


def test_spectral_density():
    assert spectral_density(0.0, BATH) == 0.0
    assert spectral_density(BATH.cutoff, BATH) == pytest.approx(BATH.reorganization_energy / np.pi)
    w = 100 * BATH.cutoff
    tail = 2 * BATH.reorganization_energy * BATH.cutoff / (np.pi * w)
    assert spectral_density(w, BATH) == pytest.approx(tail, rel=1e-2)
    grid = np.linspace(0, 1000, 2001)
    assert grid[np.argmax(spectral_density(grid, BATH))] == pytest.approx(BATH.cutoff)
    with pytest.raises(NegativeFrequency):
        spectral_density(-1.0, BATH)


def test_thermal_occupation():
    kT = K_B_CM * 77
    w = 1e-3 * kT
    assert thermal_occupation(w, 77) == pytest.approx(kT / w - 0.5, rel=1e-4)
    assert thermal_occupation(50 * kT, 77) < 1e-20
    ws = np.random.default_rng(0).uniform(1, 2000, 100)
    assert np.allclose(thermal_occupation(-ws, 77), -(thermal_occupation(ws, 77) + 1), rtol=1e-12)
    with pytest.raises(ZeroFrequency):
        thermal_occupation(0.0, 77)


def test_rate_detailed_balance():
    w = np.linspace(1.0, 1500.0, 50)
    ratio = rate_gamma(w, BATH) / rate_gamma(-w, BATH)
    assert np.allclose(ratio, np.exp(w * BATH.beta), rtol=1e-10)
    assert np.all(rate_gamma(np.linspace(-2000, 2000, 401), BATH) >= 0)


def test_rate_zero_limit():
    g0 = rate_gamma_cm(0.0, BATH)
    assert g0 == pytest.approx(2 * np.pi * 2 * BATH.reorganization_energy / (np.pi * BATH.cutoff)
                               * BATH.kT, rel=1e-15)
    eps = 1e-7
    approx = 0.5 * (rate_gamma_cm(eps, BATH) + rate_gamma_cm(-eps, BATH))
    assert approx == pytest.approx(g0, rel=1e-10)


def test_decomposition(ring):
    _, dec, _ = ring
    U = dec.coefficients
    assert np.abs(U.conj().T @ U - np.eye(6)).max() <= 1e-10
    assert np.all(np.diff(dec.energies) >= 0)
    assert set((k, k) for k in range(6)) <= set(dec.gap_groups[0.0])
    positive = [w for w in dec.gap_groups if w > 0]
    assert len(positive) <= 15
    for w, A in dec.operators.items():
        assert np.allclose(np.conj(np.swapaxes(A, 1, 2)), dec.operators[-w if w else 0.0])


def test_ring_spectrum(ring):
    _, dec, _ = ring
    # alternating two-site unit cell: 12250 +- sqrt(250^2 + (600 cos q)^2), q = 0, +-pi/3
    a = np.sqrt(250.0**2 + 600.0**2)
    b = np.sqrt(250.0**2 + 300.0**2)
    expected = [12250 - a, 12250 - b, 12250 - b, 12250 + b, 12250 + b, 12250 + a]
    assert np.allclose(dec.energies, expected, atol=1e-9)


def test_operators_sum_to_site_projector(ring):
    _, dec, _ = ring
    for n in range(6):
        total = sum(dec.operators[w][n] for w in dec.operators)
        assert np.allclose(dec.to_site(total), np.diag(np.eye(6)[n]), atol=1e-12)


def test_merged_gaps_warn():
    with pytest.warns(DegenerateBasisWarning):
        lindblad_operators(ring_hamiltonian(), gap_tol=300.0)


def test_default_grouping_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        lindblad_operators(ring_hamiltonian())


def test_dissipator_trace_free(ring, rng):
    _, _, D = ring
    for _ in range(100):
        out = D(random_state(rng, 6))
        assert abs(np.trace(out)) <= 1e-12


def test_gibbs_state_is_stationary(ring):
    _, dec, D = ring
    g = np.diag(gibbs_populations(dec.energies, BATH.temperature))
    assert np.abs(D.apply_exciton(g)).max() <= 1e-10


def test_cross_site_terms_matter(ring, rng):
    _, dec, D = ring
    literal = build_dissipator(dec, BATH, correlation="literal")
    rho = random_state(rng, 6)
    assert np.abs(literal(rho) - D(rho)).max() > 1e-3
    # with equal rates on every site pair the operators sum to the identity
    assert np.abs(literal.superop).max() <= 1e-12


def test_correlation_matrix_validation(ring):
    _, dec, _ = ring
    with pytest.raises(ValueError):
        build_dissipator(dec, BATH, correlation=np.eye(3))
    with pytest.raises(ValueError):
        build_dissipator(dec, BATH, correlation="shared")


def test_coherent_eigenstate_is_stationary(ring):
    H, dec, _ = ring
    v = dec.coefficients[:, 2]
    rho0 = np.outer(v, v)
    traj = propagate(rho0, H, None, 1.0, 500, stride=50)
    assert np.abs(traj.rhos - rho0).max() <= 1e-10


def test_coherent_purity_conserved(ring):
    H, _, _ = ring
    traj = propagate(W6, H, None, 1.0, 10_000, stride=100)
    assert np.abs(traj.purity - 1).max() <= 1e-9


@pytest.fixture(scope="module")
def long_run(ring):
    H, _, D = ring
    return propagate(W6, H, D, 1.0, 10_000, stride=10)


def test_trajectory_invariants(long_run):
    assert long_run.trace_error.max() <= 1e-9
    assert long_run.min_eigenvalue.min() >= -1e-8
    assert long_run.hermiticity_error.max() <= 1e-12
    assert len(long_run.states) == long_run.times.size == 1001


def test_relaxes_to_boltzmann(long_run):
    dec = long_run.decomposition
    expected = gibbs_populations(dec.energies, BATH.temperature)
    got = long_run.exciton_populations()[-1]
    assert np.abs(got / expected - 1).max() <= 1e-6


def test_ek_trajectory_normalization(long_run):
    t, E = ek_trajectory(long_run)
    assert E.shape == (t.size, 5)
    assert np.allclose(E[0], 1.0, atol=1e-12)
    assert np.all(E[-1] > 0)
    consts = [tau_max(6, k) for k in range(2, 7)]
    assert np.allclose(consts, [5 / 6, 5 / 9, 5 / 18, 5 / 54, 5 / 324], rtol=1e-15)


def test_ek_of_diagonal_snapshots(rng):
    pops = rng.dirichlet(np.ones(6), size=20)
    rhos = np.zeros((20, 6, 6))
    rhos[:, np.arange(6), np.arange(6)] = pops
    assert np.abs(ek_series(rhos)).max() <= 1e-12


def test_profiles_match_series(long_run):
    prof = long_run.profiles()[-1]
    direct = [prof.e[k] / tau_max(6, k) for k in range(2, 7)]
    assert np.allclose(direct, ek_series(long_run.rhos[-1:])[0], atol=1e-10)


def test_zero_coupling_keeps_eigenstate_measures(ring):
    H, dec, _ = ring
    D0 = build_dissipator(dec, BATH, coupling_scale=0.0)
    v = dec.coefficients[:, 0]
    traj = propagate(np.outer(v, v), H, D0, 1.0, 2000, stride=20)
    _, E = ek_trajectory(traj)
    assert np.abs(E - E[0]).max() <= 1e-10


@pytest.mark.parametrize("method", ["ifrk4", "rk4"])
def test_fourth_order_convergence(ring, method):
    H, dec, D = ring
    T = 64.0

    def final(dt):
        steps = int(round(T / dt))
        return propagate(W6, H, D, dt, steps, stride=steps, method=method).rhos[-1]

    dt = 2.0
    ref = final(dt / 8)
    e1 = np.abs(final(dt) - ref).max()
    e2 = np.abs(final(dt / 2) - ref).max()
    # against a dt/8 reference the ratio carries a small bias; 2^4 within 20%
    assert 16 * 0.8 <= e1 / e2 <= 16 * 1.2


def test_expm_cross_check(ring):
    H, _, D = ring
    a = propagate(W6, H, D, 1.0, 200, stride=200).rhos[-1]
    b = propagate(W6, H, D, 1.0, 200, stride=200, method="expm").rhos[-1]
    assert np.abs(a - b).max() <= 1e-8


def test_large_step_reports_positivity(ring):
    H, _, D = ring
    with pytest.raises(PositivityViolation) as info:
        propagate(W6, H, D, 40.0, 100, method="rk4")
    assert info.value.time == 40.0


def test_propagate_arguments(ring):
    H, _, D = ring
    with pytest.raises(ValueError):
        propagate(W6, H, D, 0.0, 10)
    with pytest.raises(ValueError):
        propagate(W6, H, D, 1.0, 10, stride=0)
    with pytest.raises(ValueError):
        propagate(W6, H, D, 1.0, 10, method="euler")


def test_preset_matches_defaults():
    cfg = load_config("ring6")
    assert cfg is PRESETS["ring6"]
    assert (cfg.E_r, cfg.omega_c, cfg.T, cfg.dt) == (300.0, 150.0, 77.0, 1.0)
    assert cfg.initial_state == "W6"


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"omega_c": 60, "steps": 20, "stride": 5}))
    cfg = load_config(path)
    assert cfg.omega_c == 60.0 and cfg.steps == 20
    header, rows = trajectory_table(run_config(cfg))
    assert header == ["t_fs", "E2", "E3", "E4", "E5", "E6", "purity", "trace_error"]
    assert rows.shape == (5, 8)
    assert np.allclose(rows[0, 1:6], 1.0)


def test_config_state_file_and_exciton(tmp_path):
    save_state(from_pure(w_state(6, [0, 1])), tmp_path / "pair.json")
    cfg = config_from_dict({"initial_state": "pair.json", "steps": 2})
    traj = run_config(cfg, base_dir=tmp_path)
    assert traj.rhos[0, 0, 1] == pytest.approx(0.5)
    traj = run_config(config_from_dict({"initial_state": "exciton:0", "steps": 2}))
    assert traj.exciton_rhos[0, 0, 0] == pytest.approx(1.0)


@pytest.mark.parametrize("bad", [
    {"omega_c": -1},
    {"steps": 1.5},
    {"stride": 0},
    {"method": "euler"},
    {"hamiltonian": "ring7"},
    {"hamiltonian": [[1, 2], [3, 4]]},
    {"colour": "blue"},
    {"T": True},
    {"initial_state": 6},
    {"initial_state": "exciton:9"},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        run_config(config_from_dict({"steps": 1, **bad}))


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ConfigError):
        load_config(broken)
