import numpy as np
import pytest

from fdtemu.dataio import ChannelSpec, state_indices
from fdtemu.errors import ValidationError
from fdtemu.grid import build_icosphere
from fdtemu.synth import (
    LinearTruthSystem,
    analytic_response,
    analytic_state_response,
    embed_forcing,
    load_system,
    make_truth_system,
    save_system,
    simulate,
    spectral_radius_power,
)
from util import io_channels

CH = io_channels()


def _system(level=0, rho=0.8, tele=0.4, seed=0, **kw):
    return make_truth_system(level, CH, rho, tele, seed, **kw)


def test_spectral_radius_matches_target():
    for rho in (0.5, 0.9):
        system = _system(rho=rho)
        assert abs(spectral_radius_power(system.propagator) - rho) < 1e-6
        assert abs(np.max(np.abs(np.linalg.eigvals(system.propagator))) - rho) < 1e-3


def test_zero_teleconnection_sparsity():
    system = _system(tele=0.0)
    mesh = build_icosphere(0)
    c = 2
    allowed = np.zeros_like(system.propagator, dtype=bool)
    np.fill_diagonal(allowed, True)
    for i, j in mesh.edges:
        for p in range(c):
            allowed[i * c + p, j * c + p] = True
            allowed[j * c + p, i * c + p] = True
    assert np.all(system.propagator[~allowed] == 0.0)
    assert np.any(system.propagator[allowed] != 0.0)


def test_construction_determinism():
    a = _system(seed=7)
    b = _system(seed=7)
    np.testing.assert_array_equal(a.propagator, b.propagator)
    np.testing.assert_array_equal(a.noise_cov, b.noise_cov)
    c = _system(seed=8)
    assert not np.array_equal(a.propagator, c.propagator)


def test_rho_out_of_range_rejected():
    with pytest.raises(ValidationError):
        _system(rho=1.0)
    with pytest.raises(ValidationError):
        _system(rho=0.0)


def test_noise_cov_is_spd():
    system = _system(noise_scale=(1.0, 0.35))
    np.linalg.cholesky(system.noise_cov)
    np.testing.assert_array_equal(system.noise_cov, system.noise_cov.T)


def test_simulate_white_noise_when_a_zero():
    base = _system()
    d = base.state_dim
    system = LinearTruthSystem(
        mesh_level=0, channels=CH, propagator=np.zeros((d, d)),
        noise_cov=np.eye(d), seed=0, spectral_radius=0.0, params={},
    )
    data = simulate(system, members=2, months=20000, burn_in=10, seed=3,
                    seasonal_amplitude=0.0)
    z = data.values.reshape(2, 20000, d).astype(np.float64)
    z -= z.mean(axis=(0, 1))
    lag1 = sum(z[i, 1:].T @ z[i, :-1] for i in range(2)) / (2 * 19999)
    assert np.max(np.abs(lag1)) < 5.0 / np.sqrt(2 * 19999)


@pytest.fixture(scope="module")
def big_run():
    system = _system(noise_scale=(1.0, 0.35))
    data = simulate(system, members=4, months=50000, burn_in=200, seed=11,
                    seasonal_amplitude=0.0)
    z = data.values.reshape(4, 50000, system.state_dim).astype(np.float64)
    z -= z.mean(axis=(0, 1))
    return system, z


def test_stationary_covariance_satisfies_lyapunov(big_run):
    system, z = big_run
    m, t, d = z.shape
    c0 = sum(z[i].T @ z[i] for i in range(m)) / (m * t)
    a = system.propagator
    residual = c0 - a @ c0 @ a.T - system.noise_cov
    assert np.linalg.norm(residual) / np.linalg.norm(c0) < 0.1


def test_lag1_regression_recovers_propagator(big_run):
    system, z = big_run
    m, t, d = z.shape
    c0 = sum(z[i].T @ z[i] for i in range(m)) / (m * t)
    c1 = sum(z[i, 1:].T @ z[i, :-1] for i in range(m)) / (m * (t - 1))
    a_hat = c1 @ np.linalg.inv(c0)
    err = np.linalg.norm(a_hat - system.propagator) / np.linalg.norm(system.propagator)
    assert err < 0.1


def test_stationarity_of_halves(big_run):
    system, z = big_run
    t = z.shape[1]
    first = z[:, : t // 2].mean(axis=(0, 1))
    second = z[:, t // 2:].mean(axis=(0, 1))
    std = z.std(axis=(0, 1))
    # AR-style inflation of the standard error of the mean at rho = 0.8
    rho = system.spectral_radius
    inflate = np.sqrt((1.0 + rho) / (1.0 - rho))
    se = std * np.sqrt(2.0 / (z.shape[0] * (t // 2))) * inflate
    assert np.max(np.abs(first - second) / se) < 5.0


def test_simulate_member_order_independent():
    system = _system()
    a = simulate(system, members=3, months=30, burn_in=20, seed=9)
    b = simulate(system, members=2, months=30, burn_in=20, seed=9)
    np.testing.assert_array_equal(a.values[:2], b.values)


def test_seasonal_cycle_shared_across_members():
    system = _system()
    data = simulate(system, members=3, months=24, burn_in=20, seed=1,
                    seasonal_amplitude=50.0)
    # the cycle dwarfs the noise, so all members nearly coincide
    spread = data.values.std(axis=0).max()
    assert spread < 10.0
    level = np.abs(data.values).max()
    assert level > 30.0


def test_analytic_response_zero_and_diagonal_propagator():
    base = _system()
    d = base.state_dim
    n = base.n_nodes
    forcing = np.zeros((n, 1))
    forcing[3, 0] = 2.0

    zero_sys = LinearTruthSystem(
        mesh_level=0, channels=CH, propagator=np.zeros((d, d)),
        noise_cov=np.eye(d), seed=0, spectral_radius=0.0, params={},
    )
    state = analytic_state_response(zero_sys, forcing)
    np.testing.assert_array_equal(state[:, 0], forcing[:, 0])
    np.testing.assert_array_equal(state[:, 1], 0.0)
    np.testing.assert_array_equal(analytic_response(zero_sys, forcing), 0.0)

    half_sys = LinearTruthSystem(
        mesh_level=0, channels=CH, propagator=0.5 * np.eye(d),
        noise_cov=np.eye(d), seed=0, spectral_radius=0.5, params={},
    )
    state = analytic_state_response(half_sys, forcing)
    np.testing.assert_allclose(state[:, 0], 2.0 * forcing[:, 0], atol=1e-12)


def test_analytic_response_matches_forced_iteration():
    rng = np.random.default_rng(14)
    base = _system()
    d = base.state_dim
    a = rng.standard_normal((d, d))
    a *= 0.7 / np.max(np.abs(np.linalg.eigvals(a)))
    system = LinearTruthSystem(
        mesh_level=0, channels=CH, propagator=a,
        noise_cov=np.eye(d), seed=0, spectral_radius=0.7, params={},
    )
    forcing = rng.standard_normal((base.n_nodes, 1))
    f = embed_forcing(system, forcing)
    z = np.zeros(d)
    for _ in range(10_000):
        z = a @ z + f
    expected = analytic_state_response(system, forcing).ravel()
    np.testing.assert_allclose(z, expected, atol=1e-8)


def test_response_linearity_exact():
    system = _system(seed=3)
    rng = np.random.default_rng(15)
    forcing = rng.standard_normal((system.n_nodes, 1))
    one = analytic_response(system, forcing)
    two = analytic_response(system, 2.0 * forcing)
    np.testing.assert_allclose(two, 2.0 * one, rtol=1e-13)


def test_forcing_shape_validation():
    system = _system()
    with pytest.raises(ValidationError, match="shape"):
        analytic_response(system, np.zeros((5, 1)))
    bad = np.zeros((system.n_nodes, 1))
    bad[0] = np.nan
    with pytest.raises(ValidationError, match="non-finite"):
        analytic_response(system, bad)


def test_system_save_load_roundtrip(tmp_path):
    system = _system(seed=21, noise_scale=(1.0, 0.35))
    save_system(system, str(tmp_path))
    loaded = load_system(str(tmp_path))
    np.testing.assert_array_equal(loaded.propagator, system.propagator)
    np.testing.assert_array_equal(loaded.noise_cov, system.noise_cov)
    assert loaded.params == system.params
    assert [c.name for c in loaded.channels] == [c.name for c in system.channels]
