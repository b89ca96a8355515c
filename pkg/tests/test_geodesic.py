import numpy as np
import pytest

from geosic import geodesic, grid, spectral
from geosic.errors import ContractError, DivergenceError
from geosic.geodesic import ShootingConfig

from conftest import blob, small_config
from oracles import straight_line_energy


def test_config_validation():
    with pytest.raises(ContractError):
        ShootingConfig(time_steps=0)
    with pytest.raises(ContractError):
        ShootingConfig(sigma=0.0)


def test_zero_velocity_is_identity():
    cfg = ShootingConfig()
    traj = geodesic.integrate_epdiff(np.zeros((2, 16, 16), complex), cfg)
    assert len(traj.velocities) == cfg.time_steps + 1
    assert all(np.array_equal(v, np.zeros((2, 16, 16))) for v in traj.velocities)
    assert np.array_equal(traj.deformation, np.zeros((2, 64, 64)))
    im = blob((64, 64), 30, 30)
    assert np.array_equal(grid.warp(im, traj.deformation), im)


def test_first_velocity_is_input(rng):
    v = spectral.random_velocity(rng, (16, 16), scale=0.1)
    traj = geodesic.integrate_epdiff(v, ShootingConfig())
    assert np.array_equal(traj.velocities[0], v)


def test_divergence_reports_step():
    v = np.zeros((2, 8, 8), complex)
    v[0, 4, 5] = v[0, 4, 3] = 1e200
    with pytest.raises(DivergenceError) as err:
        with np.errstate(all="ignore"):
            geodesic.integrate_epdiff(v, small_config())
    assert err.value.step is not None


def test_energy_trivial_cases(rng):
    cfg = small_config()
    a = blob((32, 32), 15, 16)
    t = blob((32, 32), 17, 16)
    z = np.zeros((2, 8, 8), complex)
    assert geodesic.matching_energy(a, a, z, cfg).total == 0.0
    e = geodesic.matching_energy(a, t, z, cfg)
    assert e.total == ((a - t) ** 2).sum() / cfg.sigma ** 2
    assert e.reg == 0.0


def test_energy_matches_straight_line_oracle(rng):
    cfg = small_config()
    a = rng.random((32, 32))
    t = rng.random((32, 32))
    v = spectral.random_velocity(rng, (8, 8), scale=0.3)
    e = geodesic.matching_energy(a, t, v, cfg).total
    ref = straight_line_energy(a, t, v)
    assert abs(e - ref) <= 1e-10 * abs(ref)


def test_gradient_zero_at_perfect_match():
    cfg = small_config()
    a = blob((32, 32), 15, 16)
    g, ga, e = geodesic.energy_gradient(a, a, np.zeros((2, 8, 8), complex), cfg)
    assert not g.any() and not ga.any() and e.total == 0


def _directional_fd(a, t, v, dv, cfg, h=1e-5):
    return (geodesic.matching_energy(a, t, v + h * dv, cfg).total
            - geodesic.matching_energy(a, t, v - h * dv, cfg).total) / (2 * h)


@pytest.mark.parametrize("seed", range(3))
def test_velocity_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    cfg = small_config()
    a = blob((32, 32), 15, 15, 4)
    t = blob((32, 32), 17, 16, 4)
    v = spectral.random_velocity(rng, (8, 8), scale=0.3)
    g, _, _ = geodesic.energy_gradient(a, t, v, cfg)
    for _ in range(4):
        dv = spectral.random_velocity(rng, (8, 8))
        an = spectral.inner(g, dv)
        fd = _directional_fd(a, t, v, dv, cfg)
        assert abs(an - fd) <= 1e-4 * abs(fd)


def test_atlas_gradient_finite_differences(rng):
    cfg = small_config()
    a = rng.random((32, 32))
    t = rng.random((32, 32))
    v = spectral.random_velocity(rng, (8, 8), scale=0.3)
    _, ga, _ = geodesic.energy_gradient(a, t, v, cfg)
    d = rng.standard_normal((32, 32))
    h = 1e-5
    fd = (geodesic.matching_energy(a + h * d, t, v, cfg).total
          - geodesic.matching_energy(a - h * d, t, v, cfg).total) / (2 * h)
    assert abs(np.vdot(ga, d) - fd) <= 1e-5 * abs(fd)


def test_batched_gradient_matches_single(rng):
    cfg = small_config()
    a = rng.random((32, 32))
    t = rng.random((3, 32, 32))
    v = spectral.random_velocity(rng, (8, 8), scale=0.3, batch=(3,))
    g, ga, e = geodesic.energy_gradient(a, t, v, cfg)
    for i in range(3):
        gi, gai, ei = geodesic.energy_gradient(a, t[i], v[i], cfg)
        assert np.allclose(g[i], gi, rtol=1e-12, atol=1e-9)
        assert np.allclose(ga[i], gai, rtol=1e-12, atol=1e-9)
        assert np.isclose(e.total[i], ei.total, rtol=1e-13)


def _energy_drift(v, steps):
    cfg = ShootingConfig(time_steps=steps)
    traj = geodesic.integrate_epdiff(v, cfg)
    e0 = geodesic.geodesic_energy(traj.velocities[0], cfg.operator)
    e1 = geodesic.geodesic_energy(traj.velocities[-1], cfg.operator)
    return abs(e1 - e0) / e0


def test_energy_conservation_first_order(rng):
    v = spectral.random_velocity(rng, (16, 16), scale=0.4)
    d10, d20 = _energy_drift(v, 10), _energy_drift(v, 20)
    assert d10 < 0.05
    assert 0.35 <= d20 / d10 <= 0.65


def test_self_convergence(rng):
    v = spectral.random_velocity(rng, (16, 16), scale=0.4)
    ref = geodesic.integrate_epdiff(v, ShootingConfig(time_steps=160)).velocities[-1]
    e10 = np.abs(geodesic.integrate_epdiff(v, ShootingConfig(time_steps=10)).velocities[-1] - ref).max()
    e20 = np.abs(geodesic.integrate_epdiff(v, ShootingConfig(time_steps=20)).velocities[-1] - ref).max()
    assert 0.35 <= e20 / e10 <= 0.65


def test_positive_jacobian_and_inverse_consistency(rng):
    cfg = ShootingConfig()
    for _ in range(3):
        v = spectral.random_velocity(rng, (16, 16))
        v *= 2.0 / np.abs(spectral.to_spatial(v, (64, 64))).max()
        traj = geodesic.integrate_epdiff(v, cfg)
        assert grid.jacobian_determinant(traj.deformation).min() > 0
        fwd = geodesic.forward_flow(traj, cfg)
        # phi(phi_inv(x)) - x
        comp = grid.compose(fwd, traj.deformation)
        assert np.linalg.norm(comp, axis=0)[8:-8, 8:-8].mean() < 0.5


def test_time_reversal(rng):
    cfg = ShootingConfig()
    v = spectral.random_velocity(rng, (16, 16))
    v *= 1.0 / np.abs(spectral.to_spatial(v, (64, 64))).max()
    inv_neg = geodesic.integrate_epdiff(-v, cfg).deformation
    fwd = geodesic.forward_flow(geodesic.integrate_epdiff(v, cfg), cfg)
    # equal only up to the integrators' first-order error
    assert np.abs(inv_neg - fwd).mean() < 0.1
