import math

import numpy as np
import pytest

from kaclab import engine, kac_pde
from kaclab.densities import bimodal, fdelta, gaussian, maxwellian


@pytest.fixture(scope="module")
def grids():
    return kac_pde.Grids()


def test_grid_validation():
    with pytest.raises(ValueError):
        kac_pde.Grids(n_v=1000)


def test_gaussian_is_fixed_point(grids):
    g = kac_pde.VelocityDensity.from_density(maxwellian(), grids)
    for rho in (engine.uniform_rho(), engine.cos2_rho(), engine.small_angle_rho(0.3)):
        assert np.max(np.abs(kac_pde.rhs_fourier(g.phi, rho, grids))) < 1e-9


def test_characteristic_function_checks(grids):
    f = kac_pde.VelocityDensity.from_density(bimodal(0.25), grids)
    f.characteristic.check()
    assert f.mass == pytest.approx(1.0, abs=1e-10)
    assert f.energy == pytest.approx(1.0, abs=1e-10)
    assert f.momentum == pytest.approx(0.0, abs=1e-12)


def test_fourier_rhs_matches_direct_collision_integral():
    g = kac_pde.Grids(v_max=10, n_v=401, xi_max=20, n_xi=513)
    dens = bimodal(0.4)
    f = kac_pde.VelocityDensity.from_density(dens, g)
    sel = np.abs(g.v) <= 3.0
    v = g.v[sel][::8]
    fourier = kac_pde.fourier_rhs_in_v(f.phi, None, g)[sel][::8]
    direct = kac_pde.collision_rhs_direct(dens, v)
    assert np.max(np.abs(fourier - direct)) < 1e-6
    assert np.max(np.abs(direct)) > 1e-2


def test_linearized_rates():
    assert kac_pde.linearized_rate(4) == pytest.approx(0.5, abs=1e-14)
    assert kac_pde.linearized_rate(2) == pytest.approx(0.0, abs=1e-14)
    assert kac_pde.linearized_rate(6) == pytest.approx(2 * (1 - 2 * 5 / 16), abs=1e-14)


def test_hermite_coefficient_conventions(grids):
    eps = 0.1
    scaled = kac_pde.VelocityDensity.from_density(kac_pde.HermitePerturbation(eps, 4), grids)
    assert kac_pde.hermite_coefficient(scaled, 4) == pytest.approx(eps / 24, abs=1e-12)
    plain = kac_pde.VelocityDensity.from_density(kac_pde.HermitePerturbation(eps, 4, scale=1.0), grids)
    assert kac_pde.hermite_coefficient(plain, 4) == pytest.approx(eps, abs=1e-12)
    assert kac_pde.hermite_coefficient(plain, 2) == pytest.approx(0.0, abs=1e-12)


def test_relative_entropy_of_gaussian(grids):
    f = kac_pde.VelocityDensity.from_density(gaussian(0.5), grids)
    exact = 0.5 * (0.5 - 1 - math.log(0.5))
    assert kac_pde.h_functional(f) == pytest.approx(exact, abs=1e-10)


@pytest.mark.parametrize("dens,spec", [(bimodal(0.25), "uniform"), (fdelta(0.3), "cos2"),
                                       (kac_pde.HermitePerturbation(0.5, 4), "small_angle:0.5")])
def test_h_theorem_and_conservation(grids, dens, spec):
    f0 = kac_pde.VelocityDensity.from_density(dens, grids)
    traj = kac_pde.integrate(f0, engine.scattering_from_spec(spec), 1.5, 0.01,
                             snapshots=np.round(np.arange(0, 1.505, 0.01), 12))
    h = traj.h_values()
    assert np.all(np.diff(h) <= 1e-8)
    assert h[-1] < h[0]
    for s in traj.states:
        assert s.mass == pytest.approx(1.0, abs=1e-8)
        assert s.energy == pytest.approx(1.0, abs=1e-7)


def test_integrate_validation(grids):
    f0 = kac_pde.VelocityDensity.from_density(maxwellian(), grids)
    with pytest.raises(ValueError):
        kac_pde.integrate(f0, None, 1.0, 0.3)
    with pytest.raises(ValueError):
        kac_pde.integrate(f0, None, 1.0, 0.01, snapshots=[2.0])
    with pytest.raises(ValueError):
        kac_pde.VelocityDensity.from_values(-np.ones(grids.n_v), grids)


def test_negative_initial_data_aborts(grids):
    bad = kac_pde.HermitePerturbation(3.0, 4, scale=1.0)
    f0 = kac_pde.VelocityDensity.from_density(bad, grids)
    with pytest.raises(kac_pde.NegativeDensityError):
        kac_pde.integrate(f0, None, 0.1, 0.01, check_every=1)


def test_export_csv(tmp_path, grids):
    f0 = kac_pde.VelocityDensity.from_density(bimodal(0.25), grids)
    traj = kac_pde.integrate(f0, None, 0.1, 0.05, snapshots=[0.0, 0.1])
    p = tmp_path / "traj.csv"
    kac_pde.export_csv(traj, p)
    lines = p.read_text().splitlines()
    assert len(lines) == 1 + 2 * grids.n_v
