import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kaclab import chaos, engine, spectral, streams


def test_sphere_areas():
    assert spectral.log_sphere_area(2) == pytest.approx(math.log(2 * math.pi))
    assert spectral.log_sphere_area(3) == pytest.approx(math.log(4 * math.pi))


def test_gap_closed_form_uniform():
    assert spectral.gap_value(3).gap == pytest.approx(1.25)
    assert spectral.gap_value(50).gap == pytest.approx(0.5 * 52 / 49)
    assert spectral.gap_value(math.inf).gap == pytest.approx(0.5)
    rep = spectral.gap_value(8)
    assert rep.exact and rep.eigenfunction.startswith("sum_j v_j^4")


@pytest.mark.parametrize("spec", ["uniform", "cos2", "one_plus_cos", "small_angle:0.3"])
@pytest.mark.parametrize("N", [3, 5, 8])
def test_quartic_eigen_relation_any_kernel(spec, N):
    rho = engine.scattering_from_spec(spec)
    F = spectral.gap_eigenfunction(N)
    target = spectral.gap_value(N, rho).gap
    for v in chaos.sample_uniform_sphere(N, streams.stream(0, spec, N), 10):
        assert spectral.apply_L(F, v, rho) / F(v) == pytest.approx(target, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(N=st.integers(2, 12), seed=st.integers(0, 10**6))
def test_Q_is_a_markov_averaging(N, seed):
    v = chaos.sample_uniform_sphere(N, streams.stream(seed, "q"))
    assert spectral.apply_Q(lambda x: np.ones(np.shape(x)[:-1]), v) == pytest.approx(1.0)
    assert spectral.apply_Q(lambda x: np.sum(x**2, axis=-1), v) == pytest.approx(N)


def test_nonuniform_kernel_flags_condition():
    rep = spectral.gap_value(10, engine.small_angle_rho(0.1))
    assert not rep.exact and not rep.condition and rep.note
    rep = spectral.gap_value(10, engine.cos2_rho())
    assert not rep.exact


def test_delta2_examples():
    bump = engine.bump_rho(math.pi / 2, 0.1)
    d = spectral.delta2(bump)
    assert d.value == pytest.approx(spectral.gamma2(bump), rel=1e-10)
    assert d.k == 4
    sa = engine.small_angle_rho(0.1)
    assert spectral.delta2(sa).value < 0.5 * spectral.gamma2(sa)
    u = engine.uniform_rho()
    assert spectral.delta2(u).value == pytest.approx(2.0)
    assert spectral.gamma2(u) == pytest.approx(2.0)


def test_induction_identity_exact():
    assert spectral.induction_bound(10) == Fraction(2, 3)
    seq = spectral.induction_sequence(1000)
    for k, b in zip(range(2, 1001), seq):
        assert b == spectral.gap_uniform_exact(k)


def test_K_eigenvalues_closed_form():
    for N in range(4, 30):
        assert spectral.K_eigenvalue(0, N) == 1.0
        assert spectral.K_eigenvalue(1, N) == pytest.approx(-1 / (N - 1), abs=1e-14)
        assert spectral.K_eigenvalue(2, N) == pytest.approx(3 / (N * N - 1), abs=1e-14)
    assert spectral.K_eigenvalue(2, 3) == pytest.approx(3 / 8)
    for N in (5, 9, 20):
        for m in range(1, 7):
            assert spectral.K_eigenvalue(m, N) == pytest.approx(spectral.K_eigenvalue_quadrature(m, N), abs=1e-12)


@pytest.mark.parametrize("N", [4, 5, 7, 12, 20])
def test_K_apply_on_eigenpolynomials(N):
    polys = spectral.k_eigenpolynomials(N, 8)
    v = np.linspace(-math.sqrt(N), math.sqrt(N), 17)
    assert np.allclose(spectral.K_apply(lambda x: np.ones_like(x), v, N), 1.0, atol=1e-12)
    for m in range(1, 5):
        p = spectral.poly_callable(polys[2 * m])
        assert np.allclose(spectral.K_apply(p, v, N), spectral.K_eigenvalue(m, N) * p(v), atol=1e-9)


def test_K_kills_odd_functions():
    v = np.linspace(-2, 2, 9)
    assert np.allclose(spectral.K_apply(lambda x: x**3, v, 9), 0.0, atol=1e-13)


def test_gap_3d_uniform():
    B = engine.uniform_kernel3d()
    rep = spectral.gap_3d(20, B)
    assert rep.candidates["sum_j |v_j|^2 v_j"] == pytest.approx(20 / 19 * 2 / 3)
    d = spectral.delta2_3d(B)
    assert d.value == pytest.approx(2.0, abs=1e-12)


def test_energy_flux_observable():
    v = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 2.0, 0]])
    assert spectral.energy_flux_observable(v, 0) == pytest.approx(0.0)
    assert spectral.energy_flux_observable(v, 1) == pytest.approx(8.0)
