import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kaclab import chaos, streams
from kaclab.densities import bimodal, fdelta, maxwellian, sigma_stat


@settings(max_examples=30, deadline=None)
@given(N=st.integers(2, 60), seed=st.integers(0, 10**6))
def test_uniform_sphere_points(N, seed):
    x = chaos.sample_uniform_sphere(N, streams.stream(seed, "s"), 5)
    assert np.allclose(np.sum(x * x, axis=1), N, rtol=1e-12)


@pytest.mark.parametrize("N,k", [(3, 1), (5, 1), (10, 2), (40, 1)])
def test_mehler_marginal_normalized(N, k):
    from scipy import integrate

    lim = math.sqrt(N)
    if k == 1:
        val = integrate.quad(lambda x: chaos.mehler_marginal_density(N, 1, np.array([x]))[0], -lim, lim)[0]
    else:
        val = integrate.dblquad(lambda y, x: float(np.squeeze(chaos.mehler_marginal_density(N, 2, np.array([x, y])))),
                                -lim, lim, lambda x: -math.sqrt(max(N - x * x, 0)),
                                lambda x: math.sqrt(max(N - x * x, 0)))[0]
    assert val == pytest.approx(1.0, abs=1e-6)


def test_sphere_marginal_matches_mehler():
    N = 8
    x = chaos.sample_uniform_sphere(N, streams.stream(3, "m"), 50_000)
    h = chaos.empirical_marginal(x, 1, 40, (-3, 3))
    assert h.mass.sum() == pytest.approx(np.mean(np.abs(x) < 3), abs=1e-12)
    assert chaos.l1_to_density(h, lambda v: chaos.mehler_marginal_density(N, 1, v)) < 0.02


def test_fdelta_moments():
    for d in (0.5, 0.25, 0.02):
        f = fdelta(d)
        assert f.moment(2) == pytest.approx(1.0, abs=1e-14)
        assert f.moment(1) == pytest.approx(0.0, abs=1e-14)
        assert f.is_maxwellian == (d == 0.5)


def test_conditioned_product_validation():
    with pytest.raises(ValueError):
        chaos.ConditionedProduct(fdelta(0.25), 1)
    from kaclab.densities import gaussian

    with pytest.raises(ValueError):
        chaos.ConditionedProduct(gaussian(2.0), 10)


def test_gaussian_conditioned_product_is_uniform():
    cp = chaos.ConditionedProduct(maxwellian(), 20)
    x = chaos.sample_uniform_sphere(20, streams.stream(0, "g"), 10)
    assert np.all(cp.log_weight(x) == 0.0)
    z = chaos.z_n_estimate(maxwellian(), 20, 100, streams.stream(0, "g"))
    assert z.logZ == pytest.approx(0.0, abs=1e-9)
    ch = chaos.sample_conditioned(cp, 50, streams.stream(0, "g"))
    assert ch.acceptance == pytest.approx(1.0)


def test_z_limit_value():
    assert chaos.z_limit(fdelta(0.25)) == pytest.approx(math.sqrt(2) / sigma_stat(fdelta(0.25)))
    assert chaos.z_limit(fdelta(0.25)) == pytest.approx(math.sqrt(2.0 / 3.0), rel=1e-10)
    assert chaos.z_limit(maxwellian()) == pytest.approx(1.0)


def test_z_deterministic_block_matches_exact():
    f = fdelta(0.25)
    for N in (3, 5, 12, 20):
        z = chaos.z_n_estimate(f, N, 10, streams.stream(0, "z"), block=N if N >= 12 else None)
        assert z.stderr == 0.0
        assert z.logZ == pytest.approx(chaos.log_z_exact(f, N), abs=1e-8)


def test_z_small_N_without_exact_law_uses_sphere_estimator():
    f = bimodal(0.25)
    z = chaos.z_n_estimate(f, 4, 20_000, streams.stream(0, "zb"))
    assert z.method == "sphere" and z.stderr > 0


@pytest.mark.parametrize("N", [40, 150])
def test_z_monte_carlo_matches_exact(N):
    f = fdelta(0.25)
    z = chaos.z_n_estimate(f, N, 4000, streams.stream(1, "z", N))
    assert abs(z.logZ - chaos.log_z_exact(f, N)) < 4 * z.stderr


def test_z_estimators_agree_at_small_N():
    f = fdelta(0.3)
    a = chaos.z_n_estimate(f, 12, 200_000, streams.stream(2, "z"), method="sphere")
    exact = chaos.log_z_exact(f, 12)
    assert abs(a.logZ - exact) < 4 * a.stderr


def test_square_sum_density_matches_chi2_for_gaussian():
    x = np.array([2.0, 5.0, 11.0, 20.0])
    for m in (12, 20):
        p = chaos.square_sum_pdf(maxwellian(), m, x)
        assert np.allclose(np.log(p), [chaos.log_chi2_pdf(u, m) for u in x], atol=1e-7)


def test_exact_sampler_on_sphere_and_marginal():
    f = fdelta(0.25)
    s = chaos.ExactConditionedSampler(f, 100).sample(2000, streams.stream(4, "x"))
    assert np.allclose(np.sum(s * s, axis=1), 100, rtol=1e-12)
    h = chaos.empirical_marginal(s, 1, 50, (-5, 5))
    assert chaos.l1_to_density(h, f.pdf) < 0.03


def test_exact_sampler_agrees_with_metropolis_chain():
    f = fdelta(0.25)
    N = 30
    cp = chaos.ConditionedProduct(f, N)
    a = chaos.ExactConditionedSampler(f, N).sample(4000, streams.stream(5, "a"))
    b = chaos.sample_conditioned(cp, 4000, streams.stream(5, "b")).samples
    lw_a, lw_b = cp.log_weight(a), cp.log_weight(b)
    se = math.hypot(lw_a.std() / math.sqrt(a.shape[0]), 3 * lw_b.std() / math.sqrt(b.shape[0]))
    assert abs(lw_a.mean() - lw_b.mean()) < 4 * se


def test_metropolis_chain_properties():
    f = bimodal(0.25)
    N = 20
    cp = chaos.ConditionedProduct(f, N)
    ch = chaos.sample_conditioned(cp, 3000, streams.stream(6, "c"))
    assert np.allclose(np.sum(ch.samples**2, axis=1), N, rtol=1e-10)
    assert 0 < ch.acceptance < 1
    assert abs(chaos.geweke_z(cp.log_weight(ch.samples))) < 2.576


def test_chaos_metric_decreases_with_N():
    f = fdelta(0.25)
    l1 = []
    for N in (20, 50, 100, 200):
        cp = chaos.ConditionedProduct(f, N)
        ch = chaos.sample_conditioned(cp, 200_000 // N, streams.stream(7, "cm", N))
        l1.append(chaos.l1_to_density(chaos.empirical_marginal(ch.samples, 1, 50, (-5, 5)), f.pdf))
    assert l1[0] > l1[-1]
    assert l1[2] < 0.05


def test_product_gap_small_for_chaotic_samples():
    f = fdelta(0.25)
    s = chaos.ExactConditionedSampler(f, 200).sample(2000, streams.stream(8, "pg"))
    s_small = chaos.ExactConditionedSampler(f, 4).sample(100_000, streams.stream(8, "pg4"))
    assert chaos.product_gap(s, 20, (-4, 4)) < chaos.product_gap(s_small, 20, (-4, 4))


def test_histogram_2d_normalization():
    x = chaos.sample_uniform_sphere(10, streams.stream(9, "h"), 5000)
    h = chaos.empirical_marginal(x, 2, 20, (-6, 6))
    assert h.mass.sum() == pytest.approx(1.0)
    assert chaos.l1_to_density(h, lambda p: chaos.mehler_marginal_density(10, 2, p)) < 0.1


def test_admissible_window():
    assert chaos.admissible_delta(200, 0.1) == pytest.approx(200 ** (-0.8))
    a1, b1 = chaos.window_exponents(100, chaos.admissible_delta(100))
    a2, b2 = chaos.window_exponents(10_000, chaos.admissible_delta(10_000))
    assert a2 > a1 and b2 < b1
    with pytest.raises(ValueError):
        chaos.admissible_delta(100, 0.2)


def test_profile_validation_and_tail():
    f = fdelta(0.25)
    with pytest.raises(ValueError):
        chaos.z_n_profile(f, 50, 0, -1.0, 10, streams.stream(0))
    N = 200
    u = N + 8 * math.sqrt(N) * sigma_stat(f)
    r = chaos.z_n_profile(f, N, 0, u, 2000, streams.stream(0, "tail"))
    peak = chaos.z_n_profile(f, N, 0, N, 2000, streams.stream(0, "peak"))
    assert r.log_mc - peak.log_mc < -25 and r.log_profile - peak.log_profile < -25


def test_profile_peak_fixed_delta():
    r = chaos.z_n_profile(fdelta(0.25), 200, 0, 200, 20_000, streams.stream(1, "p"))
    assert abs(r.z_score) < 3


def test_profile_gaussian_consistency():
    # for f = gamma, p_U is chi^2: the profile approaches it at the peak as n grows
    devs = []
    for n in (200, 2000, 20000):
        prof = -0.5 * math.log(2 * math.pi * n * 2.0)
        devs.append(abs(math.expm1(chaos.log_chi2_pdf(n, n) - prof)))
    assert devs[0] > devs[1] > devs[2] and devs[2] < 1e-4
    r = chaos.z_n_profile(maxwellian(), 2000, 0, 2000, 2000, streams.stream(1, "pg"))
    assert abs(r.z_score) < 3


def test_profile_mc_matches_exact_at_admissible_delta():
    N = 200
    f = fdelta(chaos.admissible_delta(N))
    W, _ = chaos.estimate_pU(f, N, N, 20_000, streams.stream(1, "pe"))
    exact = math.exp(chaos.log_pU_exact(f, N, N))
    assert abs(W.mean() - exact) < 4 * W.std(ddof=1) / math.sqrt(W.size)


@pytest.mark.xfail(strict=True, reason="leading profile misses a ~10% correction at N = 200 (see decisions ledger)")
def test_profile_peak_admissible_delta_example():
    N = 200
    for j in (0, 1, 2):
        r = chaos.z_n_profile(fdelta(chaos.admissible_delta(N)), N, j, N - j, 20_000, streams.stream(1, "p", j))
        assert abs(r.z_score) < 3


def test_dump_samples_csv(tmp_path):
    x = chaos.sample_uniform_sphere(5, streams.stream(0), 3)
    p = tmp_path / "s.csv"
    chaos.dump_samples_csv(x, p, 2)
    lines = p.read_text().splitlines()
    assert lines[0].split(",")[:2] == ["replica", "index"] and len(lines) == 4
