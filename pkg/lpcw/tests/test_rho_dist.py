import math

import mpmath
import numpy as np
import pytest

from scipy import special

from lpcw.numerics import LpcwError, SeededStream, integrate
from lpcw.rho_dist import (PExponent, Regime, RhoP, abs_moment,
                           check_measure, empirical_measure, gaussian_measure,
                           measure_by_name, moment_ratio_check, psi_bivariate,
                           psi_p, rademacher_measure, rho1_measure,
                           rho_p_measure, sample_rho_p, sampler_measure)


mpmath.mp.dps = 50


def _mp_abs_moment(p, ell):
    p = mpmath.mpf(p)
    return float(p ** (ell / p) * mpmath.gamma((ell + 1) / p) /
                 mpmath.gamma(1 / p))


def _mp_nu_sq(p):
    return _mp_abs_moment(p, 2)


def test_regimes():
    assert PExponent(0.5).regime is Regime.SUB_LINEAR
    assert PExponent(1).regime is Regime.SELF_NORMALIZED
    assert PExponent(1.5).regime is Regime.SELF_NORMALIZED
    assert PExponent(2).regime is Regime.BOUNDARY
    assert PExponent(2.0001).regime is Regime.GHS_TRACTABLE
    for bad in (0.0, -1.0, float('inf'), float('nan')):
        with pytest.raises(LpcwError):
            PExponent(bad)


@pytest.mark.parametrize('p', [0.5, 1, 1.5, 2, 3, 4, 8, 16])
def test_normalization(p):
    rho = RhoP(p)
    mass = integrate(lambda x: float(rho.pdf(x)), -np.inf, np.inf)
    np.testing.assert_allclose(mass, 1.0, atol=1e-10)
    moment = integrate(lambda x: abs(x) ** p * float(rho.pdf(x)),
                       -np.inf, np.inf)
    np.testing.assert_allclose(moment, 1.0, atol=1e-10)


@pytest.mark.parametrize('p', [0.5, 1.5, 3, 4])
def test_gamma_moment_identity(p):
    rho = RhoP(p)
    for ell in (1, 2, 3, 4, 6):
        quad = integrate(lambda x: abs(x) ** ell * float(rho.pdf(x)),
                         -np.inf, np.inf)
        np.testing.assert_allclose(rho.abs_moment(ell), quad, rtol=1e-8)
        np.testing.assert_allclose(abs_moment(p, ell), _mp_abs_moment(p, ell),
                                   rtol=1e-12)


def test_nu_sq():
    np.testing.assert_allclose(RhoP(2).nu_p_sq, 1.0, rtol=1e-14)
    np.testing.assert_allclose(RhoP(4).nu_p_sq, _mp_nu_sq(4), rtol=1e-13)
    nu = [RhoP(p).nu_p_sq for p in np.linspace(2.0, 64.0, 63)]
    assert np.all(np.diff(nu) < 0)


def test_tail_cutoff():
    rho = RhoP(3)
    L = rho.tail_cutoff(1e-6)
    np.testing.assert_allclose(special.gammaincc(1.0 / 3, L ** 3 / 3), 1e-6,
                               rtol=1e-10)


def test_sample_gaussian_case():
    n = 1000000
    x = sample_rho_p(RhoP(2), SeededStream(1), n)
    assert abs(x.mean()) < 4.0 / math.sqrt(n)
    assert abs(x.var() - 1.0) < 4.0 * math.sqrt(2.0 / n)


def test_sample_laplace_case():
    n = 1000000
    x = sample_rho_p(RhoP(1), SeededStream(2), n)
    a = np.abs(x)
    assert abs(a.mean() - 1.0) < 4.0 * a.std() / math.sqrt(n)


def test_sample_fourth_moment():
    n = 1000000
    x4 = sample_rho_p(RhoP(4), SeededStream(3), n) ** 4
    want = _mp_abs_moment(4, 4)
    assert abs(x4.mean() - want) < 4.0 * x4.std() / math.sqrt(n)


def test_sample_needs_draws():
    with pytest.raises(LpcwError):
        sample_rho_p(RhoP(2), SeededStream(0), 0)


def test_psi_p_examples():
    np.testing.assert_allclose(psi_p(RhoP(3), 0.0), 0.0, atol=1e-15)
    np.testing.assert_allclose(psi_p(RhoP(2), 1.3), 0.845, rtol=1e-10)
    nu4 = _mp_nu_sq(4)
    value = psi_p(RhoP(4), 1.0)
    assert math.log(math.cosh(math.sqrt(nu4))) <= value <= 0.5 * nu4


def test_psi_p_even():
    rho = RhoP(3)
    t = np.array([0.1, 0.7, 2.5])
    assert np.array_equal(psi_p(rho, t), psi_p(rho, -t))


def test_psi_p_divergent_below_one():
    rho = RhoP(0.5)
    assert psi_p(rho, 0.0) == 0.0
    with pytest.raises(LpcwError) as e:
        psi_p(rho, 0.1)
    assert e.value.err_code == 5


def test_mgf_bounds():
    t = np.array([0.1, 0.5, 1.0, 2.0, 4.0])
    for p in (2.5, 3.0, 4.0, 6.0, 8.0):
        rho = RhoP(p)
        psi = psi_p(rho, t)
        nu = math.sqrt(rho.nu_p_sq)
        assert np.all(psi <= 0.5 * rho.nu_p_sq * t * t + 1e-8)
        assert np.all(psi >= np.log(np.cosh(nu * t)) - 1e-8)


def test_psi_bivariate_examples():
    np.testing.assert_allclose(psi_bivariate(rho_p_measure(4), 0.0, 0.0), 0.0,
                               atol=1e-15)

    coin = rademacher_measure(4)
    np.testing.assert_allclose(psi_bivariate(coin, 0.8, -0.3),
                               math.log(math.cosh(0.8)) - 0.3, rtol=1e-14)

    laplace = rho1_measure(1)
    u, v = 0.3, -0.2
    want = math.log((1 - v) / ((1 - v) ** 2 - u * u))
    np.testing.assert_allclose(psi_bivariate(laplace, u, v), want, rtol=1e-10)


def test_psi_bivariate_gaussian_closed_form():
    # X ~ N(0, 1): psi(u, v) = u^2 / (2 (1 - 2v)) - log(1 - 2v) / 2
    measure = gaussian_measure(2)
    u = np.array([0.0, 0.5, 2.0, 5.0])
    v = np.array([-3.0, -0.1, 0.2, 0.4])
    want = u * u / (2 * (1 - 2 * v)) - 0.5 * np.log(1 - 2 * v)
    np.testing.assert_allclose(psi_bivariate(measure, u, v), want, rtol=1e-10,
                               atol=1e-13)


def test_cumulant_symmetry_and_convexity():
    cumulant = rho_p_measure(3).cumulant
    rng = np.random.default_rng(5)
    u = rng.uniform(-3, 3, size=(50, 2))
    v = rng.uniform(-2, 0.3, size=(50, 2))
    np.testing.assert_array_equal(cumulant.eval(u[:, 0], v[:, 0]),
                                  cumulant.eval(-u[:, 0], v[:, 0]))
    mid = cumulant.eval(u.mean(axis=1), v.mean(axis=1))
    ends = 0.5 * (cumulant.eval(u[:, 0], v[:, 0]) +
                  cumulant.eval(u[:, 1], v[:, 1]))
    assert np.all(mid <= ends + 1e-10)


def test_cumulant_domain():
    rho3 = rho_p_measure(3).cumulant
    assert rho3.domain(5.0, 0.3)
    assert not rho3.domain(0.0, 0.34)
    assert rho3.eval(0.0, 0.5) == np.inf

    laplace = rho1_measure(1).cumulant
    assert laplace.domain(0.5, 0.4)
    assert not laplace.domain(0.7, 0.4)

    sub = rho_p_measure(0.5).cumulant
    assert sub.domain(0.0, -1.0)
    assert not sub.domain(0.1, -1.0)

    with pytest.raises(LpcwError) as e:
        psi_bivariate(rho_p_measure(3), 0.0, 1.0)
    assert e.value.err_code == 1


def test_moment_ratio_examples():
    assert moment_ratio_check(3, 3, 4)
    assert moment_ratio_check(4, 2, 4)
    assert moment_ratio_check(6, 3, 6)
    with pytest.raises(LpcwError):
        moment_ratio_check(2, 3, 4)


def test_moment_ratio_suite():
    for p in (2, 3, 4, 6):
        for q in (2, 3, 4, 6):
            if p < q:
                continue
            for ell in (2, 4, 6):
                assert moment_ratio_check(p, q, ell), (p, q, ell)


@pytest.mark.parametrize('factory,p', [(rho_p_measure, 3),
                                       (gaussian_measure, 4),
                                       (rho1_measure, 2),
                                       (rademacher_measure, 3)])
def test_measure_contract(factory, p):
    measure = factory(p)
    report = check_measure(measure, SeededStream(9))
    assert report['passed'], report


def test_empirical_measure():
    rng = np.random.default_rng(4)
    values = np.concatenate([rng.standard_normal(500), [0.0]])
    measure = empirical_measure(values, 3)
    np.testing.assert_allclose(psi_bivariate(measure, 0.0, 0.0), 0.0,
                               atol=1e-14)
    x = measure.cumulant.values
    np.testing.assert_allclose(np.mean(np.abs(x) ** 3), 1.0, rtol=1e-12)
    u, v = 0.4, -0.2
    want = math.log(np.mean(np.exp(u * x + v * np.abs(x) ** 3)))
    np.testing.assert_allclose(psi_bivariate(measure, u, v), want, rtol=1e-12)
    np.testing.assert_allclose(psi_bivariate(measure, u, v),
                               psi_bivariate(measure, -u, v), rtol=1e-12)
    with pytest.raises(LpcwError):
        empirical_measure([0.0, 0.0], 3)


def _normal_sampler(stream, n):
    return stream.generator.standard_normal(n)


def test_sampler_measure():
    measure = sampler_measure(_normal_sampler, 2, SeededStream(6),
                              second_moment=1.0)
    u, v = 0.5, -0.1
    value, se = psi_bivariate(measure, u, v, full_output=True)
    want = u * u / (2 * (1 - 2 * v)) - 0.5 * math.log(1 - 2 * v)
    assert se <= 1e-3
    assert abs(value - want) < 5.0 * se


def test_sampler_measure_symmetric_after_growth():
    measure = sampler_measure(_normal_sampler, 2, SeededStream(6),
                              second_moment=1.0)
    for u, v in ((1.5, -0.1), (0.5, -0.1)):
        assert psi_bivariate(measure, u, v) == psi_bivariate(measure, -u, v)
    pool = measure.cumulant._pool
    assert len(pool) > 2 * measure.cumulant.first_batch
    np.testing.assert_array_equal(pool[0::2], -pool[1::2])


def test_sampler_measure_tolerance():
    measure = sampler_measure(_normal_sampler, 2, SeededStream(6),
                              second_moment=1.0, tolerance=1e-9)
    measure.cumulant.max_pool = 1 << 15
    with pytest.raises(LpcwError) as e:
        psi_bivariate(measure, 1.0, -0.1)
    assert e.value.err_code == 6
    assert e.value.partial is not None


def test_measure_by_name():
    assert measure_by_name('gaussian', 4).name == 'gaussian'
    assert measure_by_name('file', 4, values=[1.0, -2.0]).name == 'file'
    with pytest.raises(LpcwError):
        measure_by_name('file', 4)
    with pytest.raises(LpcwError):
        measure_by_name('cauchy', 4)
