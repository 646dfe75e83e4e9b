import math

import numpy as np
import pytest

from lpcw import free_energy
from lpcw.free_energy import (RateFunction, b_np, b_np_equal_mass, beta_c,
                              classical_cw_free_energy, ghs_objective,
                              large_deviation_free_energy, legendre_rate,
                              limiting_free_energy,
                              limiting_free_energy_p2,
                              limiting_free_energy_p_ge_2,
                              limiting_free_energy_p_in_1_2,
                              mgf_inequality_check, optimal_t_star,
                              p_threshold, rate_function_rho1,
                              self_normalized_duality, super_linear_constant,
                              tau)
from lpcw.numerics import LpcwError, SeededStream
from lpcw.oracle import (beta_c_oracle, bnp_bruteforce, cw_fixed_point,
                         grid_oracle_2d, partition_quadrature)
from lpcw.rho_dist import (RhoP, rademacher_measure, rho1_measure,
                           rho_p_measure)
from lpcw.sphere_mc import GibbsParams, estimate_free_energy


def test_beta_c_values():
    np.testing.assert_allclose(beta_c(2), 1.0, rtol=1e-12)
    np.testing.assert_allclose(beta_c(1), 0.5, rtol=1e-12)
    assert abs(beta_c(1000) - 3.0) < 0.01
    assert abs(beta_c(1e4) - 3.0) < 0.01
    assert 2.5 < beta_c(64) < 3.0
    for p in (0.5, 1.5, 3, 4, 8):
        np.testing.assert_allclose(beta_c(p), beta_c_oracle(p), rtol=1e-12)
        np.testing.assert_allclose(beta_c(p), 1.0 / RhoP(p).abs_moment(2),
                                   rtol=1e-10)


def test_beta_c_between_one_and_three():
    values = np.array([beta_c(p) for p in np.linspace(2.5, 64.0, 40)])
    assert np.all((values > 1.0) & (values < 3.0))
    assert np.all(np.diff(values) > 0)


@pytest.mark.parametrize('p', [3, 4, 6, 8])
@pytest.mark.parametrize('rel', [0.25, 0.5, 0.9])
def test_zero_below_critical(p, rel):
    sol = limiting_free_energy_p_ge_2(p, rel * beta_c(p))
    assert abs(sol.value) < 1e-8
    assert sol.diagnostics['form_gap'] < 1e-6


@pytest.mark.parametrize('p', [3, 4, 6, 8])
@pytest.mark.parametrize('rel', [1.5, 3.0])
def test_positive_above_critical(p, rel):
    sol = limiting_free_energy_p_ge_2(p, rel * beta_c(p))
    assert sol.value > 1e-4
    assert sol.diagnostics['form_gap'] < 1e-6


def test_interior_maximizer_above_critical():
    sol = limiting_free_energy_p_ge_2(4, 3.0 * beta_c(4))
    z, w = sol.argmax
    assert 0.0 < z < 8.0
    assert 0.0 < w < 3.0
    G = ghs_objective(rho_p_measure(4), 4, 3.0 * beta_c(4))
    np.testing.assert_allclose(G(z, w), sol.value, rtol=1e-12)


@pytest.mark.slow
def test_surface_maximum_against_grid():
    beta = 3.0 * beta_c(4)
    sol = limiting_free_energy_p_ge_2(4, beta)
    G = ghs_objective(rho_p_measure(4), 4, beta)
    report = grid_oracle_2d(G, ((0.0, 8.0), (0.0, 3.0)), 1e-2)
    assert report.value <= sol.value + 1e-8
    assert sol.value - report.value < 1e-3


def test_near_two_reparametrized():
    below = limiting_free_energy_p_ge_2(2.02, 0.5 * beta_c(2.02))
    assert below.diagnostics['reparametrized']
    assert abs(below.value) < 1e-8
    above = limiting_free_energy_p_ge_2(2.02, 3.0 * beta_c(2.02))
    assert above.value > 1e-4


def test_two_point_measure_is_flat():
    sol = limiting_free_energy_p_ge_2(4, 1.0, rademacher_measure(4))
    assert abs(sol.value) < 1e-8
    assert 'form_gap' not in sol.diagnostics


def test_measure_must_match_p():
    with pytest.raises(LpcwError) as e:
        limiting_free_energy_p_ge_2(4, 1.0, rho_p_measure(3))
    assert e.value.err_code == 1


def test_p2_below_and_at_critical():
    for beta in (0.0, 0.5, 1.0):
        sol = limiting_free_energy_p2(beta)
        assert abs(sol.value) < 1e-8, beta
    assert limiting_free_energy_p_ge_2(2, 0.5).value == \
        limiting_free_energy_p2(0.5).value


def test_p2_gaussian_closed_form():
    # psi(sqrt(2) z, -z^2/2) = z^2 / (1 + z^2) - log(1 + z^2) / 2, peak at z = 1
    sol = limiting_free_energy_p2(2.0)
    np.testing.assert_allclose(sol.value, 0.5 - 0.5 * math.log(2.0),
                               rtol=1e-8)
    np.testing.assert_allclose(sol.argmax[0], 1.0, atol=1e-4)

    report = grid_oracle_2d(lambda z: z * z / (1 + z * z) -
                            0.5 * np.log1p(z * z), ((0.0, 8.0),), 1e-6)
    np.testing.assert_allclose(report.value, sol.value, atol=1e-8)


def test_monotone_and_convex_in_beta():
    betas = np.linspace(0.0, 3.0 * beta_c(4), 7)
    values = np.array([limiting_free_energy_p_ge_2(4, b).value
                       for b in betas])
    assert np.all(np.diff(values) >= -1e-9)
    assert np.all(values[1:-1] <= 0.5 * (values[:-2] + values[2:]) + 1e-7)


def test_self_normalized_at_zero_beta():
    sol = limiting_free_energy_p_in_1_2(1.5, 0.0, with_bound=False)
    assert abs(sol.value) < 1e-8


def test_self_normalized_needs_p_between_one_and_two():
    with pytest.raises(LpcwError):
        limiting_free_energy_p_in_1_2(2.5, 0.1)


@pytest.mark.slow
def test_self_normalized_upper_bound():
    for beta in (0.1, 2.0):
        sol = limiting_free_energy_p_in_1_2(1.5, beta)
        assert sol.value <= sol.diagnostics['bound'] + 1e-6


def test_self_normalized_above_bound_raises(monkeypatch):
    monkeypatch.setattr(free_energy, 'upper_bound_p_in_1_2',
                        lambda p, beta, measure=None, spec=None: (-1.0, 1.0))
    with pytest.raises(LpcwError) as e:
        limiting_free_energy_p_in_1_2(1.5, 0.5)
    assert e.value.err_code == 11
    assert e.value.partial >= -1e-8
    sol = limiting_free_energy_p_in_1_2(1.5, 0.5, with_bound=False)
    assert e.value.partial == sol.value


@pytest.mark.slow
def test_self_normalized_duality():
    lhs, rhs = self_normalized_duality(1.5, 0.2)
    assert abs(lhs - rhs) < 1e-4


@pytest.mark.slow
def test_self_normalized_against_monte_carlo():
    p, beta = 1.5, 0.1
    value = limiting_free_energy_p_in_1_2(p, beta, with_bound=False).value
    ns = np.array([100, 200, 400])
    estimates, errors = [], []
    for i, n in enumerate(ns):
        f, se = estimate_free_energy(GibbsParams(n=int(n), p=p, beta=beta),
                                     SeededStream(40 + i), 200000)
        estimates.append(f)
        errors.append(se)
    # linear in 1/n, read off at 1/n = 0
    slope, intercept = np.polyfit(1.0 / ns, estimates, 1)
    assert abs(intercept - value) < 1e-2 + 4.0 * max(errors)


def test_tau_examples():
    assert tau(0.5) == (2, 0.125)
    k, _ = tau(p_threshold(2))
    assert k == 2
    assert tau(p_threshold(2) + 1e-9)[0] == 3
    np.testing.assert_allclose(p_threshold(2),
                               2 * math.log(1.5) / math.log(3.0), rtol=1e-14)


@pytest.mark.parametrize('k', [2, 3, 4, 7])
def test_tau_continuous_at_thresholds(k):
    pk = p_threshold(k)
    left = k ** (1 - 2 / pk) * (k - 1)
    right = (k + 1) ** (1 - 2 / pk) * k
    np.testing.assert_allclose(left, right, rtol=1e-10)
    np.testing.assert_allclose(tau(pk)[1], tau(pk + 1e-12)[1], rtol=1e-9)


def test_tau_domain():
    for p in (1.0, 1.5):
        with pytest.raises(LpcwError):
            tau(p)


def test_b_np_examples():
    np.testing.assert_allclose(b_np(2, 0.5), 1.0 / 16, rtol=1e-14)
    for p in (0.3, 0.6, 0.9):
        np.testing.assert_allclose(b_np(2, p), b_np_equal_mass(2, p),
                                   rtol=1e-14)
    np.testing.assert_allclose(b_np(100, 0.5), 0.5 * tau(0.5)[1], rtol=1e-14)
    with pytest.raises(LpcwError):
        b_np(1, 0.5)


@pytest.mark.parametrize('n', [2, 3, 4])
@pytest.mark.parametrize('p', [0.3, 0.5, 0.6, 0.9])
def test_b_np_against_bruteforce(n, p):
    report = bnp_bruteforce(n, p, resolution=1e-3 if n < 4 else 1e-2)
    np.testing.assert_allclose(b_np(n, p), report.value, rtol=1e-9)


def test_b_np_below_peak_is_equal_mass():
    # k(0.9) = 6, so every n <= 6 puts equal mass on all coordinates
    for n in range(2, 7):
        np.testing.assert_allclose(b_np(n, 0.9), b_np_equal_mass(n, 0.9),
                                   rtol=1e-14)
    assert b_np(3, 0.6) > b_np_equal_mass(3, 0.6)


def test_super_linear_constant():
    assert super_linear_constant(0.5, 0.0) == 0.0
    np.testing.assert_allclose(super_linear_constant(0.5, 1.0), 1.0 / 16,
                               rtol=1e-14)


def test_super_linear_finite_n_is_below_limit():
    # log Z_n <= beta n^(2/p-1) B(n, p), and B(n, p) <= tau(p) / 2
    p, beta = 0.5, 1.0
    for n in (2, 3):
        log_z = partition_quadrature(n, p, beta).detail['log_value']
        scaled = n ** (1 - 2 / p) * log_z
        assert 0.0 < scaled <= beta * b_np(n, p) + 1e-12
        assert scaled <= super_linear_constant(p, beta) + 1e-12


def test_rate_function_rho1():
    assert rate_function_rho1(0.0, 1.0) == 0.0
    assert rate_function_rho1(-0.3, 1.0) == rate_function_rho1(0.3, 1.0)
    assert rate_function_rho1(0.3, 1.0) > 0
    for x, y in ((1.0, 1.0), (0.0, 0.0), (2.0, 1.0)):
        with pytest.raises(LpcwError):
            rate_function_rho1(x, y)


def test_optimal_t_star():
    for beta in (0.0, 0.4, 0.5):
        assert optimal_t_star(beta) == 0.0
    np.testing.assert_allclose(optimal_t_star(1.0) ** 2,
                               2.0 / (math.sqrt(5.0) + 1.0), rtol=1e-12)


@pytest.mark.parametrize('beta', [0.6, 1.0, 2.0])
def test_optimal_t_star_against_grid(beta):
    def f(t):
        return 0.5 * beta * t * t + np.log(0.5 * (1 + np.sqrt(1 - t * t)))
    report = grid_oracle_2d(f, ((0.0, 1.0),), 1e-6)
    assert abs(report.detail['argmax'][0] - optimal_t_star(beta)) < 1e-5


def test_legendre_rate_laplace():
    np.testing.assert_allclose(legendre_rate(rho1_measure(1), 0.3, 1.0),
                               rate_function_rho1(0.3, 1.0), atol=1e-6)


@pytest.mark.slow
def test_legendre_rate_laplace_grid():
    rate = RateFunction(rho1_measure(1))
    points = [(0.0, 0.5), (0.15, 0.5), (0.3, 0.5), (0.0, 1.0), (0.2, 1.0),
              (0.5, 1.0), (0.8, 1.0), (0.0, 2.0), (0.6, 2.0), (1.2, 2.0)]
    for x, y in points:
        np.testing.assert_allclose(rate.eval(x, y), rate_function_rho1(x, y),
                                   atol=1e-6)


def test_legendre_rate_zero_at_mean():
    np.testing.assert_allclose(legendre_rate(rho_p_measure(4), 0.0, 1.0),
                               0.0, atol=1e-7)


def test_rate_function_domain_and_warm_start():
    rate = RateFunction(rho_p_measure(4))
    assert rate.in_domain(0.5, 1.0)
    assert not rate.in_domain(1.2, 1.0)
    assert rate.eval(1.2, 1.0) == np.inf
    assert rate.eval(0.0, -1.0) == np.inf
    first = rate.eval(0.4, 1.2)
    again = rate.eval(0.4, 1.2)
    np.testing.assert_allclose(first, again, atol=1e-8)
    assert first > 0
    np.testing.assert_allclose(rate.eval_F(0.4, 1.2, 2.0),
                               first - 0.16 * 1.2 ** -0.5, atol=1e-8)


@pytest.mark.slow
def test_large_deviation_form_matches_variational():
    beta = 3.0 * beta_c(4)
    ld = large_deviation_free_energy(rho_p_measure(4), beta)
    direct = limiting_free_energy_p_ge_2(4, beta)
    assert abs(ld.value - direct.value) < 1e-4


def test_mgf_inequality_check():
    assert mgf_inequality_check(rho_p_measure(4), 4,
                                0.5 * beta_c(4))['nonpositive']
    assert mgf_inequality_check(rademacher_measure(4), 4, 1.0)['nonpositive']
    report = mgf_inequality_check(rho_p_measure(4), 4, 3.0 * beta_c(4))
    assert not report['nonpositive']
    assert report['max'] > 0
    with pytest.raises(LpcwError):
        mgf_inequality_check(rho_p_measure(2), 2, 1.0)


def test_classical_cw():
    assert abs(classical_cw_free_energy(0.5).value) < 1e-12
    assert abs(classical_cw_free_energy(1.0).value) < 1e-8
    sol = classical_cw_free_energy(2.0)
    oracle = cw_fixed_point(2.0)
    np.testing.assert_allclose(sol.value, oracle.value, rtol=1e-9)
    np.testing.assert_allclose(sol.argmax[0], oracle.detail['y'], atol=1e-5)


def test_dispatcher():
    result = limiting_free_energy(4, 0.5 * beta_c(4))
    assert result['regime'] == 'ghs-tractable'
    assert abs(result['value']) < 1e-8
    assert result['bound'] is None
    assert limiting_free_energy(2, 0.5)['regime'] == 'boundary'
    for p in (1.0, 0.5):
        with pytest.raises(LpcwError) as e:
            limiting_free_energy(p, 1.0)
        assert e.value.err_code == 1
