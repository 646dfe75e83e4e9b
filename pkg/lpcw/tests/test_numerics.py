import math

import mpmath
import numpy as np
import pytest

from lpcw.numerics import (LpcwError, OptimizerSpec, QuadratureSpec,
                           SeededStream, golden_minimize, integrate,
                           log_gamma, log_integrate_window, map_chunks,
                           maximize, maximize_growing, worker_count)
from lpcw.oracle import cw_fixed_point


mpmath.mp.dps = 50


def _mp_log_gamma(z):
    return complex(mpmath.loggamma(mpmath.mpc(z.real, z.imag)))


def test_error_message():
    e = LpcwError(3, 'nothing finite')
    assert e.err_code == 3
    assert str(e) == 'Empty Effective Domain [3]: nothing finite'
    assert str(LpcwError(99)) == 'Unknown Error [99]'


def test_log_gamma_values():
    np.testing.assert_allclose(log_gamma(1.0).real, 0.0, atol=1e-15)
    np.testing.assert_allclose(log_gamma(0.5).real, 0.5723649429247001,
                               rtol=1e-14)
    z = 1.0 + 5.0j
    got = log_gamma(z)
    want = _mp_log_gamma(z)
    np.testing.assert_allclose(got.real, want.real, rtol=1e-12)
    np.testing.assert_allclose(got.imag, want.imag, rtol=1e-12)


def test_log_gamma_real_range():
    x = np.linspace(0.1, 50.0, 97)
    got = log_gamma(x).real
    want = [float(mpmath.loggamma(mpmath.mpf(float(v)))) for v in x]
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-13)


def test_log_gamma_domain():
    with pytest.raises(LpcwError) as e:
        log_gamma(-0.5 + 1j)
    assert e.value.err_code == 1


def test_log_gamma_modulus_product():
    # |Gamma(a+ib)| = Gamma(a) prod_k (1 + b^2/(a+k)^2)^(-1/2); the product
    # is truncated at K and the rest integrated in closed form
    K = 100000
    k = np.arange(K + 1, dtype=float)
    for a in (0.25, 1.0, 3.5):
        for b in np.linspace(-20.0, 20.0, 17):
            y = a + K + 0.5
            c = abs(b)
            tail = 0.0
            if c > 0:
                tail = 0.5 * (2.0 * c * math.atan(c / y) -
                              y * math.log1p(c * c / (y * y)))
            log_mod = (math.lgamma(a) -
                       0.5 * np.sum(np.log1p(b * b / (a + k) ** 2)) - tail)
            np.testing.assert_allclose(log_gamma(a + 1j * b).real, log_mod,
                                       rtol=1e-8, atol=1e-8)


def test_integrate_normalizations():
    gauss = lambda x: math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    np.testing.assert_allclose(integrate(gauss, -np.inf, np.inf), 1.0,
                               rtol=1e-10)

    c4 = 4.0 ** -0.25 / (2.0 * math.gamma(1.25))
    rho4 = lambda x: c4 * math.exp(-x ** 4 / 4.0)
    np.testing.assert_allclose(integrate(rho4, -np.inf, np.inf), 1.0,
                               rtol=1e-10)

    nu4 = float(2 * mpmath.gamma(mpmath.mpf(7) / 4) /
                (3 * mpmath.gamma(mpmath.mpf(5) / 4)))
    second = integrate(lambda x: x * x * rho4(x), -np.inf, np.inf)
    np.testing.assert_allclose(second, nu4, rtol=1e-10)


def test_integrate_linear():
    f = lambda x: math.exp(-abs(x))
    g = lambda x: math.exp(-x * x) * math.cos(x)
    lhs = integrate(lambda x: 2.0 * f(x) - 3.0 * g(x), -np.inf, np.inf)
    rhs = 2.0 * integrate(f, -np.inf, np.inf) - 3.0 * integrate(g, -np.inf,
                                                                np.inf)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9)


def test_integrate_full_output():
    value, error = integrate(lambda x: x * x, 0.0, 3.0, full_output=True)
    np.testing.assert_allclose(value, 9.0, rtol=1e-12)
    assert error >= 0.0


def test_integrate_reports_partial():
    spec = QuadratureSpec(1e-14, 1e-14, max_subdivisions=2)
    with pytest.raises(LpcwError) as e:
        integrate(lambda x: math.sin(1.0 / x) / math.sqrt(x), 1e-8, 1.0, spec)
    assert e.value.err_code == 2
    assert e.value.partial is not None


def test_log_integrate_window():
    # log of int_a^b e^{-x} dx for several windows at once
    a = np.array([0.0, 1.0, 0.5])
    b = np.array([1.0, 30.0, 2.0])
    got = log_integrate_window(lambda x: -x, a, b)
    want = np.log(np.exp(-a) - np.exp(-b))
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_spec_validation():
    with pytest.raises(LpcwError):
        QuadratureSpec(abs_tol=0.0)
    with pytest.raises(LpcwError):
        OptimizerSpec(((1.0, 1.0),))
    with pytest.raises(LpcwError):
        OptimizerSpec(grid_points_per_axis=1)


def test_maximize_quadratic():
    sol = maximize(lambda z: -(z - 1.0) ** 2, OptimizerSpec(((0.0, 3.0),)))
    np.testing.assert_allclose(sol.value, 0.0, atol=1e-12)
    np.testing.assert_allclose(sol.argmax, [1.0], atol=1e-5)


def _classical(beta):
    sb = math.sqrt(beta)
    return lambda y: -0.5 * y * y + math.log(math.cosh(sb * y))


def test_maximize_classical_objective():
    sol = maximize(_classical(0.5), OptimizerSpec(((0.0, 5.0),)))
    np.testing.assert_allclose(sol.value, 0.0, atol=1e-14)
    np.testing.assert_allclose(sol.argmax, [0.0], atol=1e-6)

    sol = maximize(_classical(2.0), OptimizerSpec(((0.0, 5.0),)))
    ref = cw_fixed_point(2.0)
    np.testing.assert_allclose(sol.value, ref.value, rtol=1e-9)
    np.testing.assert_allclose(sol.argmax[0], ref.detail['y'], atol=1e-4)


def test_maximize_constant_shift():
    f = lambda x, y: -(x - 0.3) ** 2 - 2.0 * (y - 1.1) ** 2
    spec = OptimizerSpec(((0.0, 2.0), (0.0, 2.0)))
    a = maximize(f, spec)
    b = maximize(lambda x, y: f(x, y) + 0.5, spec)
    # same grid cell; refinement agrees to the resolution of f + c
    assert a.diagnostics['grid_value'] + 0.5 == b.diagnostics['grid_value']
    np.testing.assert_allclose(a.argmax, b.argmax, atol=1e-7)
    np.testing.assert_allclose(b.value - a.value, 0.5, atol=1e-12)


def test_maximize_ties_lexicographic():
    sol = maximize(lambda x: 0.0, OptimizerSpec(((0.0, 1.0),)))
    assert sol.argmax == (0.0,)


def test_maximize_empty_domain():
    with pytest.raises(LpcwError) as e:
        maximize(lambda x: -np.inf, OptimizerSpec(((0.0, 1.0),)))
    assert e.value.err_code == 3


def test_maximize_warm_start():
    f = lambda z: -(z - 1.0) ** 2
    spec = OptimizerSpec(((0.0, 3.0),))
    warm = maximize(f, spec, start=(0.9,))
    cold = maximize(f, spec)
    np.testing.assert_allclose(warm.argmax, [1.0], atol=1e-5)
    assert warm.diagnostics['evaluations'] < cold.diagnostics['evaluations']


def test_maximize_growing():
    f = lambda z: -(z - 20.0) ** 2
    sol = maximize_growing(f, OptimizerSpec(((0.0, 8.0),)), ('hi',))
    np.testing.assert_allclose(sol.argmax, [20.0], atol=1e-4)
    assert sol.diagnostics['growths'] == 2

    with pytest.raises(LpcwError) as e:
        maximize_growing(lambda z: z, OptimizerSpec(((0.0, 1.0),)), ('hi',),
                         max_growth=2)
    assert e.value.err_code == 4
    np.testing.assert_allclose(e.value.partial, 4.0)


def test_golden_minimize_vectorized():
    centers = np.array([0.1, 0.5, 2.0])
    x, fx = golden_minimize(lambda x: (x - centers) ** 2, 0.0, 3.0)
    np.testing.assert_allclose(x, centers, atol=1e-8)
    np.testing.assert_allclose(fx, 0.0, atol=1e-15)


def test_seeded_stream_determinism():
    a = SeededStream(7, 3).generator.random(1000)
    b = SeededStream(7, 3).generator.random(1000)
    np.testing.assert_array_equal(a, b)
    c = SeededStream(7, 3).child(0).generator.random(1000)
    assert not np.array_equal(a, c)


def test_seeded_stream_decorrelation():
    a = SeededStream(11, 0).generator.standard_normal(1000000)
    b = SeededStream(11, 1).generator.standard_normal(1000000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01


def test_map_chunks_order(monkeypatch):
    monkeypatch.setenv('LPCW_THREADS', '3')
    assert worker_count() == 3
    assert worker_count(1) == 1
    assert map_chunks(lambda i: i * i, 7) == [i * i for i in range(7)]
    monkeypatch.setenv('LPCW_THREADS', 'many')
    with pytest.raises(LpcwError):
        worker_count()
