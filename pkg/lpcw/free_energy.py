"""
free_energy.py

Contains the closed-form and variational free-energy computations of the
l^p Curie-Weiss model:

  beta_c(p)                        critical inverse temperature nu_p^-2
  limiting_free_energy_p_ge_2      sup_{z,w} G(z,w) (and the (u,v) form for rho_p)
  limiting_free_energy_p2          sup_z psi(sqrt(beta) z, -z^2/2)
  limiting_free_energy_p_in_1_2    sup_{y,c} inf_t ..., with its upper bound
  tau, b_np, super_linear_constant the 0 < p < 1 super-linear regime
  rate_function_rho1, optimal_t_star  the Laplace-measure closed forms
  RateFunction, legendre_rate      I(x,y) by numerical Legendre transform
  classical_cw_free_energy         the +-1 spin baseline

and the regime dispatcher `limiting_free_energy` used by the CLI.

"""
import logging
import math

import numpy as np

from .numerics import (DebugLogging, LpcwError, OptimizerSpec, active_faces,
                       golden_minimize, lgamma, maximize, maximize_growing)
from .rho_dist import (QuadratureCumulant, Regime, as_exponent,
                       rho_p_measure, RhoP)


logger = logging.getLogger(__name__)


def beta_c(p):
    """ beta_c(p) = (3 / p^(2/p)) Gamma(1 + 1/p) / Gamma(1 + 3/p) """
    p = as_exponent(p).p
    return math.exp(math.log(3.0) - (2.0 / p) * math.log(p) +
                    lgamma(1.0 + 1.0 / p) - lgamma(1.0 + 3.0 / p))


def beta_c_measure(measure):
    """ beta_c(rho) = 1 / E X^2 """
    return 1.0 / measure.second_moment


def _measure_for(p, measure):
    if measure is None:
        return rho_p_measure(p)
    if abs(measure.p - p) > 1e-12:
        raise LpcwError(1, 'measure {} is normalized for p={}, not {}'
                           .format(measure.name, measure.p, p))
    return measure


def _is_rho_p(measure):
    cumulant = measure.cumulant
    return (isinstance(cumulant, QuadratureCumulant) and
            cumulant.q == cumulant.p and abs(cumulant.scale - 1.0) < 1e-14)


def _check_beta(beta):
    if not beta >= 0:
        raise LpcwError(1, 'beta must be non-negative, got {!r}'.format(beta))


#############################################################################
# p >= 2                                                                    #
#############################################################################

REPARAM_BELOW = 2.05


def ghs_objective(measure, p, beta):
    """
    G(z, w) = psi_rho(sqrt(beta) z w, -z^p/p) - ((p-2)/(2p)) w^(2p/(p-2)),
    vectorized over z and w.

    """
    sb = math.sqrt(beta)
    c = (p - 2.0) / (2.0 * p)
    e = 2.0 * p / (p - 2.0)

    def G(z, w):
        z, w = np.asarray(z, float), np.asarray(w, float)
        with np.errstate(over='ignore'):
            return (measure.cumulant.eval(sb * z * w, -z ** p / p) -
                    c * w ** e)
    return G


def _reparametrized_objective(measure, p, beta):
    """ G with w = exp(s (p-2)/(2p)), so the penalty is ((p-2)/(2p)) e^s """
    sb = math.sqrt(beta)
    c = (p - 2.0) / (2.0 * p)

    def G(z, s):
        z, s = np.asarray(z, float), np.asarray(s, float)
        w = np.exp(c * s)
        return measure.cumulant.eval(sb * z * w, -z ** p / p) - c * np.exp(s)
    return G


def second_form_objective(p, beta):
    """
    The rho_p form psi_p(sqrt(beta u^2 v^(p-2))) + (1/p) log(1 - u^p)
    - ((p-2)/(2p)) v^p over 0 <= u < 1, v >= 0.

    """
    cumulant = RhoP(p).cumulant
    c = (p - 2.0) / (2.0 * p)

    def H(u, v):
        u, v = np.asarray(u, float), np.asarray(v, float)
        with np.errstate(divide='ignore', invalid='ignore'):
            t = np.sqrt(beta * u * u * v ** (p - 2.0))
            return (cumulant.eval(t, 0.0) + np.log1p(-u ** p) / p -
                    c * v ** p)
    return H


def limiting_free_energy_p_ge_2(p, beta, measure=None, spec=None):
    """
    lim (1/n) log Z_{n,p}(beta) for p > 2 as sup over z, w >= 0 of G(z, w).

    The search box starts at [0, 8] x [0, 3] and both axes grow while the
    maximizer sits on their upper face. For rho_p the (u, v) form is solved
    as well; its value and the gap go to `diagnostics`.

    Args:
        `p` (float) : p >= 2 (p = 2 goes to `limiting_free_energy_p2`)
        `beta` (float) : inverse temperature
    Kwargs:
        `measure` (BaseMeasure) : base measure with E|X|^p = 1
            [default] - rho_p
        `spec` (OptimizerSpec) : grid size and refinement effort
    Returns:
        `VariationalSolution` with argmax (z, w)

    """
    p = as_exponent(p).p
    _check_beta(beta)
    if p < 2:
        raise LpcwError(1, 'p >= 2 required, got {}'.format(p))
    if p == 2:
        return limiting_free_energy_p2(beta, measure, spec)
    measure = _measure_for(p, measure)
    spec = spec or OptimizerSpec()

    if p < REPARAM_BELOW:
        c = (p - 2.0) / (2.0 * p)
        sol = maximize_growing(_reparametrized_objective(measure, p, beta),
                               spec.with_box(((0.0, 8.0), (-40.0, 40.0))),
                               ('hi', None), vectorized=True)
        z, s = sol.argmax
        sol.argmax = (z, math.exp(c * s))
        sol.diagnostics['reparametrized'] = True
    else:
        sol = maximize_growing(ghs_objective(measure, p, beta),
                               spec.with_box(((0.0, 8.0), (0.0, 3.0))),
                               ('hi', 'hi'), vectorized=True)

    if _is_rho_p(measure):
        v_max = max(3.0, 3.0 ** (2.0 / (p - 2.0))) if p >= REPARAM_BELOW \
            else 3.0
        second = maximize_growing(second_form_objective(p, beta),
                                  spec.with_box(((0.0, 1.0), (0.0, v_max))),
                                  (None, 'hi'), vectorized=True)
        gap = abs(second.value - sol.value)
        sol.diagnostics['second_value'] = second.value
        sol.diagnostics['form_gap'] = gap
        if gap > 1e-6:
            logger.warning('p=%g beta=%g: (z,w) form %r and (u,v) form %r '
                           'disagree', p, beta, sol.value, second.value)
    logger.debug('limiting_free_energy_p_ge_2 p=%r beta=%r -> %r', p, beta,
                 sol.value)
    return sol


def limiting_free_energy_p2(beta, measure=None, spec=None):
    """ sup over z >= 0 of psi_rho(sqrt(beta) z, -z^2/2) (E X^2 = 1) """
    _check_beta(beta)
    measure = _measure_for(2.0, measure)
    spec = spec or OptimizerSpec()
    sb = math.sqrt(beta)

    def f(z):
        z = np.asarray(z, float)
        return measure.cumulant.eval(sb * z, -0.5 * z * z)
    return maximize_growing(f, spec.with_box(((0.0, 8.0),)), ('hi',),
                            vectorized=True)


#############################################################################
# 1 < p < 2                                                                 #
#############################################################################

LOG_T_RANGE = (math.log(1e-8), math.log(1e8))


def self_normalized_objective(measure, p, beta, iterations=60):
    """
    (y, c) -> inf over t >= 0 of
        beta y^2 / 2 + psi_rho(c t, -t y / p) - ((p-1)/p) t y c^(p/(p-1)),
    the infimum taken by golden section on log t plus the point t = 0.

    """
    k = (p - 1.0) / p
    e = p / (p - 1.0)

    def phi(y, c):
        y, c = np.broadcast_arrays(np.asarray(y, float), np.asarray(c, float))
        shape = y.shape
        y, c = y.ravel(), c.ravel()
        base = 0.5 * beta * y * y
        lin = k * y * c ** e

        def inner(log_t):
            t = np.exp(log_t)
            return base + measure.cumulant.eval(c * t, -t * y / p) - lin * t
        _, best = golden_minimize(inner, np.full(y.shape, LOG_T_RANGE[0]),
                                  np.full(y.shape, LOG_T_RANGE[1]),
                                  iterations)
        return np.minimum(best, base).reshape(shape)
    return phi


def upper_bound_p_in_1_2(p, beta, measure=None, spec=None):
    """
    inf over w > 0 of sup over z >= 0 of
        psi_rho(sqrt(beta) z w, -z^p/p) + ((2-p)/(2p)) w^(2p/(p-2)),
    convex in w; golden section on log w.

    Returns:
        (bound, w at the infimum)

    """
    p = as_exponent(p).p
    measure = _measure_for(p, measure)
    spec = spec or OptimizerSpec(grid_points_per_axis=48)
    sb = math.sqrt(beta)
    c = (2.0 - p) / (2.0 * p)
    e = 2.0 * p / (p - 2.0)

    def sup_z(w):
        def f(z):
            z = np.asarray(z, float)
            return measure.cumulant.eval(sb * z * w, -z ** p / p)
        inner = maximize_growing(f, spec.with_box(((0.0, 8.0),)), ('hi',),
                                 vectorized=True)
        return inner.value + c * w ** e

    log_w, bound = golden_minimize(
        lambda lw: np.array(sup_z(math.exp(float(lw)))),
        math.log(1e-3), math.log(1e3), 50)
    return float(bound), math.exp(float(log_w))


def limiting_free_energy_p_in_1_2(p, beta, measure=None, spec=None,
                                  with_bound=True):
    """
    lim (1/n) log Z_{n,p}(beta) for 1 < p < 2 as
        sup over y, c >= 0 of inf over t >= 0 of (...)
    on the box y in [0, 1.2], c in [0, 4] (upper faces growable). With
    `with_bound` the upper bound is computed as well; a value above it by
    more than 1e-6 raises code 11 with the value as `partial`.

    """
    p = as_exponent(p).p
    _check_beta(beta)
    if not 1 < p < 2:
        raise LpcwError(1, '1 < p < 2 required, got {}'.format(p))
    measure = _measure_for(p, measure)
    spec = spec or OptimizerSpec(grid_points_per_axis=32)
    sol = maximize_growing(self_normalized_objective(measure, p, beta),
                           spec.with_box(((0.0, 1.2), (0.0, 4.0))),
                           ('hi', 'hi'), vectorized=True)
    if with_bound:
        bound, w = upper_bound_p_in_1_2(p, beta, measure)
        sol.diagnostics['bound'] = bound
        sol.diagnostics['bound_w'] = w
        if sol.value > bound + 1e-6:
            raise LpcwError(11, 'p={:g} beta={:g}: value {!r} above the upper '
                                'bound {!r}'.format(p, beta, sol.value, bound),
                            partial=sol.value)
    return sol


def self_normalized_duality(p, y, measure=None, spec=None):
    """
    Both sides of
        sup_z psi(sqrt(y) z / (1+|z|^p)^(1/p)) - (1/p) log(1+|z|^p)
          = sup_{x >= 0} E_p(x y) - ((2-p)/(2p)) x^(p/(2-p)),
    E_p(beta) the 1 < p < 2 limiting free energy.

    Returns:
        (lhs, rhs)

    """
    p = as_exponent(p).p
    if not 1 < p < 2:
        raise LpcwError(1, '1 < p < 2 required, got {}'.format(p))
    measure = _measure_for(p, measure)
    rho = RhoP(p)
    sy = math.sqrt(y)

    def left(z):
        z = np.asarray(z, float)
        zp = z ** p
        return (rho.cumulant.eval(sy * z / (1.0 + zp) ** (1.0 / p), 0.0) -
                np.log1p(zp) / p)
    lhs = maximize_growing(left, OptimizerSpec(grid_points_per_axis=256)
                           .with_box(((0.0, 8.0),)), ('hi',),
                           vectorized=True).value

    inner_spec = spec or OptimizerSpec(grid_points_per_axis=16,
                                       refine_iterations=80)
    c = (2.0 - p) / (2.0 * p)
    e = p / (2.0 - p)

    def right(x):
        energy = limiting_free_energy_p_in_1_2(p, x * y, measure, inner_spec,
                                               with_bound=False).value
        return energy - c * x ** e
    rhs = maximize(right, OptimizerSpec(grid_points_per_axis=12,
                                        refine_iterations=60,
                                        value_tol=1e-8)
                   .with_box(((0.0, 3.0),))).value
    return lhs, rhs


#############################################################################
# 0 < p < 1                                                                 #
#############################################################################

def p_threshold(k):
    """ p_k = 2 log(1 + 1/k) / log(1 + 2/(k-1)) for k >= 2, p_1 = 0 """
    if k < 1:
        raise LpcwError(1, 'k must be at least 1')
    if k == 1:
        return 0.0
    return 2.0 * math.log1p(1.0 / k) / math.log1p(2.0 / (k - 1.0))


def _sub_linear(p):
    p = as_exponent(p).p
    if not p < 1:
        raise LpcwError(1, '0 < p < 1 required, got {}'.format(p))
    return p


def _locate_k(p):
    """ the k >= 2 with p in (p_{k-1}, p_k]; p_k increases to 1 """
    hi = 2
    while p_threshold(hi) < p:
        hi *= 2
    lo = max(2, hi // 2)
    while lo < hi:
        mid = (lo + hi) // 2
        if p_threshold(mid) < p:
            lo = mid + 1
        else:
            hi = mid
    return lo


def tau(p):
    """
    (k, tau(p)) with tau(p) = k^(1-2/p) (k-1) for p in (p_{k-1}, p_k].

    """
    p = _sub_linear(p)
    k = _locate_k(p)
    return k, k ** (1.0 - 2.0 / p) * (k - 1.0)


def b_np_equal_mass(n, p):
    """ 1/2 n^(1-2/p) (n-1), the equal-mass value on all n coordinates """
    p = _sub_linear(p)
    if n < 2:
        raise LpcwError(1, 'n must be at least 2')
    return 0.5 * n ** (1.0 - 2.0 / p) * (n - 1.0)


def b_np(n, p):
    """
    B(n, p) = sup sum_{i<j} x_i x_j over x_i > 0, sum x_i^p = 1.

    Equal mass on j coordinates gives 1/2 j^(1-2/p) (j-1); that is unimodal
    in j with its peak at k(p), so the supremum is the value at
    j = min(n, k(p)).

    """
    p = _sub_linear(p)
    if n < 2:
        raise LpcwError(1, 'n must be at least 2')
    k, _ = tau(p)
    j = np.arange(2, min(n, k) + 1, dtype=float)
    return float(np.max(0.5 * j ** (1.0 - 2.0 / p) * (j - 1.0)))


def super_linear_constant(p, beta):
    """ lim n^(1-2/p) log Z_{n,p}(beta) = (beta/2) tau(p) """
    _check_beta(beta)
    return 0.5 * beta * tau(p)[1]


#############################################################################
# Rate functions                                                            #
#############################################################################

def rate_function_rho1(x, y):
    """
    I(x, y) = y - 1 - log y - log((1 + sqrt(1 - t^2)) / 2), t = |x| / y, for
    the Laplace base measure.

    """
    x = abs(x)
    if not 0 <= x < y:
        raise LpcwError(1, 'need 0 <= |x| < y, got x={}, y={}'.format(x, y))
    t = x / y
    return (y - 1.0 - math.log(y) -
            math.log(0.5 * (1.0 + math.sqrt(1.0 - t * t))))


def optimal_t_star(beta):
    """ t_* with t_*^2 = 2 (2 - 1/beta)_+ / (sqrt(beta^2 + 4 beta) + 2 - beta) """
    _check_beta(beta)
    if beta <= 0.5:
        return 0.0
    return math.sqrt(2.0 * (2.0 - 1.0 / beta) /
                     (math.sqrt(beta * beta + 4.0 * beta) + 2.0 - beta))


class RateFunction(DebugLogging):
    """
    I(x, y) = sup over (u, v) of u x + v y - psi_rho(u, v).

    The inner supremum is a concave problem; queries after the first start
    Nelder-Mead at the previous maximizer and fall back to the full grid
    with box growth when that lands on the box. An inner supremum that
    keeps growing (the point is off the closure of the mean range) gives
    +inf.

    Args:
        `measure` (BaseMeasure)
    Kwargs:
        `spec` (OptimizerSpec) : starting box and effort
            [default] - u in [0, 16], v in [-16, 16], 400 refinement steps
        `debug`, `debug_log_path` : as for GhsDensity

    """

    GROWABLE = ('hi', 'hilo')

    def __init__(self, measure, spec=None, debug=False, debug_log_path='.'):
        self.measure = measure
        self.p = measure.p
        self.spec = spec or OptimizerSpec(((0.0, 16.0), (-16.0, 16.0)),
                                          refine_iterations=400)
        self._start = None

        self.debug = debug
        if self.debug:
            self.initDebugLogging(debug_log_path)

    def in_domain(self, x, y):
        """ whether (x, y) lies in 0 <= |x| <= y^(1/p) """
        return y >= 0 and abs(x) <= y ** (1.0 / self.p)

    def _objective(self, x, y):
        cumulant = self.measure.cumulant

        def f(u, v):
            u, v = np.asarray(u, float), np.asarray(v, float)
            return u * x + v * y - cumulant.eval(u, v)
        return f

    def eval(self, x, y):
        self.logCall('eval', locals())
        x = abs(x)
        if not self.in_domain(x, y):
            return np.inf
        f = self._objective(x, y)
        sol = None
        if self._start is not None:
            sol = maximize(f, self.spec, vectorized=True, start=self._start)
            if active_faces(sol.argmax, self.spec.domain_box,
                            self.spec.grid_points_per_axis, self.GROWABLE):
                sol = None
        if sol is None:
            try:
                sol = maximize_growing(f, self.spec, self.GROWABLE,
                                       vectorized=True)
            except LpcwError as e:
                if e.err_code == 4:
                    self.logDebug('eval({}, {}): unbounded'.format(x, y))
                    return np.inf
                raise
        self._start = sol.argmax
        return sol.value

    def eval_F(self, x, y, beta):
        """ I_F = I - F with F(x, y) = (beta/2) x^2 y^(-2/p) """
        return self.eval(x, y) - 0.5 * beta * x * x * y ** (-2.0 / self.p)


def legendre_rate(measure, x, y):
    """ I(x, y) of `measure` (see RateFunction) """
    return RateFunction(measure).eval(x, y)


def large_deviation_free_energy(measure, beta, spec=None, rate=None):
    """
    sup over the domain 0 <= |x| <= y^(1/p) of F(x, y) - I(x, y), searched in
    x = r y^(1/p), r in [0, 1], where F = (beta/2) r^2.

    """
    _check_beta(beta)
    rate = rate or RateFunction(measure)
    spec = spec or OptimizerSpec(((0.0, 1.0), (0.05, 4.0)),
                                 grid_points_per_axis=16,
                                 refine_iterations=120, value_tol=1e-9)

    def objective(r, y):
        if y <= 0:
            return -np.inf
        return 0.5 * beta * r * r - rate.eval(r * y ** (1.0 / measure.p), y)
    sol = maximize_growing(objective, spec, (None, 'hi'))
    r, y = sol.argmax
    sol.diagnostics['x'] = r * y ** (1.0 / measure.p)
    return sol


def mgf_inequality_check(measure, p, beta, spec=None):
    """
    Grid maximum of G(z, w) for a user measure. G <= 0 everywhere is known
    for rho_p and the +-1 coin only; this reports, it asserts nothing.

    """
    p = as_exponent(p).p
    if p <= 2:
        raise LpcwError(1, 'p > 2 required, got {}'.format(p))
    spec = spec or OptimizerSpec(((0.0, 8.0), (0.0, 3.0)))
    G = ghs_objective(measure, p, beta)
    (z0, z1), (w0, w1) = spec.domain_box
    z, w = np.meshgrid(np.linspace(z0, z1, spec.grid_points_per_axis),
                       np.linspace(w0, w1, spec.grid_points_per_axis),
                       indexing='ij')
    values = G(z.ravel(), w.ravel())
    best = int(np.argmax(values))
    return {'max': float(values[best]),
            'argmax': (float(z.ravel()[best]), float(w.ravel()[best])),
            'nonpositive': bool(values[best] <= 1e-12)}


#############################################################################
# Baseline and dispatcher                                                   #
#############################################################################

def classical_cw_free_energy(beta, spec=None):
    """ sup over y of -y^2/2 + log cosh(sqrt(beta) y) """
    _check_beta(beta)
    sb = math.sqrt(beta)

    def f(y):
        a = sb * np.abs(np.asarray(y, float))
        return -0.5 * y * y + a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)
    spec = spec or OptimizerSpec(((0.0, 5.0),), grid_points_per_axis=256)
    return maximize_growing(f, spec, ('hi',), vectorized=True)


def limiting_free_energy(p, beta, measure=None):
    """
    Regime dispatch for the CLI: returns a dict with value, argmax, regime,
    bound (1 < p < 2 only) and diagnostics.

    """
    exponent = as_exponent(p)
    regime = exponent.regime
    bound = None
    if exponent.p == 1:
        raise LpcwError(1, 'p = 1 sits between the self-normalized and the '
                           'sub-linear regimes; no variational formula')
    if regime is Regime.SUB_LINEAR:
        raise LpcwError(1, 'p < 1: log Z grows like n^(2/p-1); use tau')
    if regime is Regime.SELF_NORMALIZED:
        sol = limiting_free_energy_p_in_1_2(exponent.p, beta, measure)
        bound = sol.diagnostics['bound']
    elif regime is Regime.BOUNDARY:
        sol = limiting_free_energy_p2(beta, measure)
    else:
        sol = limiting_free_energy_p_ge_2(exponent.p, beta, measure)
    return {'value': sol.value, 'argmax': list(sol.argmax),
            'regime': regime.value, 'bound': bound,
            'diagnostics': sol.diagnostics}
