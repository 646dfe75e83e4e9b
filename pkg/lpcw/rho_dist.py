"""
rho_dist.py

Contains the symmetric density family rho_p(x) = c_p exp(-|x|^p / p) and the
base measures built from it, together with their bivariate cumulants
psi(u, v) = log E exp(uX + v|X|^p).

`RhoP`            : constants, density, moments and exact sampler of rho_p
`BaseMeasure`     : a normalized (E|X|^p = 1) symmetric law with a sampler
                    and a cumulant; factories below build the ones the CLI
                    knows by name
`BivariateCumulant` and subclasses:
    `QuadratureCumulant`  : X = s Z_q, psi by windowed double-exponential
                            quadrature (rho_p, Gaussian, Laplace, ...)
    `TwoPointCumulant`    : the +-1 coin
    `EmpiricalCumulant`   : exact cumulant of a (symmetrized) sample
    `MonteCarloCumulant`  : sampler-only measures, batch doubling

"""
import enum
import logging
import math
import threading

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from scipy import special

from .numerics import (LpcwError, golden_minimize, integrate, lgamma,
                       log_integrate_window, tanh_sinh_rule)


logger = logging.getLogger(__name__)


class Regime(enum.Enum):
    SUB_LINEAR = 'sub-linear'
    SELF_NORMALIZED = 'self-normalized'
    BOUNDARY = 'boundary'
    GHS_TRACTABLE = 'ghs-tractable'


@dataclass(frozen=True)
class PExponent:
    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (math.isfinite(p) and p > 0):
            raise LpcwError(1, 'exponent p must be finite and positive, '
                               'got {!r}'.format(self.p))
        object.__setattr__(self, 'p', p)

    @property
    def regime(self):
        if self.p < 1:
            return Regime.SUB_LINEAR
        if self.p < 2:
            return Regime.SELF_NORMALIZED
        if self.p == 2:
            return Regime.BOUNDARY
        return Regime.GHS_TRACTABLE

    def __float__(self):
        return self.p


def as_exponent(p):
    return p if isinstance(p, PExponent) else PExponent(p)


def abs_moment(p, ell):
    """ E|Z_p|^ell = p^(ell/p) Gamma((ell+1)/p) / Gamma(1/p) """
    return math.exp((ell / p) * math.log(p) + lgamma((ell + 1.0) / p) -
                    lgamma(1.0 / p))


#############################################################################
# Cumulants                                                                 #
#############################################################################

class BivariateCumulant(object):
    """
    psi(u, v) = log E exp(uX + v|X|^p) of a symmetric law. `eval` is
    vectorized and returns +inf where the expectation diverges; `domain`
    says where it does not.
    """

    p = None

    def eval(self, u, v):
        raise NotImplementedError

    def domain(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        return np.ones(u.shape, dtype=bool)

    def __call__(self, u, v):
        return self.eval(u, v)


class QuadratureCumulant(BivariateCumulant):
    """
    Cumulant of X = scale * Z_q measured with exponent p. The expectation is
    an integral of exp(h(x)) cosh-corrected over x >= 0 with
    h(x) = |u| s x + v s^p x^p - x^q / q, taken over the window where h is
    within `DEPTH` of its peak.

    Args:
        `q` (float) : shape of the underlying rho_q
        `p` (float) : exponent of the |X|^p tilt
    Kwargs:
        `scale` (float) : s
            [default] - 1.0

    """

    DEPTH = 45.0
    LOG_GRID = np.logspace(-8, 12, 201)
    RULE = tanh_sinh_rule(1.0 / 32, 4.0)

    def __init__(self, q, p, scale=1.0):
        self.q = float(q)
        self.p = float(p)
        self.scale = float(scale)
        self._log_norm = self._log_integral(np.zeros(1), np.zeros(1))[0]

    def domain(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        terms = {}
        for power, coef in ((1.0, np.abs(u) * self.scale),
                            (self.p, v * self.scale ** self.p),
                            (self.q, np.full(u.shape, -1.0 / self.q))):
            terms[power] = terms.get(power, 0.0) + coef
        inside = np.zeros(u.shape, dtype=bool)
        decided = np.zeros(u.shape, dtype=bool)
        for power in sorted(terms, reverse=True):
            coef = terms[power]
            inside |= ~decided & (coef < 0)
            decided |= coef != 0
        return inside

    def _exponent(self, a, b):
        p, q = self.p, self.q

        def h(x):
            return a * x + b * x ** p - x ** q / q
        return h

    def _window(self, a, b):
        h = self._exponent(a[:, None], b[:, None])
        grid = self.LOG_GRID
        with np.errstate(over='ignore', invalid='ignore'):
            H = h(grid[None, :])
        H = np.where(np.isnan(H), -np.inf, H)
        i = np.argmax(H, axis=1)
        lo = np.where(i > 0, grid[np.maximum(i - 1, 0)], 0.0)
        hi = grid[np.minimum(i + 1, len(grid) - 1)]
        h1 = self._exponent(a, b)
        x_star, neg_peak = golden_minimize(lambda x: -h1(x), lo, hi, 50)
        peak = -neg_peak
        at_zero = peak < 0.0
        x_star = np.where(at_zero, 0.0, x_star)
        peak = np.where(at_zero, 0.0, peak)
        level = peak - self.DEPTH

        # left end: h(0) = 0 is above the level unless the peak is high
        left = np.zeros(len(a))
        need = level > 0.0
        if np.any(need):
            l_lo, l_hi = np.zeros(len(a)), x_star.copy()
            for _ in range(50):
                mid = 0.5 * (l_lo + l_hi)
                below = h1(mid) < level
                l_lo = np.where(below, mid, l_lo)
                l_hi = np.where(below, l_hi, mid)
            left = np.where(need, l_lo, 0.0)

        beyond = (grid[None, :] > x_star[:, None]) & (H < level[:, None])
        has = beyond.any(axis=1)
        j = np.argmax(beyond, axis=1)
        r_hi = np.where(has, grid[j], grid[-1])
        r_lo = x_star.copy()
        for _ in range(50):
            mid = 0.5 * (r_lo + r_hi)
            above = h1(mid) >= level
            r_lo = np.where(above, mid, r_lo)
            r_hi = np.where(above, r_hi, mid)
        return left, r_hi

    def _log_integral(self, a, b):
        with np.errstate(over='ignore', invalid='ignore'):
            left, right = self._window(a, b)
        p, q = self.p, self.q
        a2, b2 = a[:, None], b[:, None]

        def g(x):
            return (a2 * x + np.log1p(np.exp(-2.0 * a2 * x)) - math.log(2.0) +
                    b2 * x ** p - x ** q / q)
        return log_integrate_window(g, left, right, self.RULE)

    def eval(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        shape = u.shape
        u, v = u.ravel(), v.ravel()
        out = np.full(u.shape, np.inf)
        inside = self.domain(u, v)
        if np.any(inside):
            a = np.abs(u[inside]) * self.scale
            b = v[inside] * self.scale ** self.p
            out[inside] = self._log_integral(a, b) - self._log_norm
        return out.reshape(shape)[()]


class TwoPointCumulant(BivariateCumulant):
    """ X = +-1 with probability 1/2: psi(u, v) = log cosh(u) + v """

    def __init__(self, p):
        self.p = float(p)

    def eval(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        a = np.abs(u)
        return (a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0) + v)[()]


class EmpiricalCumulant(BivariateCumulant):
    """ Exact cumulant of the uniform law on `values` """

    CHUNK = 1 << 22

    def __init__(self, values, p):
        self.p = float(p)
        self.values = np.asarray(values, dtype=float)
        self.abs_p = np.abs(self.values) ** self.p

    def eval(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        shape = u.shape
        u, v = u.ravel(), v.ravel()
        out = np.empty(u.shape)
        rows = max(1, self.CHUNK // len(self.values))
        for s in range(0, len(u), rows):
            e = (u[s:s + rows, None] * self.values[None, :] +
                 v[s:s + rows, None] * self.abs_p[None, :])
            out[s:s + rows] = special.logsumexp(e, axis=1)
        return (out - math.log(len(self.values))).reshape(shape)[()]


class MonteCarloCumulant(BivariateCumulant):
    """
    Cumulant of a measure known only through its sampler. All evaluations
    share one growing pool of draws, so psi is a smooth function of (u, v)
    for a given pool; the pool doubles until the relative standard error of
    the mgf estimate is below `tolerance`.

    Args:
        `sampler` (callable) : sampler(stream, n) -> n draws
        `p` (float) : exponent of the |X|^p tilt
        `stream` (SeededStream) : owned by this object
    Kwargs:
        `tolerance` (float) : relative SE target of E exp(uX + v|X|^p)
            [default] - 1e-3
        `first_batch` (int) : initial pool size
            [default] - 2**14
        `max_pool` (int) : pool cap; exceeding it raises code 6
            [default] - 2**22

    """

    def __init__(self, sampler, p, stream, tolerance=1e-3, first_batch=1 << 14,
                 max_pool=1 << 22):
        self.sampler = sampler
        self.p = float(p)
        self.stream = stream
        self.tolerance = tolerance
        self.first_batch = first_batch
        self.max_pool = max_pool
        self._pool = np.empty(0)
        self._batches = 0
        self._lock = threading.Lock()

    def _pool_of(self, size):
        with self._lock:
            while len(self._pool) < size:
                batch = max(self.first_batch, len(self._pool))
                draws = self.sampler(self.stream.child(self._batches), batch)
                self._batches += 1
                # antithetic pairs interleaved: every even prefix is symmetric
                pairs = np.column_stack((draws, -draws)).ravel()
                self._pool = np.concatenate([self._pool, pairs])
            return self._pool[:size]

    def estimate(self, u, v):
        """ (psi(u, v), its standard error) for scalar u, v """
        size = 2 * self.first_batch
        while True:
            x = self._pool_of(size)
            with np.errstate(over='ignore', invalid='ignore'):
                lw = u * x + v * np.abs(x) ** self.p
            if not np.all(np.isfinite(lw)):
                raise LpcwError(1, 'mgf overflow at (u, v) = ({}, {})'
                                   .format(u, v))
            top = lw.max()
            w = np.exp(lw - top)
            # one term per pair, identical under u -> -u
            pair = 0.5 * (w[0::2] + w[1::2])
            mean = pair.mean()
            rel_se = pair.std() / (mean * math.sqrt(len(pair)))
            if rel_se <= self.tolerance:
                return math.log(mean) + top, rel_se
            if size >= self.max_pool:
                raise LpcwError(6, 'relative SE {:.3g} at (u, v) = ({}, {})'
                                   .format(rel_se, u, v),
                                partial=math.log(mean) + top)
            size *= 2

    def eval(self, u, v):
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        out = np.array([self.estimate(a, b)[0]
                        for a, b in zip(u.ravel(), v.ravel())])
        return out.reshape(u.shape)[()]


#############################################################################
# rho_p                                                                     #
#############################################################################

class RhoP(object):
    """
    The density rho_p(x) = c_p exp(-|x|^p / p).

    Args:
        `p` (float or PExponent) : exponent, p > 0

    """

    def __init__(self, p):
        self.exponent = as_exponent(p)
        p = self.p = self.exponent.p
        self.log_c_p = -math.log(p) / p - math.log(2.0) - lgamma(1.0 + 1.0 / p)
        self.c_p = math.exp(self.log_c_p)
        self.nu_p_sq = math.exp((2.0 / p) * math.log(p) + lgamma(1.0 + 3.0 / p) -
                                math.log(3.0) - lgamma(1.0 + 1.0 / p))
        self.cumulant = QuadratureCumulant(p, p)

    def log_pdf(self, x):
        return self.log_c_p - np.abs(x) ** self.p / self.p

    def pdf(self, x):
        return np.exp(self.log_pdf(x))

    def abs_moment(self, ell):
        return abs_moment(self.p, ell)

    def tail_cutoff(self, mass):
        """ L with P(|Z_p| > L) = mass """
        return (self.p * special.gammainccinv(1.0 / self.p, mass)) ** (1.0 / self.p)

    def sample(self, stream, n):
        return sample_rho_p(self, stream, n)

    def __repr__(self):
        return 'RhoP(p={!r})'.format(self.p)


def sample_rho_p(dist, stream, n):
    """
    Exact draws of Z_p: |Z_p|^p / p is Gamma(1/p), the sign is a fair coin.
    numpy's gamma sampler is a rejection method, so no approximation enters.

    """
    if n < 1:
        raise LpcwError(1, 'need at least one draw')
    p = dist.p
    rng = stream.generator
    g = rng.gamma(1.0 / p, size=n)
    sign = 2.0 * rng.integers(0, 2, size=n) - 1.0
    return sign * (p * g) ** (1.0 / p)


def psi_p(dist, t):
    """ psi_p(t) = log E exp(t Z_p), evaluated on |t| """
    t = np.asarray(t, dtype=float)
    if dist.p < 1:
        if np.any(t != 0):
            raise LpcwError(5, 'E exp(t Z_p) diverges for p < 1 and t != 0')
        return np.zeros(t.shape)[()]
    return dist.cumulant.eval(np.abs(t), 0.0)


def psi_bivariate(measure, u, v, full_output=False):
    """
    psi_rho(u, v) of a base measure; raises code 1 outside the measure's
    domain. For sampler-only measures `full_output` also returns the SE.

    """
    cumulant = measure.cumulant
    if not np.all(cumulant.domain(u, v)):
        raise LpcwError(1, '({}, {}) outside the cumulant domain of {}'
                           .format(u, v, measure.name))
    if isinstance(cumulant, MonteCarloCumulant):
        value, se = cumulant.estimate(float(u), float(v))
        return (value, se) if full_output else value
    value = cumulant.eval(u, v)
    return (value, 0.0) if full_output else value


def normalized_moment(p, ell, spec=None):
    """ nu_p^-ell E|Z_p|^ell, both moments by quadrature """
    dist = RhoP(p)
    m_ell = integrate(lambda x: abs(x) ** ell * dist.pdf(x), -np.inf, np.inf,
                      spec)
    m_2 = integrate(lambda x: x * x * dist.pdf(x), -np.inf, np.inf, spec)
    return m_ell / m_2 ** (ell / 2.0)


def moment_ratio_check(p, q, ell, spec=None):
    """
    Whether nu_p^-ell E|Z_p|^ell <= nu_q^-ell E|Z_q|^ell (decreasing in p)
    holds within quadrature tolerance.

    """
    if not (p >= q > 0 and ell >= 2):
        raise LpcwError(1, 'need p >= q > 0 and ell >= 2')
    lhs = normalized_moment(p, ell, spec)
    rhs = normalized_moment(q, ell, spec)
    return bool(lhs <= rhs + 1e-8 * max(1.0, abs(rhs)))


#############################################################################
# Base measures                                                             #
#############################################################################

@dataclass(frozen=True)
class BaseMeasure:
    """
    A symmetric law with E|X|^p = 1. `theta` is the user-declared constant
    of E exp(theta |X|^p) < inf; it is recorded, not verified.
    """
    name: str
    p: float
    sampler: Callable
    cumulant: BivariateCumulant
    second_moment: float
    p_moment: float = 1.0
    neg_moment_alpha: Optional[float] = None
    theta: Optional[float] = None

    def sample(self, stream, n):
        return self.sampler(stream, n)


def scaled_rho_measure(q, p, name=None):
    """ X = s Z_q with s chosen so that E|X|^p = 1 """
    q, p = float(q), float(p)
    base = RhoP(q)
    s = abs_moment(q, p) ** (-1.0 / p)

    def sampler(stream, n):
        return s * sample_rho_p(base, stream, n)
    if p < q:
        theta = 1.0
    elif p == q:
        theta = 0.5 / p
    else:
        theta = None
    return BaseMeasure(name=name or 'rho_{:g}@p={:g}'.format(q, p), p=p,
                       sampler=sampler,
                       cumulant=QuadratureCumulant(q, p, s),
                       second_moment=s * s * base.nu_p_sq,
                       neg_moment_alpha=0.5, theta=theta)


def rho_p_measure(p):
    return scaled_rho_measure(p, p, name='rho_p')


def gaussian_measure(p):
    return scaled_rho_measure(2.0, p, name='gaussian')


def rho1_measure(p):
    return scaled_rho_measure(1.0, p, name='rho_1')


def rademacher_measure(p):
    """ the two-point measure (delta_1 + delta_-1) / 2 """
    def sampler(stream, n):
        return 2.0 * stream.generator.integers(0, 2, size=n) - 1.0
    return BaseMeasure(name='rademacher', p=float(p), sampler=sampler,
                       cumulant=TwoPointCumulant(p), second_moment=1.0,
                       neg_moment_alpha=None, theta=1.0)


def empirical_measure(values, p, name='empirical'):
    """
    The symmetrized, rescaled empirical law of `values` (zeros dropped,
    since the measures here have no atom at 0).

    """
    values = np.asarray(values, dtype=float).ravel()
    values = values[values != 0]
    if len(values) == 0:
        raise LpcwError(1, 'empirical measure needs nonzero values')
    values = np.concatenate([values, -values])
    values = values / np.mean(np.abs(values) ** p) ** (1.0 / p)

    def sampler(stream, n):
        return stream.generator.choice(values, size=n)
    return BaseMeasure(name=name, p=float(p), sampler=sampler,
                       cumulant=EmpiricalCumulant(values, p),
                       second_moment=float(np.mean(values ** 2)),
                       theta=1.0)


def sampler_measure(sampler, p, stream, second_moment=None, tolerance=1e-3,
                    name='sampler'):
    """
    A measure given only by a sampler; the cumulant is estimated by Monte
    Carlo. The sampler is assumed to respect E|X|^p = 1 (see
    `check_measure`).

    """
    if second_moment is None:
        draws = sampler(stream.child(1 << 30), 1 << 18)
        second_moment = float(np.mean(draws ** 2))
    return BaseMeasure(name=name, p=float(p), sampler=sampler,
                       cumulant=MonteCarloCumulant(sampler, p, stream,
                                                   tolerance),
                       second_moment=second_moment)


def check_measure(measure, stream, n=1 << 18):
    """
    Statistical checks of the BaseMeasure contract: E|X|^p = 1 within 4 SE
    and symmetry (X and -X equidistributed, two-sample KS at 0.1%).
    Returns a dict with the statistics and a `passed` flag.

    """
    from scipy import stats

    x = measure.sample(stream.child(0), n)
    y = measure.sample(stream.child(1), n)
    ap = np.abs(x) ** measure.p
    se = ap.std() / math.sqrt(n)
    if se > 0:
        z_moment = (ap.mean() - 1.0) / se
    else:
        # |X|^p is constant
        z_moment = 0.0 if abs(ap.mean() - 1.0) < 1e-12 else np.inf
    ks = stats.ks_2samp(x, -y)
    return {'moment_z': float(z_moment), 'ks_pvalue': float(ks.pvalue),
            'passed': bool(abs(z_moment) < 4.0 and ks.pvalue > 1e-3)}


MEASURES = {
    'rho_p': rho_p_measure,
    'gaussian': gaussian_measure,
    'rademacher': rademacher_measure,
    'rho_1': rho1_measure,
}


def measure_by_name(name, p, values=None):
    """ Factory used by the CLI; 'file' needs `values` """
    if name == 'file':
        if values is None:
            raise LpcwError(1, 'measure "file" needs sample values')
        return empirical_measure(values, p, name='file')
    try:
        return MEASURES[name](p)
    except KeyError:
        raise LpcwError(1, 'unknown measure {!r}'.format(name))
