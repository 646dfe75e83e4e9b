"""
ghs.py

Contains the generalized Hubbard-Stratonovich machinery: the positive
multiplier U_{q,p} with Z_p * U_{q,p} distributed as Z_q (0 < q < p).

`GhsDensity`      : density theta of U_{q,p}; Mellin inversion of the moment
                    function M(s) = E U^s, closed form when p = 2q, tail law
`AdditiveProcess` : the independent-increment process Y_t (Y_t distributed
                    as t log Gamma(t, 1)), simulated exactly from marked
                    Poisson points by thinning; U = scale * exp(Y_1/q - Y_1/p)

plus the sampler `sample_u` and the two report-producing identity checks.

"""
import logging
import math

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from scipy import optimize, special, stats

from .numerics import (DebugLogging, LpcwError, QuadratureSpec, integrate,
                       lgamma, log_gamma, map_chunks)
from .rho_dist import RhoP, abs_moment, psi_p, sample_rho_p


logger = logging.getLogger(__name__)


#############################################################################
# Density of U_{q,p}                                                        #
#############################################################################

class GhsDensity(DebugLogging):
    """
    Law of U_{q,p}, 0 < q < p.

    Args:
        `q`, `p` (float) : exponents, 0 < q < p
    Kwargs:
        `residual_tol` (float) : allowed imaginary residual of the Mellin
                                 integral
            [default] - 1e-8
        `debug` (bool) : log every Mellin evaluation to
                         'GhsDensity_debug.log' at `debug_log_path`
            [default] - False
        `debug_log_path` : directory of the debug log
            [default] - '.' (cwd)

    """

    C_BOUNDS = (-0.5, 1e6)
    T_MIN = 60.0
    T_MAX = 2e4
    RICHARDSON_TOL = 1e-9

    def __init__(self, q, p, residual_tol=1e-8, debug=False,
                 debug_log_path='.'):
        q, p = float(q), float(p)
        if not 0 < q < p:
            raise LpcwError(1, 'GHS density needs 0 < q < p, got q={}, p={}'
                               .format(q, p))
        self.q, self.p = q, p
        self.residual_tol = residual_tol
        self.tail_exponent = p * q / (p - q)
        self.tail_constant = (p - q) / (p * q)
        self.log_scale = math.log(q) / q - math.log(p) / p
        # p = 2q: U^(2q) / (2q) is Gamma(1/(2q) + 1/2)
        if abs(p - 2.0 * q) <= 1e-12 * p:
            self.shape = 0.5 / q + 0.5
        else:
            self.shape = None

        self.debug = debug
        if self.debug:
            self.initDebugLogging(debug_log_path)

    @property
    def has_closed_form(self):
        return self.shape is not None

    def log_moment(self, s):
        """ log E U^s, complex s with Re(s) > -1 """
        q, p = self.q, self.p
        s = np.asarray(s, dtype=complex)
        return (s * (math.log(q) / q - math.log(p) / p) +
                log_gamma((1.0 + s) / q) - lgamma(1.0 / q) -
                log_gamma((1.0 + s) / p) + lgamma(1.0 / p))

    def _log_moment_real(self, c):
        q, p = self.q, self.p
        return (c * self.log_scale + special.gammaln((1.0 + c) / q) -
                special.gammaln(1.0 / q) - special.gammaln((1.0 + c) / p) +
                special.gammaln(1.0 / p))

    #########################################################################
    # Closed form (p = 2q)                                                  #
    #########################################################################

    def _require_closed_form(self):
        if self.shape is None:
            raise LpcwError(1, 'no closed form for (q, p) = ({}, {})'
                               .format(self.q, self.p))

    def closed_form_log_pdf(self, u):
        self._require_closed_form()
        k, r = self.shape, 2.0 * self.q
        u = np.asarray(u, dtype=float)
        with np.errstate(divide='ignore'):
            return ((1.0 - k) * math.log(r) + (r * k - 1.0) * np.log(u) -
                    u ** r / r - lgamma(k))[()]

    def cdf(self, u):
        self._require_closed_form()
        r = 2.0 * self.q
        u = np.asarray(u, dtype=float)
        return special.gammainc(self.shape, np.maximum(u, 0.0) ** r / r)[()]

    def ppf(self, prob):
        self._require_closed_form()
        r = 2.0 * self.q
        return (r * special.gammaincinv(self.shape, prob)) ** (1.0 / r)

    #########################################################################
    # Mellin inversion                                                      #
    #########################################################################

    def _mellin_sum(self, logx, c, h, T):
        k = np.arange(-int(math.ceil(T / h)), int(math.ceil(T / h)) + 1)
        t = h * k
        log_f = (-1j * t * logx + self.log_moment(c + 1j * t) -
                 self._log_moment_real(c))
        f = np.exp(log_f)
        full = h * f.sum()
        even = 2.0 * h * f[k % 2 == 0].sum()
        edge = max(abs(f[0]), abs(f[-1]))
        return full, even, edge

    def mellin_log_density(self, x):
        """
        log theta(x) by inverting M along Re(s) = c, with c at the saddle of
        x^(-c-1) M(c) so that far tails come out in log space.

        Returns:
            (log theta(x), imaginary residual, Richardson difference)

        """
        logx = math.log(x)
        res = optimize.minimize_scalar(
            lambda c: -(c + 1.0) * logx + self._log_moment_real(c),
            bounds=self.C_BOUNDS, method='bounded',
            options={'xatol': 1e-10})
        c = float(res.x)
        curvature = (special.polygamma(1, (1.0 + c) / self.q) / self.q ** 2 -
                     special.polygamma(1, (1.0 + c) / self.p) / self.p ** 2)
        sigma = 1.0 / math.sqrt(curvature)
        h = max(1e-3, 0.004 * sigma)
        T = max(self.T_MIN, 14.0 * sigma)
        while True:
            full, even, edge = self._mellin_sum(logx, c, h, T)
            if edge < 1e-15 * abs(full) or T >= self.T_MAX:
                break
            T *= 2.0
        richardson = abs(full - even) / abs(full)
        if richardson > self.RICHARDSON_TOL:
            h *= 0.5
            full, even, _ = self._mellin_sum(logx, c, h, T)
            richardson = abs(full - even) / abs(full)
        if full.real <= 0:
            raise LpcwError(8, 'Mellin integral lost all precision at x={}'
                               .format(x))
        residual = abs(full.imag) / abs(full.real)
        log_theta = (-(c + 1.0) * logx + self._log_moment_real(c) +
                     math.log(full.real / (2.0 * math.pi)))
        self.logDebug('mellin x={!r} c={!r} T={!r} h={!r} residual={!r} '
                      'richardson={!r}'.format(x, c, T, h, residual,
                                               richardson))
        return log_theta, residual, richardson

    def log_density(self, x):
        """ log theta, closed form when p = 2q, else Mellin inversion """
        if self.has_closed_form:
            return self.closed_form_log_pdf(x)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([self.mellin_log_density(xi)[0] if xi > 0 else -np.inf
                        for xi in x])
        return out[()] if out.size > 1 else out[0]

    def pdf(self, x):
        return np.exp(self.log_density(x))

    def mass_check(self, spec=None, mellin=False):
        """ integral of theta over (0, inf) """
        if mellin:
            f = lambda u: theta_mellin(self, u) if u > 0 else 0.0
        else:
            f = lambda u: float(self.pdf(u)) if u > 0 else 0.0
        return integrate(f, 0.0, np.inf, spec or QuadratureSpec(1e-9, 1e-9))

    def tail_slope(self, xs, mellin=False):
        """ least-squares slope of log(-log theta(x)) against log x """
        xs = np.asarray(xs, dtype=float)
        if mellin:
            log_theta = np.array([self.mellin_log_density(x)[0] for x in xs])
        else:
            log_theta = np.array([self.log_density(x) for x in xs])
        return float(np.polyfit(np.log(xs), np.log(-log_theta), 1)[0])

    def __repr__(self):
        return 'GhsDensity(q={!r}, p={!r})'.format(self.q, self.p)


def theta_mellin(density, x, full_output=False):
    """
    theta(x) by contour integration of the moment function, whatever closed
    form exists. Raises code 8 when the imaginary residual exceeds the
    density's `residual_tol`.

    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0):
        raise LpcwError(1, 'theta is evaluated at x > 0')
    vals, residuals = [], []
    for xi in xs:
        log_theta, residual, _ = density.mellin_log_density(xi)
        if residual > density.residual_tol:
            raise LpcwError(8, 'imaginary residual {:.3g} at x={}'
                               .format(residual, xi), partial=math.exp(log_theta))
        vals.append(math.exp(log_theta))
        residuals.append(residual)
    vals, residuals = np.array(vals), np.array(residuals)
    if np.ndim(x) == 0:
        vals, residuals = vals[0], residuals[0]
    return (vals, residuals) if full_output else vals


#############################################################################
# Additive process                                                          #
#############################################################################

def tail_variance(m, a, b):
    """ sum over k > m of f_k(b)^2 - f_k(a)^2, f_k(x) = x / (k + x) """
    return (b * b * special.polygamma(1, m + 1.0 + b) -
            a * a * special.polygamma(1, m + 1.0 + a))


def tail_third_cumulant(m, a, b):
    """ third cumulant of the neglected summands on (a, b] """
    return (-b ** 3 * special.polygamma(2, m + 1.0 + b) +
            a ** 3 * special.polygamma(2, m + 1.0 + a))


@dataclass(frozen=True)
class AdditiveProcessConfig:
    """
    Kwargs:
        `t_points` (tuple) : increasing positive times
        `truncation_m` (int) : number of summands V^(k) simulated; None
                               picks the smallest power of two meeting
                               `tail_tolerance`
        `poisson_window` (float) : points below it are replaced by their
                                   exact aggregate; None means t_points[0]
        `compensate_tail` (bool) : replace the neglected summands by a
                                   Gaussian of the same variance
            [default] - True
        `tail_tolerance` (float) : bound on the neglected third cumulant
                                   (variance when not compensating)
            [default] - 1e-4
    """
    t_points: Tuple[float, ...] = (0.25, 0.5)
    truncation_m: Optional[int] = None
    poisson_window: Optional[float] = None
    compensate_tail: bool = True
    tail_tolerance: float = 1e-4

    def __post_init__(self):
        t = tuple(float(x) for x in self.t_points)
        object.__setattr__(self, 't_points', t)
        if not t or t[0] <= 0 or any(b <= a for a, b in zip(t, t[1:])):
            raise LpcwError(1, 't_points must be positive and increasing')
        if self.truncation_m is not None and self.truncation_m < 1:
            raise LpcwError(1, 'truncation_m must be at least 1')
        if self.poisson_window is not None and not (
                0 < self.poisson_window <= t[0]):
            raise LpcwError(1, 'poisson_window must lie in (0, t_points[0]]')
        if not self.tail_tolerance > 0:
            raise LpcwError(1, 'tail_tolerance must be positive')

    def residual(self, m):
        t = self.t_points[-1]
        if self.compensate_tail:
            return tail_third_cumulant(m, 0.0, t)
        return tail_variance(m, 0.0, t)


class AdditiveProcess(DebugLogging):
    """
    The process Y_t = -U_t - Y + t digamma(t + 1), U_t the centered sum of
    the V^(k), each V^(k) the mark sum of a Poisson process of intensity
    k / (x (k + x)) with Exp(mean x / (k + x)) marks.

    Args:
        `config` (AdditiveProcessConfig)
    Kwargs:
        `chunk` (int) : draws simulated per sub-stream
            [default] - 4096
        `threads` : worker count (see numerics.worker_count)
        `debug`, `debug_log_path` : as for GhsDensity

    """

    MAX_M = 1 << 20

    def __init__(self, config, chunk=4096, threads=None, debug=False,
                 debug_log_path='.'):
        self.config = config
        self.chunk = chunk
        self.threads = threads

        self.debug = debug
        if self.debug:
            self.initDebugLogging(debug_log_path)

        if config.truncation_m is None:
            m = 1
            while config.residual(m) > config.tail_tolerance:
                m *= 2
                if m > self.MAX_M:
                    raise LpcwError(7, 'no truncation below {} meets {}'
                                       .format(self.MAX_M,
                                               config.tail_tolerance))
        else:
            m = config.truncation_m
            if config.residual(m) > config.tail_tolerance:
                raise LpcwError(7, 'truncation_m={} leaves residual {:.3g} > '
                                   '{:.3g}'.format(m, config.residual(m),
                                                   config.tail_tolerance))
        self.m = m
        self.k = np.arange(1, m + 1, dtype=float)
        self.logDebug('AdditiveProcess: m={} residual={!r}'.format(
            m, config.residual(m)))

    def _f_sum(self, t):
        return float(np.sum(t / (self.k + t)))

    def _tail(self, rng, n, a, b):
        if not self.config.compensate_tail:
            return np.zeros(n)
        return rng.standard_normal(n) * math.sqrt(tail_variance(self.m, a, b))

    def _jumps(self, rng, n, a, b):
        """ sum over k <= m of V^(k)_b - V^(k)_a, by thinning against 1/x """
        m = self.m
        counts = rng.poisson(math.log(b / a), size=(n, m))
        owner = np.repeat(np.arange(n * m), counts.ravel())
        total = len(owner)
        x = a * (b / a) ** rng.random(total)
        k = self.k[owner % m]
        accept = rng.random(total) * (k + x) < k
        marks = rng.exponential(size=total) * (x / (k + x))
        return np.bincount(owner // m, weights=marks * accept, minlength=n)

    def _increment(self, rng, n, a, b):
        """ U_b - U_a """
        return (self._jumps(rng, n, a, b) - (self._f_sum(b) - self._f_sum(a)) +
                self._tail(rng, n, a, b))

    def _centering(self, t):
        return t * special.digamma(t + 1.0)

    def sample_paths(self, stream, n):
        """
        Y at every time of `config.t_points`, shape (n, len(t_points)). The
        exponential variable Y shared by all times is sampled here.

        """
        self.logCall('sample_paths', locals())
        t_points = self.config.t_points
        eps = self.config.poisson_window or t_points[0]
        n_chunks = -(-n // self.chunk)

        def run(i):
            rng = stream.child(i).generator
            size = min(self.chunk, n - i * self.chunk)
            base = rng.exponential(size=(size, self.m)) @ (eps / (self.k + eps))
            u = base - self._f_sum(eps) + self._tail(rng, size, 0.0, eps)
            prev = eps
            out = np.empty((size, len(t_points)))
            for j, t in enumerate(t_points):
                if t > prev:
                    u = u + self._increment(rng, size, prev, t)
                    prev = t
                out[:, j] = u
            y = rng.exponential(size=size)
            centering = np.array([self._centering(t) for t in t_points])
            return -out - y[:, None] + centering[None, :]

        with self.errorContext('sample_paths'):
            return np.concatenate(map_chunks(run, n_chunks, self.threads))

    def sample_increment(self, stream, n, t_lo, t_hi):
        """ Y_{t_hi} - Y_{t_lo}; the exponential Y cancels and is not drawn """
        self.logCall('sample_increment', locals())
        if not 0 < t_lo < t_hi:
            raise LpcwError(1, 'need 0 < t_lo < t_hi')
        n_chunks = -(-n // self.chunk)
        drift = self._centering(t_hi) - self._centering(t_lo)

        def run(i):
            rng = stream.child(i).generator
            size = min(self.chunk, n - i * self.chunk)
            return drift - self._increment(rng, size, t_lo, t_hi)

        with self.errorContext('sample_increment'):
            return np.concatenate(map_chunks(run, n_chunks, self.threads))


def _open_uniform(rng, n):
    return (rng.integers(0, 1 << 53, size=n) + 0.5) / float(1 << 53)


def sample_u(config, q, p, stream, n, method='auto', threads=None):
    """
    Draws of U_{q,p}.

    Args:
        `config` (AdditiveProcessConfig or None) : truncation settings for
                                                   the process path; its
                                                   t_points are replaced by
                                                   (1/p, 1/q)
        `q`, `p` (float) : 0 < q < p
        `stream` (SeededStream)
        `n` (int) : number of draws
    Kwargs:
        `method` (str) : 'auto' (closed form when p = 2q, else process),
                         'closed_form' or 'process'

    """
    density = GhsDensity(q, p)
    if n < 1:
        raise LpcwError(1, 'need at least one draw')
    if method == 'auto':
        method = 'closed_form' if density.has_closed_form else 'process'
    if method == 'closed_form':
        return density.ppf(_open_uniform(stream.generator, n))
    if method != 'process':
        raise LpcwError(1, 'unknown sampling method {!r}'.format(method))
    config = replace(config or AdditiveProcessConfig(),
                     t_points=(1.0 / p, 1.0 / q), poisson_window=None)
    process = AdditiveProcess(config, threads=threads)
    increment = process.sample_increment(stream, n, 1.0 / p, 1.0 / q)
    return np.exp(density.log_scale + increment)


#############################################################################
# Identity checks                                                           #
#############################################################################

PSI_CHUNK = 8192


@dataclass
class ProductIdentityReport:
    q: float
    p: float
    n: int
    ks_statistic: float
    ks_pvalue: float
    moment_zscores: dict
    exact_moment_zscores: dict
    passed: bool
    failures: list = field(default_factory=list)


def product_identity_check(q, p, stream, n, config=None, method='auto',
                           alpha=1e-3, threads=None):
    """
    Compares Z_p * U_{q,p} with Z_q: two-sample KS and z-scores of the even
    moments 2, 4, 6, 8 (against Z_q draws, and against the exact moments).
    The check passes when the KS p-value exceeds `alpha` and the exact
    second and fourth moment z-scores are below 4.

    """
    q, p = float(q), float(p)
    if not 0 < q < p:
        raise LpcwError(1, 'product identity needs 0 < q < p')
    z_p = sample_rho_p(RhoP(p), stream.child(0), n)
    u = sample_u(config, q, p, stream.child(1), n, method, threads)
    z_q = sample_rho_p(RhoP(q), stream.child(2), n)
    prod = z_p * u
    ks = stats.ks_2samp(prod, z_q)

    zs, exact = {}, {}
    for ell in (2, 4, 6, 8):
        a, b = prod ** ell, z_q ** ell
        zs[ell] = float((a.mean() - b.mean()) /
                        math.sqrt(a.var() / n + b.var() / n))
        exact[ell] = float((a.mean() - abs_moment(q, ell)) /
                           (a.std() / math.sqrt(n)))
    failures = []
    if not ks.pvalue > alpha:
        failures.append('ks p-value {:.3g} <= {:.3g}'.format(ks.pvalue, alpha))
    for ell in (2, 4):
        if not abs(exact[ell]) < 4.0:
            failures.append('moment {} z-score {:.3g}'.format(ell, exact[ell]))
    logger.debug('product_identity_check q=%r p=%r ks=%r', q, p, ks)
    return ProductIdentityReport(q=q, p=p, n=n,
                                 ks_statistic=float(ks.statistic),
                                 ks_pvalue=float(ks.pvalue),
                                 moment_zscores=zs, exact_moment_zscores=exact,
                                 passed=not failures, failures=failures)


def ghs_identity_check(p, x, y, method='auto', stream=None, n_draws=100000,
                       config=None, spec=None):
    """
    Relative residual of
        y^(-1/p) exp(x^2 y^(-2/p)) = c_p E_U int exp(sqrt(2) x z U - y|z|^p/p) dz
    with U = U_{2,p}. The inner integral equals
    y^(-1/p) exp(psi_p(sqrt(2) x U y^(-1/p))); the outer expectation is a
    quadrature over theta ('quadrature') or an average over U draws ('mc').
    'auto' uses U = 1 at p = 2 and quadrature when theta has a closed form.

    """
    p = float(p)
    if p < 2:
        raise LpcwError(1, 'the GHS identity needs p >= 2')
    if not y > 0:
        raise LpcwError(1, 'the GHS identity needs y > 0')
    rho = RhoP(p)
    scale = y ** (-1.0 / p)
    left = scale * math.exp(x * x * scale * scale)
    s = math.sqrt(2.0) * x * scale

    if p == 2:
        right = scale * math.exp(psi_p(rho, s))
    else:
        density = GhsDensity(2.0, p)
        if method == 'auto':
            method = 'quadrature' if density.has_closed_form else 'mc'
        if method == 'quadrature':
            def integrand(u):
                if u <= 0:
                    return 0.0
                return math.exp(float(density.log_density(u)) +
                                float(psi_p(rho, s * u)))
            right = scale * integrate(integrand, 0.0, np.inf,
                                      spec or QuadratureSpec(1e-10, 1e-10))
        elif method == 'mc':
            if stream is None:
                raise LpcwError(1, 'the Monte Carlo side needs a stream')
            u = sample_u(config, 2.0, p, stream, n_draws)
            psi = np.concatenate([psi_p(rho, s * u[i:i + PSI_CHUNK])
                                  for i in range(0, len(u), PSI_CHUNK)])
            right = scale * float(np.mean(np.exp(psi)))
        else:
            raise LpcwError(1, 'unknown method {!r}'.format(method))
    return abs(right - left) / left
