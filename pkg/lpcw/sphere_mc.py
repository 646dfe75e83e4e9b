"""
sphere_mc.py

Contains the Monte Carlo side of the l^p Curie-Weiss model: uniform draws on
the l^p sphere S_{n,p} = {sigma : (1/n) sum |sigma_i|^p = 1}, estimators of
the partition function Z_{n,p}(beta) and of the reweighted Z-hat, and
importance-sampled magnetization statistics with the CLT check.

The Gibbs measure is reached by importance sampling from the uniform sphere
measure (weights exp(beta H_n)), every configuration paired with its mirror
image -sigma.

"""
import logging
import math

from dataclasses import dataclass, field, replace

import numpy as np

from scipy import special

from .numerics import DebugLogging, LpcwError, map_chunks
from .rho_dist import PExponent, RhoP, as_exponent


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpinConfig:
    sigma: np.ndarray
    n: int
    p: PExponent

    def __post_init__(self):
        if abs(np.mean(np.abs(self.sigma) ** self.p.p) - 1.0) > 1e-12:
            raise LpcwError(1, 'configuration is off the l^p sphere')

    @property
    def magnetization(self):
        return float(np.mean(self.sigma))


@dataclass(frozen=True)
class GibbsParams:
    n: int
    p: PExponent
    beta: float

    def __post_init__(self):
        object.__setattr__(self, 'p', as_exponent(self.p))
        if self.n < 2:
            raise LpcwError(1, 'the Gibbs measure needs n >= 2, got {}'
                               .format(self.n))
        if not self.beta >= 0:
            raise LpcwError(1, 'beta must be non-negative, got {!r}'
                               .format(self.beta))


@dataclass
class McEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int
    log_value: float = float('nan')
    log_std_error: float = float('nan')


@dataclass
class MagnetizationSummary:
    weighted_mean: float
    variance: float
    variance_se: float
    kurtosis: float
    kurtosis_se: float
    ess: float
    n_samples: int
    histogram: np.ndarray
    bin_edges: np.ndarray
    mass_near_zero: float
    low_ess: bool
    seed: int


@dataclass
class CltReport:
    p: float
    beta: float
    rows: list
    passed: bool
    failures: list = field(default_factory=list)


def lp_norm(x, p):
    """ ((1/n) sum |x_i|^p)^(1/p) along the last axis """
    return np.mean(np.abs(x) ** p, axis=-1) ** (1.0 / p)


def hamiltonian(sigma):
    """ H_n = (1/n) sum_{i<j} sigma_i sigma_j along the last axis """
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[-1]
    s = sigma.sum(axis=-1)
    return (s * s - np.sum(sigma * sigma, axis=-1)) / (2.0 * n)


def _rho_p_block(rng, rows, n, p):
    g = rng.gamma(1.0 / p, size=(rows, n))
    sign = 2.0 * rng.integers(0, 2, size=(rows, n)) - 1.0
    return sign * (p * g) ** (1.0 / p)


def sample_sphere_batch(n, p, stream, rows):
    """ `rows` independent uniform points of S_{n,p}, shape (rows, n) """
    p = as_exponent(p).p
    x = _rho_p_block(stream.generator, rows, n, p)
    return x / lp_norm(x, p)[:, None]


def sample_sphere(n, p, stream):
    """
    Uniform point of S_{n,p}: i.i.d. rho_p coordinates divided by their
    normalized l^p norm.

    """
    if n < 1:
        raise LpcwError(1, 'n must be at least 1')
    p = as_exponent(p)
    sigma = sample_sphere_batch(n, p, stream, 1)[0]
    return SpinConfig(sigma=sigma, n=n, p=p)


#############################################################################
# Sampler                                                                   #
#############################################################################

class GibbsSampler(DebugLogging):
    """
    Chunked Monte Carlo over S_{n,p}. Chunk i always draws from
    `stream.child(i)` and holds at most `MAX_CHUNK_VALUES` spin values, so
    the output depends only on the seed, never on the worker count.

    Args:
        `params` (GibbsParams)
    Kwargs:
        `threads` (int) : worker count (see numerics.worker_count)
        `debug` (bool) : log to 'GibbsSampler_debug.log'
            [default] - False
        `debug_log_path` : directory of the debug log
            [default] - '.' (cwd)

    """

    MAX_CHUNK_VALUES = 1 << 22
    HIST_BINS = 201
    HIST_RANGE = (-1.5, 1.5)
    NEAR_ZERO = 0.05
    LOW_ESS_FRACTION = 0.01

    def __init__(self, params, threads=None, debug=False, debug_log_path='.'):
        self.params = params
        self.threads = threads
        self.rows_per_chunk = max(1, self.MAX_CHUNK_VALUES // params.n)

        self.debug = debug
        if self.debug:
            self.initDebugLogging(debug_log_path)

    def _chunked(self, fn, total, stream):
        n_chunks = -(-total // self.rows_per_chunk)

        def run(i):
            rows = min(self.rows_per_chunk, total - i * self.rows_per_chunk)
            return fn(stream.child(i), rows)
        parts = map_chunks(run, n_chunks, self.threads)
        return tuple(np.concatenate(a) for a in zip(*parts))

    def sphere_stats(self, stream, rows):
        """ (H_n, m) for `rows` uniform configurations """
        n, p = self.params.n, self.params.p.p

        def chunk(sub, r):
            sigma = sample_sphere_batch(n, p, sub, r)
            return hamiltonian(sigma), sigma.mean(axis=1)
        return self._chunked(chunk, rows, stream)

    def reweighted_log_terms(self, stream, rows):
        """ log of (T/n)^(-1/p) exp((beta/2n) S^2 (T/n)^(-2/p)) over rho_p draws """
        n, p, beta = self.params.n, self.params.p.p, self.params.beta

        def chunk(sub, r):
            x = _rho_p_block(sub.generator, r, n, p)
            t = np.mean(np.abs(x) ** p, axis=1)
            s = x.sum(axis=1)
            with np.errstate(over='ignore', invalid='ignore'):
                out = (-np.log(t) / p +
                       beta * s * s * t ** (-2.0 / p) / (2.0 * n))
            return (out,)
        return self._chunked(chunk, rows, stream)[0]

    #########################################################################
    # Estimators                                                            #
    #########################################################################

    def partition(self, stream, n_samples, reweighted=False):
        self.logCall('partition', locals())
        params = self.params
        if params.p.p < 1 and params.n > 12:
            logger.warning('p=%g < 1 with n=%d: the estimator variance grows '
                           'like exp(n^(2/p-1))', params.p.p, params.n)
        with self.errorContext('partition'):
            if reweighted:
                log_w = self.reweighted_log_terms(stream, n_samples)
            else:
                h, _ = self.sphere_stats(stream, n_samples)
                log_w = params.beta * h
            if not np.all(np.isfinite(log_w)):
                raise LpcwError(10, 'non-finite log weight (p={}, n={})'
                                    .format(params.p.p, params.n))
            top = log_w.max()
            w = np.exp(log_w - top)
            mean = w.mean()
            rel_se = w.std() / (mean * math.sqrt(n_samples))
            log_value = math.log(mean) + top
            if log_value > 709.0:
                raise LpcwError(10, 'Z overflows a double; see partial',
                                partial=log_value)
            value = math.exp(log_value)
        self.logDebug('partition: log Z={!r} rel_se={!r}'.format(log_value,
                                                                 rel_se))
        return McEstimate(value=value, std_error=value * rel_se,
                          n_samples=n_samples, seed=stream.seed,
                          log_value=log_value, log_std_error=rel_se)

    def magnetization(self, stream, n_samples):
        self.logCall('magnetization', locals())
        params = self.params
        pairs = max(1, n_samples // 2)
        with self.errorContext('magnetization'):
            h, m = self.sphere_stats(stream, pairs)
        log_w = params.beta * h
        w = np.exp(log_w - log_w.max())
        total = 2.0 * w.sum()

        # the pair (sigma, -sigma) shares its weight; odd moments cancel
        up, down = np.sum(w * m), np.sum(w * -m)
        weighted_mean = (up + down) / total

        x2 = params.n * m * m
        variance = 2.0 * np.sum(w * x2) / total
        fourth = 2.0 * np.sum(w * x2 * x2) / total
        kurtosis = fourth / variance ** 2
        ess_pairs = w.sum() ** 2 / np.sum(w * w)
        ess = 2.0 * ess_pairs
        variance_se = variance * math.sqrt(2.0 / ess_pairs)
        kurtosis_se = math.sqrt(24.0 / ess_pairs)

        edges = np.linspace(self.HIST_RANGE[0], self.HIST_RANGE[1],
                            self.HIST_BINS + 1)
        hist, _ = np.histogram(np.concatenate([m, -m]), bins=edges,
                               weights=np.concatenate([w, w]))
        hist = hist / total
        near_zero = 2.0 * np.sum(w[np.abs(m) < self.NEAR_ZERO]) / total
        low_ess = ess < self.LOW_ESS_FRACTION * 2 * pairs
        if low_ess:
            logger.warning('effective sample size %.1f below %g%% of %d',
                           ess, 100 * self.LOW_ESS_FRACTION, 2 * pairs)
        return MagnetizationSummary(
            weighted_mean=float(weighted_mean), variance=float(variance),
            variance_se=float(variance_se), kurtosis=float(kurtosis),
            kurtosis_se=float(kurtosis_se), ess=float(ess),
            n_samples=2 * pairs, histogram=hist, bin_edges=edges,
            mass_near_zero=float(near_zero), low_ess=bool(low_ess),
            seed=stream.seed)


def estimate_partition(params, stream, n_samples, reweighted=False,
                       threads=None):
    """
    Z_{n,p}(beta) = E exp(beta H_n(sigma)) over the uniform sphere, or with
    `reweighted` the self-scaled form
    Z-hat = E (T/n)^(-1/p) exp((beta/2n) S^2 (T/n)^(-2/p)) over i.i.d. rho_p
    coordinates (S the sum, T the sum of |X_i|^p).

    """
    return GibbsSampler(params, threads).partition(stream, n_samples,
                                                   reweighted)


def reweighted_partition_at_zero(n, p):
    """ Z-hat at beta = 0: (n/p)^(1/p) Gamma((n-1)/p) / Gamma(n/p) """
    return math.exp(math.log(n / p) / p + special.gammaln((n - 1.0) / p) -
                    special.gammaln(n / float(p)))


def estimate_free_energy(params, stream, n_samples, reweighted=False,
                         threads=None):
    """ ((1/n) log Z, its delta-method standard error) """
    est = estimate_partition(params, stream, n_samples, reweighted, threads)
    return est.log_value / params.n, est.log_std_error / params.n


def magnetization_stats(params, stream, n_samples, threads=None):
    """ Gibbs statistics of m = (1/n) sum sigma_i; see MagnetizationSummary """
    return GibbsSampler(params, threads).magnetization(stream, n_samples)


def clt_test(params, stream, n_grid, n_samples=200000, rel_tol=0.05,
             threads=None):
    """
    For each n in `n_grid`, the Gibbs variance of sqrt(n) m against
    (beta_c(p) - beta)^-1 (relative tolerance `rel_tol`) and its kurtosis
    against 3 (4 standard errors).

    """
    p, beta = params.p.p, params.beta
    if p < 2:
        raise LpcwError(1, 'the CLT check needs p >= 2')
    beta_c = 1.0 / RhoP(p).nu_p_sq
    if not beta < beta_c:
        raise LpcwError(1, 'the CLT check needs beta < beta_c(p) = {!r}'
                           .format(beta_c))
    target = 1.0 / (beta_c - beta)
    rows, failures = [], []
    for i, n in enumerate(n_grid):
        summary = magnetization_stats(replace(params, n=n), stream.child(i),
                                      n_samples, threads)
        rel_err = abs(summary.variance - target) / target
        kurtosis_z = (summary.kurtosis - 3.0) / summary.kurtosis_se
        rows.append({'n': n, 'variance': summary.variance, 'target': target,
                     'relative_error': rel_err, 'kurtosis': summary.kurtosis,
                     'kurtosis_z': kurtosis_z, 'ess': summary.ess})
        if rel_err > rel_tol:
            failures.append('n={}: variance {:.6g} vs {:.6g}'.format(
                n, summary.variance, target))
        if abs(kurtosis_z) > 4.0:
            failures.append('n={}: kurtosis z-score {:.3g}'.format(
                n, kurtosis_z))
    return CltReport(p=p, beta=beta, rows=rows, passed=not failures,
                     failures=failures)
