"""
oracle.py

Contains brute-force reference computations for the tests: small-n
partition functions by tensor Gauss-Legendre quadrature, exhaustive grid
maxima, the B(n,p) constrained maximum, and the classical Curie-Weiss fixed
point by bisection.

Nothing here calls the quadrature, optimizer or sampler of the rest of the
package, and nothing here draws random numbers.

"""
import itertools
import logging
import math

from dataclasses import dataclass, field

import numpy as np

from scipy import special

from .numerics import LpcwError, lgamma


logger = logging.getLogger(__name__)


@dataclass
class OracleReport:
    value: float
    resolution: float
    method: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.resolution > 0:
            raise LpcwError(1, 'oracle resolution must be positive')


#############################################################################
# Partition function                                                        #
#############################################################################

REFUSAL_EXPONENT = 40.0
TAIL_MASS = 1e-10


def _log_partition(n, p, beta, nodes, gamma, L, reweighted):
    s, w = np.polynomial.legendre.leggauss(nodes)
    s, w = 0.5 * (s + 1.0), 0.5 * w
    x1 = L * s ** gamma
    log_w1 = np.log(w * L * gamma * s ** (gamma - 1.0))
    log_rho1 = -x1 ** p / p

    grids = np.meshgrid(*([x1] * n), indexing='ij')
    mag = np.stack([g.ravel() for g in grids], axis=1)
    log_base = sum(np.meshgrid(*([log_w1 + log_rho1] * n),
                               indexing='ij')).ravel()

    t = np.mean(mag ** p, axis=1)
    logs_num = []
    for signs in itertools.product((1.0, -1.0), repeat=n):
        x = mag * np.array(signs)
        total = x.sum(axis=1)
        if reweighted:
            log_f = (-np.log(t) / p +
                     beta * total * total * t ** (-2.0 / p) / (2.0 * n))
        else:
            sigma = x / t[:, None] ** (1.0 / p)
            ssum = sigma.sum(axis=1)
            h = (ssum * ssum - np.sum(sigma * sigma, axis=1)) / (2.0 * n)
            log_f = beta * h
        logs_num.append(special.logsumexp(log_base + log_f))
    log_num = special.logsumexp(logs_num)
    log_den = n * math.log(2.0) + special.logsumexp(log_base)
    return log_num - log_den


def partition_quadrature(n, p, beta, nodes=64, reweighted=False):
    """
    Z_{n,p}(beta) for n <= 3 as a direct n-dimensional integral against
    prod rho_p(x_i) on [-L, L]^n, L cutting a tail mass of 1e-10.

    Each orthant uses a tensor Gauss-Legendre rule after x = L s^gamma,
    gamma = max(1, ceil(2/p)), which smooths the |x|^p cusp at 0 (two more
    powers for the reweighted integrand, singular at the origin). The value
    is divided by the same rule's integral of prod rho_p. `resolution` is
    the change against the rule with half the nodes.

    Args:
        `n` (int) : 1, 2 or 3
        `p` (float) : exponent
        `beta` (float) : inverse temperature
    Kwargs:
        `nodes` (int) : Gauss-Legendre nodes per axis
            [default] - 64
        `reweighted` (bool) : integrate the self-scaled form
            (T/n)^(-1/p) exp((beta/2n) S^2 (T/n)^(-2/p)) instead of
            exp(beta H_n); needs n >= 2

    """
    if n not in (1, 2, 3):
        raise LpcwError(1, 'partition_quadrature handles n <= 3, got {}'
                           .format(n))
    if not (p > 0 and beta >= 0):
        raise LpcwError(1, 'need p > 0 and beta >= 0')
    if reweighted and n < 2:
        raise LpcwError(1, 'the reweighted integrand diverges at n = 1')
    if p < 1 and n >= 2:
        pairs = max(k * (k - 1) / 2.0 * k ** (-2.0 / p)
                    for k in range(2, n + 1))
        growth = beta * n ** (2.0 / p - 1.0) * pairs
        if growth > REFUSAL_EXPONENT:
            raise LpcwError(9, 'beta H_n reaches {:.3g}; the integrand spans '
                               'more than e^{:g}'.format(growth,
                                                         REFUSAL_EXPONENT))
    gamma = max(1, int(math.ceil(2.0 / p))) + (2 if reweighted else 0)
    L = (p * special.gammainccinv(1.0 / p, TAIL_MASS / n)) ** (1.0 / p)
    log_z = _log_partition(n, p, beta, nodes, gamma, L, reweighted)
    log_half = _log_partition(n, p, beta, nodes // 2, gamma, L, reweighted)
    value = math.exp(log_z)
    resolution = max(abs(value - math.exp(log_half)),
                     np.finfo(float).eps * value)
    logger.debug('partition_quadrature n=%d p=%r beta=%r -> %r', n, p, beta,
                 value)
    return OracleReport(value=value, resolution=resolution,
                        method='gauss-legendre-{}'.format(nodes),
                        detail={'log_value': log_z, 'L': L, 'gamma': gamma,
                                'reweighted': reweighted})


#############################################################################
# Grid maxima                                                               #
#############################################################################

def grid_oracle_2d(f, box, step, chunk_rows=64):
    """
    Maximum of f over the grid of spacing `step` on `box` (one or two
    (lo, hi) pairs). f takes arrays; no refinement of any kind.

    """
    if not step > 0:
        raise LpcwError(1, 'step must be positive')
    axes = [np.arange(lo, hi + 0.5 * step, step) for lo, hi in box]
    best, argmax = -np.inf, None
    if len(axes) == 1:
        x = axes[0]
        for s in range(0, len(x), 1 << 20):
            with np.errstate(all='ignore'):
                vals = np.asarray(f(x[s:s + (1 << 20)]), dtype=float)
            vals = np.where(np.isnan(vals), -np.inf, vals)
            i = int(np.argmax(vals))
            if vals[i] > best:
                best, argmax = float(vals[i]), (float(x[s + i]),)
    elif len(axes) == 2:
        x, y = axes
        for s in range(0, len(x), chunk_rows):
            X, Y = np.meshgrid(x[s:s + chunk_rows], y, indexing='ij')
            with np.errstate(all='ignore'):
                vals = np.asarray(f(X.ravel(), Y.ravel()), dtype=float)
            vals = np.where(np.isnan(vals), -np.inf, vals)
            i = int(np.argmax(vals))
            if vals[i] > best:
                best = float(vals[i])
                argmax = (float(X.ravel()[i]), float(Y.ravel()[i]))
    else:
        raise LpcwError(1, 'grid_oracle_2d takes one or two axes')
    return OracleReport(value=best, resolution=step, method='grid',
                        detail={'argmax': argmax})


#############################################################################
# B(n, p)                                                                   #
#############################################################################

def _pair_sum(x):
    total = x.sum(axis=-1)
    return 0.5 * (total * total - np.sum(x * x, axis=-1))


def bnp_bruteforce(n, p, resolution=1e-3):
    """
    sup of sum_{i<j} x_i x_j over x_i >= 0 with sum x_i^p = 1, two ways:

    'full'      : every point of the simplex of s_i = x_i^p with spacing
                  `resolution`, faces included
    'two_value' : k coordinates equal to a, the rest equal to b = r a, over
                  k = 1..n and a grid of r in [0, 1]

    The reported value is the larger; both sit in `detail`.

    """
    if n not in (2, 3, 4):
        raise LpcwError(1, 'bnp_bruteforce handles n in 2..4, got {}'
                           .format(n))
    if not 0 < p < 1:
        raise LpcwError(1, '0 < p < 1 required, got {}'.format(p))
    m = int(round(1.0 / resolution))

    ks = np.stack([g.ravel() for g in
                   np.meshgrid(*([np.arange(m + 1)] * (n - 1)),
                               indexing='ij')], axis=1)
    ks = ks[ks.sum(axis=1) <= m]
    ks = np.concatenate([ks, (m - ks.sum(axis=1))[:, None]], axis=1)
    x = (ks / float(m)) ** (1.0 / p)
    full = _pair_sum(x)
    i = int(np.argmax(full))
    full_value = float(full[i])

    r = np.linspace(0.0, 1.0, m + 1)
    two_value, two_arg = -np.inf, None
    for k in range(1, n + 1):
        a = (k + (n - k) * r ** p) ** (-1.0 / p)
        vals = a * a * (k * (k - 1) / 2.0 + k * (n - k) * r +
                        (n - k) * (n - k - 1) / 2.0 * r * r)
        j = int(np.argmax(vals))
        if vals[j] > two_value:
            two_value, two_arg = float(vals[j]), (k, float(r[j]))

    return OracleReport(value=max(full_value, two_value),
                        resolution=resolution, method='simplex-grid+two-value',
                        detail={'full': full_value,
                                'full_argmax': x[i].tolist(),
                                'two_value': two_value,
                                'two_value_argmax': two_arg})


#############################################################################
# Classical Curie-Weiss                                                     #
#############################################################################

def cw_fixed_point(beta, iterations=200):
    """
    sup over y of -y^2/2 + log cosh(sqrt(beta) y) through the root of
    y = sqrt(beta) tanh(sqrt(beta) y), by bisection.

    """
    if not beta >= 0:
        raise LpcwError(1, 'beta must be non-negative')
    sb = math.sqrt(beta)
    if beta <= 1:
        return OracleReport(value=0.0, resolution=np.finfo(float).tiny,
                            method='bisection', detail={'y': 0.0})
    lo, hi = 1e-12, sb
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if sb * math.tanh(sb * mid) > mid:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    value = -0.5 * y * y + math.log(math.cosh(sb * y))
    return OracleReport(value=value, resolution=max(hi - lo, 1e-300),
                        method='bisection', detail={'y': y})


def beta_c_oracle(p):
    """ 1 / E Z_p^2 from the Gamma-function moment formula """
    return math.exp(lgamma(1.0 / p) - (2.0 / p) * math.log(p) -
                    lgamma(3.0 / p))
