"""
numerics.py

Contains the numerical kernels shared by every other module of the package:
real and complex log-Gamma, adaptive quadrature (QUADPACK through scipy), a
vectorized double-exponential rule for log-space integrals, seeded random
streams, the grid-then-Nelder-Mead maximizer and a vectorized golden-section
search.

Also home of `LpcwError`, the `DebugLogging` mixin and `VariationalSolution`,
which the other modules import from here.

"""
import logging
import math
import os

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from scipy import integrate as sp_integrate
from scipy import optimize, special


logger = logging.getLogger(__name__)


class LpcwError(Exception):
    """
    Error raised when a computation cannot return a trustworthy value.

    Args:
        `error_code` (int): key into `ERROR_DICT`
    Kwargs:
        `detail` (str): human readable description of the failure
        `partial` : best estimate available when the computation stopped
                    (e.g. the non-converged quadrature value)
    """

    ERROR_DICT = {
        1: 'Domain Error',
        2: 'Quadrature Did Not Converge',
        3: 'Empty Effective Domain',
        4: 'Boundary Active After Growth',
        5: 'Divergent Integral',
        6: 'Monte Carlo Tolerance Exceeded',
        7: 'Truncation Infeasible',
        8: 'Mellin Residual Exceeded',
        9: 'Oracle Refused',
        10: 'Estimator Overflow',
        11: 'Upper Bound Exceeded'
    }

    def __init__(self, error_code, detail=None, partial=None):
        super(LpcwError, self).__init__(error_code, detail)
        self.err_code = error_code
        self.detail = detail
        self.partial = partial
        try:
            err_str = self.ERROR_DICT[error_code]
            self.err_msg = '{0} [{1}]'.format(err_str, self.err_code)
        except KeyError:
            self.err_msg = 'Unknown Error [{0}]'.format(error_code)
        if detail:
            self.err_msg += ': {0}'.format(detail)

    def __str__(self):
        return self.err_msg


#############################################################################
# Debug functions                                                           #
#############################################################################

_FORMAT = '%(asctime)s %(levelname)s %(message)s'


def _attachFileHandler(log, fp):
    for hdlr in log.handlers:
        if getattr(hdlr, 'baseFilename', None) == os.path.abspath(fp):
            return
    hdlr = logging.FileHandler(fp)
    hdlr.setFormatter(logging.Formatter(_FORMAT))
    log.addHandler(hdlr)
    log.setLevel(logging.DEBUG)


def init_debug_logging(debug_log_path='.', name='lpcw'):
    """ Sends everything the package logs to `<name>_debug.log` """
    fp = debug_log_path.rstrip('/') + '/' + name + '_debug.log'
    _attachFileHandler(logging.getLogger(name), fp)


class DebugLogging(object):
    """
    Mixin for the long-running objects of the package. Subclasses set
    `self.debug` in their constructor and call `initDebugLogging` when it is
    True; `logCall` and `logDebug` are no-ops otherwise.
    """

    debug = False

    def initDebugLogging(self, debug_log_path):
        """ Initialize logger and log file handler """

        self.logger = logging.getLogger(self.__class__.__name__)
        fp = (debug_log_path.rstrip('/') + '/' + self.__class__.__name__ +
              '_debug.log')
        _attachFileHandler(self.logger, fp)

    def logCall(self, f_name, f_locals):
        """ Logs function params at call """

        if self.debug:
            f_locals = {k: v for k, v in f_locals.items() if k != 'self'}
            self.logger.debug('-> {}: {}'.format(f_name, f_locals))

    def logDebug(self, msg):
        """ Handles debug logging if self.debug == True """

        if self.debug:
            self.logger.debug(msg)

    @contextmanager
    def errorContext(self, f_name):
        """ Logs an `LpcwError` raised inside the block, then re-raises it """
        try:
            yield
        except LpcwError as e:
            self.logDebug('{}: {}'.format(f_name, e))
            raise


#############################################################################
# Configuration                                                             #
#############################################################################

@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise LpcwError(1, 'quadrature tolerances must be positive')
        if self.max_subdivisions < 1:
            raise LpcwError(1, 'max_subdivisions must be at least 1')


@dataclass(frozen=True)
class OptimizerSpec:
    """
    Search box and effort of `maximize`.

    Kwargs:
        `domain_box` (tuple) : one (lo, hi) pair per coordinate
        `grid_points_per_axis` (int) : grid stage resolution
            [default] - 64
        `refine_iterations` (int) : Nelder-Mead iteration cap
            [default] - 200
        `value_tol` (float) : Nelder-Mead x and f tolerance
            [default] - 1e-10
    """
    domain_box: Tuple[Tuple[float, float], ...] = ((0.0, 1.0),)
    grid_points_per_axis: int = 64
    refine_iterations: int = 200
    value_tol: float = 1e-10

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.domain_box)
        object.__setattr__(self, 'domain_box', box)
        if self.grid_points_per_axis < 2:
            raise LpcwError(1, 'grid_points_per_axis must be at least 2')
        if self.value_tol <= 0:
            raise LpcwError(1, 'value_tol must be positive')
        for lo, hi in box:
            if not lo < hi:
                raise LpcwError(1, 'empty box axis ({}, {})'.format(lo, hi))

    def with_box(self, domain_box):
        return replace(self, domain_box=tuple(domain_box))


@dataclass
class VariationalSolution:
    value: float
    argmax: Tuple[float, ...]
    grid_gap: float
    refine_steps: int
    diagnostics: dict = field(default_factory=dict)


#############################################################################
# Special functions                                                         #
#############################################################################

def log_gamma(z):
    """
    Principal branch of log Gamma for Re(z) > 0 (scipy `loggamma`).

    Args:
        `z` (complex or array) : argument(s), all with positive real part
    Returns:
        complex scalar or complex array shaped like `z`

    """
    z = np.asarray(z, dtype=complex)
    if np.any(~(z.real > 0)):
        raise LpcwError(1, 'log_gamma needs Re(z) > 0')
    return special.loggamma(z)[()]


def lgamma(x):
    """ Real log Gamma for x > 0 """
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise LpcwError(1, 'lgamma needs x > 0')
    return special.gammaln(x)[()]


#############################################################################
# Quadrature                                                                #
#############################################################################

def _quad(f, lo, hi, spec):
    out = sp_integrate.quad(f, lo, hi, epsabs=spec.abs_tol,
                            epsrel=spec.rel_tol, limit=spec.max_subdivisions,
                            full_output=1)
    value, error = out[0], out[1]
    if len(out) > 3 and error > max(spec.abs_tol, spec.rel_tol * abs(value)):
        raise LpcwError(2, out[3].strip().splitlines()[0], partial=value)
    return value, error


def integrate(f, lo, hi, spec=None, full_output=False):
    """
    Adaptive quadrature of a scalar function over (lo, hi); infinite
    endpoints are handled by QUADPACK's variable transform. Intervals
    straddling 0 are split there.

    Args:
        `f` (callable) : scalar integrand
        `lo`, `hi` (float) : limits, +-inf allowed
    Kwargs:
        `spec` (QuadratureSpec) : tolerances
            [default] - QuadratureSpec()
        `full_output` (bool) : also return the error estimate
    Returns:
        value, or (value, error estimate) if `full_output`

    """
    spec = spec or QuadratureSpec()
    if lo < 0 < hi:
        v1, e1 = _quad(f, lo, 0.0, spec)
        v2, e2 = _quad(f, 0.0, hi, spec)
        value, error = v1 + v2, e1 + e2
    else:
        value, error = _quad(f, lo, hi, spec)
    if full_output:
        return value, error
    return value


@lru_cache(maxsize=8)
def tanh_sinh_rule(h=1.0 / 64, t_max=4.0):
    """
    Nodes and weights of the double-exponential rule on [-1, 1].

    Kwargs:
        `h` (float) : step in the t variable
            [default] - 1/64
        `t_max` (float) : the rule covers t in [-t_max, t_max]
            [default] - 4

    """
    t = np.arange(-t_max, t_max + 0.5 * h, h)
    s = 0.5 * math.pi * np.sinh(t)
    nodes = np.tanh(s)
    weights = h * 0.5 * math.pi * np.cosh(t) / np.cosh(s) ** 2
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def log_integrate_window(g, a, b, rule=None):
    """
    log of the integral of exp(g(x)) over [a_i, b_i] for a vector of
    windows, by the double-exponential rule.

    Args:
        `g` (callable) : maps an (M, K) array of abscissae to exponents; row
                         i belongs to window i
        `a`, `b` (array) : window ends, shape (M,)
    Returns:
        array of shape (M,)

    """
    nodes, weights = rule or tanh_sinh_rule()
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    half = 0.5 * (b - a)
    x = a[:, None] + half[:, None] * (1.0 + nodes[None, :])
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        vals = g(x) + np.log(weights)[None, :]
        vals = np.where(np.isnan(vals), -np.inf, vals)
        out = special.logsumexp(vals, axis=1) + np.log(half)
    return out


#############################################################################
# Seeded random streams                                                     #
#############################################################################

class SeededStream(object):
    """
    Reproducible random stream: PCG64 seeded through a SeedSequence whose
    spawn key is (stream_id, child indices...). A stream is single-owner;
    parallel consumers take distinct `child(i)` streams.

    Kwargs:
        `seed` (int) : 64-bit seed
            [default] - 0
        `stream_id` (int) : 64-bit stream selector
            [default] - 0

    """

    def __init__(self, seed=0, stream_id=0, spawn_key=None):
        if seed < 0 or stream_id < 0:
            raise LpcwError(1, 'seed and stream_id must be non-negative')
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        if spawn_key is None:
            spawn_key = (self.stream_id,)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, index):
        """ Independent sub-stream number `index` """
        return SeededStream(self.seed, self.stream_id,
                            self.spawn_key + (int(index),))

    def __repr__(self):
        return 'SeededStream(seed={}, spawn_key={})'.format(self.seed,
                                                            self.spawn_key)


def worker_count(threads=None):
    """ `threads`, else $LPCW_THREADS, else 1 """
    if threads is None:
        threads = os.environ.get('LPCW_THREADS', 1)
    try:
        threads = int(threads)
    except ValueError:
        raise LpcwError(1, 'LPCW_THREADS must be an integer')
    if threads < 1:
        raise LpcwError(1, 'thread count must be at least 1')
    return threads


def map_chunks(fn, n_chunks, threads=None):
    """ [fn(0), ..., fn(n_chunks - 1)] in chunk order, maybe on threads """
    workers = min(worker_count(threads), max(n_chunks, 1))
    if workers == 1:
        return [fn(i) for i in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_chunks)))


#############################################################################
# Optimizers                                                                #
#############################################################################

def _evaluator(f, vectorized):
    if vectorized:
        def evaluate(points):
            return np.asarray(f(*points.T), dtype=float).reshape(len(points))
    else:
        def evaluate(points):
            return np.array([f(*pt) for pt in points], dtype=float)

    def cleaned(points):
        with np.errstate(invalid='ignore'):
            vals = evaluate(points)
        return np.where(np.isnan(vals) | (vals == np.inf), -np.inf, vals)
    return cleaned


def maximize(f, spec, vectorized=False, start=None):
    """
    Grid scan over `spec.domain_box` followed by a bounded Nelder-Mead
    refinement from the best grid point. Grid ties go to the
    lexicographically smallest point; NaN and +-inf count as -inf.

    Args:
        `f` (callable) : f(x1, ..., xd) -> float, or arrays -> array when
                         `vectorized`
        `spec` (OptimizerSpec) : box and effort
    Kwargs:
        `vectorized` (bool) : evaluate the whole grid in one call
        `start` (sequence) : skip the grid and refine from this point
    Returns:
        `VariationalSolution`

    """
    box = np.array(spec.domain_box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    step = (hi - lo) / (spec.grid_points_per_axis - 1)
    evaluate = _evaluator(f, vectorized)
    n_evals = 0

    if start is not None:
        x0 = np.clip(np.asarray(start, dtype=float), lo, hi)
        f0 = evaluate(x0[None, :])[0]
        n_evals += 1
        grid_gap = float('nan')
        if f0 == -np.inf:
            return maximize(f, spec, vectorized=vectorized)
    else:
        axes = [np.linspace(l, h, spec.grid_points_per_axis)
                for l, h in box]
        mesh = np.meshgrid(*axes, indexing='ij')
        points = np.stack([m.ravel() for m in mesh], axis=1)
        values = evaluate(points)
        n_evals += len(points)
        best = int(np.argmax(values))
        f0 = values[best]
        if f0 == -np.inf:
            raise LpcwError(3, 'objective is -inf on the whole grid')
        x0 = points[best]
        if len(values) > 1:
            second = np.partition(values, -2)[-2]
            grid_gap = float(f0 - second)
        else:
            grid_gap = float('inf')

    def negative(x):
        val = evaluate(np.clip(x, lo, hi)[None, :])[0]
        return -val if np.isfinite(val) else np.inf

    simplex = [x0]
    for axis in range(len(x0)):
        vertex = x0.copy()
        if x0[axis] + step[axis] <= hi[axis]:
            vertex[axis] += step[axis]
        else:
            vertex[axis] -= step[axis]
        simplex.append(vertex)
    res = optimize.minimize(
        negative, x0, method='Nelder-Mead', bounds=list(zip(lo, hi)),
        options={'maxiter': spec.refine_iterations,
                 'xatol': spec.value_tol, 'fatol': spec.value_tol,
                 'initial_simplex': np.array(simplex)})
    n_evals += res.nfev

    if np.isfinite(res.fun) and -res.fun > f0:
        value, argmax = -res.fun, np.clip(res.x, lo, hi)
    else:
        value, argmax = f0, x0
    logger.debug('maximize: box=%s value=%r argmax=%s', spec.domain_box,
                 value, argmax)
    return VariationalSolution(
        value=float(value), argmax=tuple(float(a) for a in argmax),
        grid_gap=grid_gap, refine_steps=int(res.nit),
        diagnostics={'grid_value': float(f0), 'evaluations': n_evals,
                     'box': spec.domain_box})


def active_faces(argmax, box, points_per_axis, growable):
    """ (axis, 'lo' | 'hi') for each growable face within one cell of argmax """
    active = []
    for axis, (lo, hi) in enumerate(box):
        faces = growable[axis]
        if not faces:
            continue
        cell = (hi - lo) / (points_per_axis - 1)
        if 'hi' in faces and hi - argmax[axis] <= cell:
            active.append((axis, 'hi'))
        if 'lo' in faces and argmax[axis] - lo <= cell:
            active.append((axis, 'lo'))
    return active


def maximize_growing(f, spec, growable, max_growth=4, vectorized=False):
    """
    `maximize` with adaptive box growth: a growable face the maximizer sits
    within one grid cell of is pushed out so the axis doubles in width, at
    most `max_growth` times.

    Args:
        `f`, `spec` : as for `maximize`
        `growable` (sequence) : per axis, a string holding 'hi' and/or 'lo',
                                or None for a fixed axis
    Kwargs:
        `max_growth` (int) : number of doublings allowed
            [default] - 4

    """
    box = [list(b) for b in spec.domain_box]
    for growth in range(max_growth + 1):
        sol = maximize(f, spec.with_box(tuple(tuple(b) for b in box)),
                       vectorized=vectorized)
        active = active_faces(sol.argmax, box, spec.grid_points_per_axis,
                               growable)
        if not active:
            sol.diagnostics['growths'] = growth
            return sol
        if growth == max_growth:
            break
        for axis, face in active:
            lo, hi = box[axis]
            if face == 'hi':
                box[axis][1] = lo + 2.0 * (hi - lo)
            else:
                box[axis][0] = hi - 2.0 * (hi - lo)
        logger.debug('maximize_growing: active faces %s, box -> %s', active,
                     box)
    raise LpcwError(4, 'maximizer still on the boundary of {}'.format(box),
                    partial=sol.value)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_minimize(f, lo, hi, iterations=80):
    """
    Vectorized golden-section search: minimizes f elementwise over the
    brackets [lo, hi]. NaN counts as +inf.

    Args:
        `f` (callable) : maps an array of abscissae to an array of values
        `lo`, `hi` (array) : bracket ends, broadcast together
    Kwargs:
        `iterations` (int) : number of bracket reductions
            [default] - 80
    Returns:
        (argmin array, min array)

    """
    a, b = np.broadcast_arrays(np.asarray(lo, dtype=float),
                               np.asarray(hi, dtype=float))
    a, b = a.copy(), b.copy()

    def value(x):
        with np.errstate(invalid='ignore', over='ignore'):
            v = np.asarray(f(x), dtype=float)
        return np.where(np.isnan(v), np.inf, v)

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = value(c), value(d)
    for _ in range(iterations):
        left = fc < fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        keep = np.where(left, c, d)
        fkeep = np.where(left, fc, fd)
        new = np.where(left, b - _INVPHI * (b - a), a + _INVPHI * (b - a))
        fnew = value(new)
        c = np.where(left, new, keep)
        fc = np.where(left, fnew, fkeep)
        d = np.where(left, keep, new)
        fd = np.where(left, fkeep, fnew)
    first = fc <= fd
    return np.where(first, c, d), np.where(first, fc, fd)
