"""
cli.py

Contains the `lpcw` command line: one argparse sub-command per computation,
machine-readable output (JSON by default, CSV on request) and the exit-code
convention 0 success / 1 failed check or computation error / 2 usage or
domain error.

    lpcw beta-c --p-grid 2:64:62
    lpcw free-energy --p 4 --beta-rel 3
    lpcw surface --p 4 --beta-rel 0.5 --format csv --out fig1.csv
    lpcw ghs-check --q 2 --p 4 --n 1000000 --seed 7

"""
import argparse
import csv
import io
import json
import logging
import math
import sys

from dataclasses import asdict, is_dataclass

import numpy as np

from . import free_energy, ghs, oracle, rho_dist, sphere_mc
from .numerics import LpcwError, SeededStream, init_debug_logging


logger = logging.getLogger(__name__)


#############################################################################
# Output                                                                    #
#############################################################################

def make_json_safe(obj):
    """ plain Python types all the way down """
    if is_dataclass(obj):
        return make_json_safe(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): make_json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [make_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return make_json_safe(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer, np.floating)):
        obj = obj.item()
    # JSON has no inf or nan
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True)
    if value is None:
        return ''
    return str(value)


def render(payload, fmt):
    """ JSON (sorted keys) or CSV; a dict payload becomes a one-row table """
    payload = make_json_safe(payload)
    if fmt == 'json':
        text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
        return text + '\n'
    rows = payload if isinstance(payload, list) else [payload]
    header = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(row.get(k)) for k in header])
    return buf.getvalue()


def emit(payload, args):
    text = render(payload, args.format)
    if args.out in (None, '-'):
        sys.stdout.write(text)
    else:
        with open(args.out, 'w', newline='') as f:
            f.write(text)


#############################################################################
# Argument helpers                                                          #
#############################################################################

def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError('expected a positive integer, got {}'
                                         .format(text))
    return value


def grid_spec(text):
    """ 'a:b:k' -> k evenly spaced points from a to b inclusive """
    try:
        a, b, k = text.split(':')
        return list(np.linspace(float(a), float(b), int(k)))
    except ValueError:
        raise argparse.ArgumentTypeError('expected a:b:k, got {}'.format(text))


def _p_values(args):
    values = list(args.p or []) + list(getattr(args, 'p_grid', None) or [])
    if not values:
        raise LpcwError(1, 'give --p or --p-grid')
    return values


def _beta(args, p):
    if args.beta_rel is not None:
        return args.beta_rel * free_energy.beta_c(p)
    if args.beta is None:
        raise LpcwError(1, 'give --beta or --beta-rel')
    return args.beta


def _measure(args, p):
    values = None
    if args.measure == 'file':
        if not args.measure_file:
            raise LpcwError(1, 'measure "file" needs --measure-file')
        try:
            values = np.loadtxt(args.measure_file).ravel()
        except (OSError, ValueError) as e:
            raise LpcwError(1, 'cannot read --measure-file {}: {}'
                               .format(args.measure_file, e))
    return rho_dist.measure_by_name(args.measure, p, values)


def _add_beta(parser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument('--beta', type=float, help='inverse temperature')
    group.add_argument('--beta-rel', type=float,
                       help='inverse temperature as a multiple of beta_c(p)')


def _add_measure(parser):
    parser.add_argument('--measure', default='rho_p',
                        choices=['rho_p', 'gaussian', 'rademacher', 'rho_1',
                                 'file'])
    parser.add_argument('--measure-file',
                        help='whitespace separated sample values '
                             '(--measure file)')


#############################################################################
# Commands                                                                  #
#############################################################################

def cmd_beta_c(args):
    return [{'p': p, 'beta_c': free_energy.beta_c(p)}
            for p in _p_values(args)], True


def cmd_free_energy(args):
    p = args.p[0]
    beta = _beta(args, p)
    result = free_energy.limiting_free_energy(p, beta, _measure(args, p))
    result['p'], result['beta'] = p, beta
    return result, True


def cmd_surface(args):
    p = args.p[0]
    if not p > 2:
        raise LpcwError(1, 'the G(z, w) surface needs p > 2')
    beta = _beta(args, p)
    G = free_energy.ghs_objective(_measure(args, p), p, beta)
    z, w = np.meshgrid(np.linspace(0.0, args.z_max, args.z_points),
                       np.linspace(0.0, args.w_max, args.w_points),
                       indexing='ij')
    values = G(z.ravel(), w.ravel())
    return [{'z': float(a), 'w': float(b), 'G': float(g)}
            for a, b, g in zip(z.ravel(), w.ravel(), values)], True


def cmd_tau(args):
    rows = []
    for p in _p_values(args):
        k, t = free_energy.tau(p)
        row = {'p': p, 'k': k, 'tau': t,
               'p_k_lower': free_energy.p_threshold(k - 1),
               'p_k_upper': free_energy.p_threshold(k)}
        if args.beta is not None:
            row['super_linear_constant'] = free_energy.super_linear_constant(
                p, args.beta)
        rows.append(row)
    return rows, True


def cmd_rate(args):
    p = args.p[0]
    measure = _measure(args, p)
    rate = free_energy.RateFunction(measure, debug=args.debug,
                                    debug_log_path=args.debug_log_path)
    beta = None
    if args.beta is not None or args.beta_rel is not None:
        beta = _beta(args, p)
    rows = []
    for y in np.linspace(args.y_min, args.y_max, args.y_points):
        for r in np.linspace(0.0, args.r_max, args.x_points):
            x = float(r * y ** (1.0 / p))
            row = {'x': x, 'y': float(y), 'I': rate.eval(x, y)}
            if beta is not None:
                row['I_F'] = rate.eval_F(x, y, beta)
            rows.append(row)
    return rows, True


def cmd_sample(args):
    stream = SeededStream(args.seed)
    p = args.p[0]
    if args.kind == 'sphere':
        sigma = sphere_mc.sample_sphere_batch(args.n, p, stream, args.count)
        h = sphere_mc.hamiltonian(sigma)
        constraint = np.mean(np.abs(sigma) ** p, axis=1)
        return [{'index': i, 'm': float(s.mean()), 'hamiltonian': float(e),
                 'constraint': float(c)}
                for i, (s, e, c) in enumerate(zip(sigma, h, constraint))], True
    if args.kind == 'rho':
        draws = rho_dist.sample_rho_p(rho_dist.RhoP(p), stream, args.n)
    else:
        if args.q is None:
            raise LpcwError(1, '--kind u needs --q')
        draws = ghs.sample_u(None, args.q, p, stream, args.n,
                             threads=args.threads)
    return [{'index': i, 'value': float(v)} for i, v in enumerate(draws)], True


def cmd_partition(args):
    p = args.p[0]
    beta = _beta(args, p)
    params = sphere_mc.GibbsParams(n=args.n, p=p, beta=beta)
    est = sphere_mc.estimate_partition(params, SeededStream(args.seed),
                                       args.samples, args.reweighted,
                                       threads=args.threads)
    result = asdict(est)
    passed = True
    if args.oracle:
        report = oracle.partition_quadrature(args.n, p, beta,
                                             reweighted=args.reweighted)
        z = (est.value - report.value) / max(est.std_error, report.resolution)
        result.update({'oracle_value': report.value,
                       'oracle_resolution': report.resolution,
                       'oracle_z': z})
        passed = abs(z) < 4.0
        result['failures'] = [] if passed else [
            'estimate differs from the quadrature oracle by {:.3g} SE'
            .format(z)]
    return result, passed


def cmd_clt(args):
    p = args.p[0]
    beta = _beta(args, p)
    params = sphere_mc.GibbsParams(n=args.n[0], p=p, beta=beta)
    report = sphere_mc.clt_test(params, SeededStream(args.seed), args.n,
                                args.samples, threads=args.threads)
    return report, report.passed


def cmd_ghs_check(args):
    stream = SeededStream(args.seed)
    if args.identity:
        x, y = args.identity
        residual = ghs.ghs_identity_check(args.p, x, y, args.method, stream,
                                          args.n)
        passed = residual < args.tol
        return {'p': args.p, 'x': x, 'y': y, 'residual': residual,
                'passed': passed,
                'failures': [] if passed else [
                    'residual {:.3g} >= {:.3g}'.format(residual, args.tol)]
                }, passed
    method = 'auto' if args.method in ('auto', 'quadrature') else 'process'
    report = ghs.product_identity_check(args.q, args.p, stream, args.n,
                                        method=method, threads=args.threads)
    return report, report.passed


def cmd_ghs_density(args):
    density = ghs.GhsDensity(args.q, args.p, debug=args.debug,
                             debug_log_path=args.debug_log_path)
    xs = list(args.x or []) + list(args.x_grid or [])
    if not xs:
        raise LpcwError(1, 'give --x or --x-grid')
    rows = []
    for x in xs:
        theta, residual = ghs.theta_mellin(density, x, full_output=True)
        closed = float(density.pdf(x)) if density.has_closed_form else None
        rows.append({'x': x, 'theta': float(theta), 'closed_form': closed,
                     'residual': float(residual)})
    return rows, True


def cmd_oracle(args):
    if args.kind == 'partition':
        p = _p_values(args)[0]
        report = oracle.partition_quadrature(args.n, p, _beta(args, p))
    elif args.kind == 'bnp':
        p = _p_values(args)[0]
        report = oracle.bnp_bruteforce(args.n, p, args.resolution)
        report.detail['closed_form'] = free_energy.b_np(args.n, p)
    else:
        if args.beta is None:
            raise LpcwError(1, '--kind cw needs --beta')
        report = oracle.cw_fixed_point(args.beta)
    return report, True


COMMANDS = {
    'beta-c': cmd_beta_c,
    'free-energy': cmd_free_energy,
    'surface': cmd_surface,
    'tau': cmd_tau,
    'rate': cmd_rate,
    'sample': cmd_sample,
    'partition': cmd_partition,
    'clt': cmd_clt,
    'ghs-check': cmd_ghs_check,
    'ghs-density': cmd_ghs_density,
    'oracle': cmd_oracle,
}


#############################################################################
# Parser                                                                    #
#############################################################################

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--format', choices=['json', 'csv'], default='json')
    common.add_argument('--seed', type=int, default=0,
                        help='seed of every random stream (default: 0)')
    common.add_argument('--out', help='output file (default: stdout)')
    common.add_argument('--threads', type=positive_int,
                        help='Monte Carlo workers (default: $LPCW_THREADS or 1)')
    common.add_argument('--debug', action='store_true',
                        help='write lpcw_debug.log')
    common.add_argument('--debug-log-path', default='.')

    parser = argparse.ArgumentParser(
        prog='lpcw',
        description='l^p-constrained Curie-Weiss model: critical '
                    'temperatures, free energies, samplers and oracles.')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    def command(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    def p_option(cmd, multiple=False, required=True):
        cmd.add_argument('--p', type=float, action='append',
                         required=required and not multiple)
        if multiple:
            cmd.add_argument('--p-grid', type=grid_spec)

    cmd = command('beta-c', 'critical inverse temperature beta_c(p)')
    p_option(cmd, multiple=True)

    cmd = command('free-energy', 'limiting free energy (regime dispatched)')
    p_option(cmd)
    _add_beta(cmd)
    _add_measure(cmd)

    cmd = command('surface', 'G(z, w) on a grid')
    p_option(cmd)
    _add_beta(cmd)
    _add_measure(cmd)
    cmd.add_argument('--z-max', type=float, default=8.0)
    cmd.add_argument('--w-max', type=float, default=3.0)
    cmd.add_argument('--z-points', type=positive_int, default=161)
    cmd.add_argument('--w-points', type=positive_int, default=61)

    cmd = command('tau', 'super-linear constant tau(p) for 0 < p < 1')
    p_option(cmd, multiple=True)
    cmd.add_argument('--beta', type=float)

    cmd = command('rate', 'rate function I(x, y) on a grid of the domain')
    p_option(cmd)
    _add_beta(cmd)
    _add_measure(cmd)
    cmd.add_argument('--y-min', type=float, default=0.25)
    cmd.add_argument('--y-max', type=float, default=2.0)
    cmd.add_argument('--y-points', type=positive_int, default=8)
    cmd.add_argument('--x-points', type=positive_int, default=8)
    cmd.add_argument('--r-max', type=float, default=0.9,
                     help='largest |x| / y^(1/p) on the grid')

    cmd = command('sample', 'sphere configurations, rho_p or U draws')
    p_option(cmd)
    cmd.add_argument('--kind', choices=['sphere', 'rho', 'u'],
                     default='sphere')
    cmd.add_argument('--n', type=positive_int, required=True,
                     help='dimension (sphere) or number of draws')
    cmd.add_argument('--count', type=positive_int, default=1,
                     help='number of sphere configurations')
    cmd.add_argument('--q', type=float)

    cmd = command('partition', 'Monte Carlo estimate of Z_{n,p}(beta)')
    p_option(cmd)
    _add_beta(cmd)
    cmd.add_argument('--n', type=positive_int, required=True)
    cmd.add_argument('--samples', type=positive_int, default=100000)
    cmd.add_argument('--reweighted', action='store_true')
    cmd.add_argument('--oracle', action='store_true',
                     help='compare with the quadrature oracle (n <= 3)')

    cmd = command('clt', 'Gibbs variance and kurtosis of sqrt(n) m')
    p_option(cmd)
    _add_beta(cmd)
    cmd.add_argument('--n', type=positive_int, nargs='+', required=True)
    cmd.add_argument('--samples', type=positive_int, default=200000)

    cmd = command('ghs-check', 'Z_p U_{q,p} against Z_q, or the GHS identity')
    cmd.add_argument('--q', type=float, default=2.0)
    cmd.add_argument('--p', type=float, required=True)
    cmd.add_argument('--n', type=positive_int, default=100000)
    cmd.add_argument('--method', default='auto',
                     choices=['auto', 'quadrature', 'mc', 'process'])
    cmd.add_argument('--identity', type=float, nargs=2, metavar=('X', 'Y'))
    cmd.add_argument('--tol', type=float, default=1e-3)

    cmd = command('ghs-density', 'theta_{q,p} by Mellin inversion')
    cmd.add_argument('--q', type=float, default=2.0)
    cmd.add_argument('--p', type=float, required=True)
    cmd.add_argument('--x', type=float, action='append')
    cmd.add_argument('--x-grid', type=grid_spec)

    cmd = command('oracle', 'brute-force reference values')
    cmd.add_argument('--kind', choices=['partition', 'bnp', 'cw'],
                     required=True)
    cmd.add_argument('--p', type=float, action='append')
    _add_beta(cmd)
    cmd.add_argument('--n', type=int, default=2)
    cmd.add_argument('--resolution', type=float, default=1e-3)
    return parser


def main(argv=None):
    """ Runs one command; returns the process exit code """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    if args.debug:
        init_debug_logging(args.debug_log_path)
    try:
        payload, passed = COMMANDS[args.command](args)
    except LpcwError as e:
        sys.stderr.write(json.dumps({'failures': [str(e)],
                                     'error_code': e.err_code},
                                    sort_keys=True) + '\n')
        return 2 if e.err_code == 1 else 1
    emit(payload, args)
    return 0 if passed else 1


if __name__ == '__main__':
    sys.exit(main())
