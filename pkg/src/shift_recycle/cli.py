"""Command line harness: run a solver mode over a problem and write CSVs.

``shift-recycle run`` writes ``history.csv`` and ``summary.csv`` to the
output directory; ``shift-recycle compare A.cfg B.cfg`` runs two
configurations and prints matvec ratios.
"""
import argparse
import configparser
import csv
import io
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .approx import solve_family_recursive
from .gmres import ResidualLog, SolveParams, restarted_gmres, shifted_gmres
from .linalg import Operator, ShiftRecycleError
from .multideflation import (FamilyBuildFailed, build_family,
                             multi_deflation_shifted_rgmres)
from .problems import ProblemSpec
from .recycling import recycled_gmres, transfer_recycle

log = logging.getLogger(__name__)

MODES = ('gmres', 'sgmres', 'rgmres', 'repeated-rgmres', 'srgmres-approx',
         'srgmres-multideflation')
RECYCLING = ('rgmres', 'repeated-rgmres', 'srgmres-approx', 'srgmres-multideflation')
HISTORY_HEADER = ['system_id', 'shift', 'cycle', 'iteration', 'matvecs_cumulative',
                  'residual_norm']
SUMMARY_HEADER = ['mode', 'system', 'shift', 'converged', 'total_matvecs']


class ConfigError(ShiftRecycleError, ValueError):
    pass


@dataclass
class RunConfig:
    problem: ProblemSpec
    mode: str
    m: int = 30
    k: int = 0
    tol: float = 1e-8
    max_cycles: int = 500
    out: str = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError('unknown mode %r (choose from %s)' % (self.mode, ', '.join(MODES)))
        if not 0 < self.tol < 1:
            raise ConfigError('tol must lie in (0, 1)')
        if self.m < 1 or self.max_cycles < 1:
            raise ConfigError('m and max-cycles must be positive')
        if self.mode in RECYCLING:
            if not 1 <= self.k < self.m:
                raise ConfigError('recycling modes need 1 <= k < m')

    @property
    def params(self):
        k = self.k if self.mode in RECYCLING else 0
        return SolveParams(m=self.m, tol=self.tol, max_cycles=self.max_cycles, k=k)


@dataclass
class RunResult:
    mode: str
    history: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    total_matvecs: int = 0
    solutions: list = field(default_factory=list)     # per matrix: {shift: x}

    @property
    def converged(self):
        return all(row[3] for row in self.summary)

    def history_csv(self):
        return _csv([HISTORY_HEADER] + [[sid, fmt_shift(s), c, it, mv, '%.17g' % r]
                                        for sid, s, c, it, mv, r in self.history])

    def summary_csv(self):
        rows = [[mode, sid, fmt_shift(s), int(ok), mv] for mode, sid, s, ok, mv in self.summary]
        rows.append([self.mode, 'all', '', int(self.converged), self.total_matvecs])
        return _csv([SUMMARY_HEADER] + rows)


def fmt_shift(s):
    s = complex(s)
    if s.imag == 0:
        return repr(s.real)
    return '%r%s%rj' % (s.real, '+' if s.imag >= 0 else '-', abs(s.imag))


def parse_shift(text):
    text = text.strip().replace(' ', '')
    try:
        v = complex(text.replace('i', 'j'))
    except ValueError:
        raise ConfigError('cannot parse shift %r' % text) from None
    return v.real if v.imag == 0 else v


def _csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator='\n').writerows(rows)
    return buf.getvalue()


def _solve_matrix(op, b, shifts, cfg, recycle):
    """Solve one member of the sequence for every shift.

    Returns ``(xs, recycle, log)`` with ``xs`` keyed by shift.
    """
    p = cfg.params
    lg = ResidualLog()
    all_shifts = [0.0] + list(shifts)
    mode = cfg.mode
    if mode == 'gmres':
        xs = {}
        for i, s in enumerate(all_shifts):
            xs[s], _ = restarted_gmres(op.shifted(s), b, p, log_=lg, system=i, shift=s)
        return xs, None, lg
    if mode == 'sgmres':
        xs, lg = shifted_gmres(op, b, shifts, p, log_=lg)
        return xs, None, lg
    if mode == 'rgmres':
        xs = {}
        for i, s in enumerate(all_shifts):
            xs[s], _, _ = recycled_gmres(op.shifted(s), b, None, p, log_=lg, system=i, shift=s)
        return xs, None, lg
    if mode == 'repeated-rgmres':
        xs = {}
        for i, s in enumerate(all_shifts):
            rec = recycle.shifted(s) if recycle is not None else None
            xs[s], rec, _ = recycled_gmres(op.shifted(s), b, rec, p, log_=lg, system=i, shift=s)
            recycle = rec.shifted(-s) if rec is not None else None
        return xs, recycle, lg
    if mode == 'srgmres-multideflation' and recycle is not None:
        try:
            family = build_family(op, all_shifts, recycle.U)
        except FamilyBuildFailed as exc:
            log.warning('%s; falling back to approximate collinearity', exc)
        else:
            return multi_deflation_shifted_rgmres(op, b, shifts, family, p, log_=lg)
    return solve_family_recursive(op, b, shifts, recycle, p, log_=lg)


def run(cfg):
    """Run ``cfg`` and return a :class:`RunResult`.

    Every solution is checked against a residual formed from scratch; a
    system counts as converged only if that residual meets ``tol``.
    """
    mats = cfg.problem.matrices()
    b = cfg.problem.rhs_vector()
    bnorm = np.linalg.norm(b)
    shifts = [s for s in cfg.problem.shifts if s != 0]
    nsys = len(shifts) + 1
    op = Operator(mats[0])
    recycle = None
    res = RunResult(cfg.mode)
    for idx, A in enumerate(mats):
        op = op.with_matrix(A)
        if recycle is not None:
            recycle = transfer_recycle(op, recycle)
        xs, recycle, lg = _solve_matrix(op, b, shifts, cfg, recycle)
        res.solutions.append(xs)
        base = idx * nsys
        last = {}
        for e in lg.entries:
            sid = base + e.system
            res.history.append((sid, e.shift, e.cycle, e.iterations, e.matvecs, e.residual))
            last[e.system] = e.matvecs
        check = Operator(A)
        for i, s in enumerate([0.0] + shifts):
            r = b - check.shifted(s).matvec(xs[s])
            ok = bool(np.linalg.norm(r) / bnorm <= cfg.tol)
            res.summary.append((cfg.mode, base + i, s, ok, last.get(i, op.matvecs)))
    res.total_matvecs = op.matvecs
    return res


def write_outputs(res, out):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, 'history.csv'), 'w', newline='') as fh:
        fh.write(res.history_csv())
    with open(os.path.join(out, 'summary.csv'), 'w', newline='') as fh:
        fh.write(res.summary_csv())


def compare(cfg_a, cfg_b):
    """Run both configurations and join their summaries.

    Returns ``(rows, res_a, res_b)``; each row is ``(system, shift,
    matvecs_a, matvecs_b, ratio)`` with ``ratio = matvecs_a / matvecs_b``
    and a final ``'all'`` row for the totals.
    """
    workers = max(1, int(os.environ.get('SHIFT_RECYCLE_THREADS', '1') or 1))
    with ThreadPoolExecutor(max_workers=min(2, workers)) as pool:
        fa, fb = pool.submit(run, cfg_a), pool.submit(run, cfg_b)
        res_a, res_b = fa.result(), fb.result()
    by_b = {row[1]: row for row in res_b.summary}
    rows = []
    for row in res_a.summary:
        other = by_b.get(row[1])
        if other is None:
            continue
        rows.append((row[1], row[2], row[4], other[4], _ratio(row[4], other[4])))
    rows.append(('all', '', res_a.total_matvecs, res_b.total_matvecs,
                 _ratio(res_a.total_matvecs, res_b.total_matvecs)))
    return rows, res_a, res_b


def _ratio(a, b):
    return a / b if b else float('nan')


def compare_csv(rows, mode_a, mode_b):
    out = [['system', 'shift', 'matvecs_%s' % mode_a, 'matvecs_%s' % mode_b, 'ratio']]
    for sid, s, a, b, r in rows:
        out.append([sid, fmt_shift(s) if s != '' else '', a, b, '%.6g' % r])
    return _csv(out)


# --- argument and config handling -------------------------------------------

_KEYS = ('matrix', 'problem', 'shifts', 'mode', 'm', 'k', 'tol', 'max_cycles', 'seed',
         'sequence', 'out', 'kappa', 'rhs')


def read_config_file(path):
    """Flat ``key = value`` file; keys mirror the long flags."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_string('[run]\n' + fh.read(), source=path)
    except OSError as exc:
        raise ConfigError('cannot read config %s: %s' % (path, exc)) from None
    except configparser.Error as exc:
        raise ConfigError('bad config %s: %s' % (path, exc)) from None
    out = {}
    for key, value in parser['run'].items():
        key = key.replace('-', '_')
        if key not in _KEYS:
            raise ConfigError('unknown config key %r in %s' % (key, path))
        out[key] = value
    return out


def _add_run_flags(p):
    p.add_argument('--matrix', action='append', help='Matrix Market file (repeat for a sequence)')
    p.add_argument('--problem', help='generated problem, e.g. bidiagonal:1000')
    p.add_argument('--shifts', help='comma-separated shifts, e.g. "0.01,0.1,1,10"')
    p.add_argument('--mode', help='one of: ' + ', '.join(MODES))
    p.add_argument('--m', type=int)
    p.add_argument('--k', type=int)
    p.add_argument('--tol', type=float)
    p.add_argument('--max-cycles', dest='max_cycles', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--sequence', type=int, help='number of systems in the sequence')
    p.add_argument('--kappa', type=float, help='assemble I - kappa*D from each --matrix')
    p.add_argument('--rhs', help='ones, unit or seeded-random')
    p.add_argument('--out', help='output directory')
    p.add_argument('--config', help='key = value file; flags override it')


def build_config(values):
    """``RunConfig`` from a dict of raw values (strings or typed)."""
    v = dict(values)
    try:
        shifts = tuple(parse_shift(s) for s in str(v.get('shifts') or '').split(',') if s.strip())
        matrix = v.get('matrix')
        if isinstance(matrix, str):
            matrix = [p.strip() for p in matrix.split(',') if p.strip()]
        seed = int(v.get('seed') or 0)
        rhs = v.get('rhs') or 'ones'
        if matrix:
            if v.get('problem'):
                raise ConfigError('give either --matrix or --problem, not both')
            kappa = v.get('kappa')
            problem = ProblemSpec(kind='qcd-assembled' if kappa is not None else 'matrix-market',
                                  paths=tuple(matrix), shifts=shifts, rhs=rhs, seed=seed,
                                  sequence=len(matrix),
                                  kappa=float(kappa) if kappa is not None else 0.0)
        else:
            spec = v.get('problem') or ''
            kind, _, size = spec.partition(':')
            if kind != 'bidiagonal' or not size:
                raise ConfigError('unknown problem %r (use bidiagonal:N or --matrix)' % spec)
            problem = ProblemSpec(kind='bidiagonal', n=int(size), shifts=shifts, rhs=rhs,
                                  seed=seed, sequence=int(v.get('sequence') or 1))
        if not v.get('mode'):
            raise ConfigError('--mode is required')
        return RunConfig(problem=problem, mode=v['mode'], m=int(v.get('m') or 30),
                         k=int(v.get('k') or 0), tol=float(v.get('tol') or 1e-8),
                         max_cycles=int(v.get('max_cycles') or 500), out=v.get('out'))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def config_from_args(args):
    values = read_config_file(args.config) if args.config else {}
    for key in _KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return build_config(values)


def main(argv=None):
    parser = argparse.ArgumentParser(prog='shift-recycle',
                                     description='Shifted and recycled GMRES benchmarks')
    parser.add_argument('-v', '--verbose', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True)
    p_run = sub.add_parser('run', help='run one configuration')
    _add_run_flags(p_run)
    p_cmp = sub.add_parser('compare', help='run two config files and compare matvecs')
    p_cmp.add_argument('config_a')
    p_cmp.add_argument('config_b')
    p_cmp.add_argument('--out', help='directory for both runs and comparison.csv')
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        if args.command == 'run':
            cfg = config_from_args(args)
            cfg.problem.matrices()
        else:
            cfg_a = build_config(read_config_file(args.config_a))
            cfg_b = build_config(read_config_file(args.config_b))
            cfg_a.problem.matrices()
            cfg_b.problem.matrices()
    except (ConfigError, ShiftRecycleError, ValueError, OSError) as exc:
        print('error: %s' % exc, file=sys.stderr)
        return 2

    if args.command == 'run':
        res = run(cfg)
        if cfg.out:
            write_outputs(res, cfg.out)
        sys.stdout.write(res.summary_csv())
        return 0 if res.converged else 1

    rows, res_a, res_b = compare(cfg_a, cfg_b)
    table = compare_csv(rows, res_a.mode, res_b.mode)
    if args.out:
        write_outputs(res_a, os.path.join(args.out, 'a'))
        write_outputs(res_b, os.path.join(args.out, 'b'))
        with open(os.path.join(args.out, 'comparison.csv'), 'w', newline='') as fh:
            fh.write(table)
    sys.stdout.write(table)
    return 0 if res_a.converged and res_b.converged else 1


if __name__ == '__main__':
    sys.exit(main())
