"""Batch front end: ``lyapkit solve`` and ``lyapkit compare``.

Exit codes: 0 success, 2 configuration error (nothing written), 3 solver
failure, 4 I/O error.  ``LYAPKIT_OUT`` overrides ``--out_dir``.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from lyapkit import mmio
from lyapkit.adi import adi_run
from lyapkit.errors import LyapkitError, _PartialResult
from lyapkit.kadi import kadi_run, make_inner_tol
from lyapkit.shifts import STRATEGIES, ReplayShifts
from lyapkit.testlab import (gen_convdiff3d, gen_laplacian2d, kpik_solve,
                             transform_chol_e, transform_diag_e)

METHODS = ('lradi', 'kadi-g', 'kadi-mr', 'kpik')
HISTORY_COLUMNS = ('j', 'm', 'space_dim', 'resnorm_abs', 'resnorm_rel',
                   'shift_re', 'shift_im', 'eps_inn')
COMPARE_COLUMNS = ('run', 'method', 'shifts', 'inner_tol', 'status', 'iterations',
                   'space_dim', 'final_residual', 'shift_source', 'wall_time')
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    method: str = 'kadi-g'
    shifts: str = 'hamiltonian'
    eps_out: float = 1e-8
    inner_tol: str = 'fixed'
    max_iter: int = 100
    max_space: int = 100
    problem: str = 'laplacian2d:h=30,q=1'
    seed: int = 0
    out_dir: str = 'lyapkit_out'

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f'unknown method {self.method!r}')
        if self.shifts not in STRATEGIES:
            raise ConfigError(f'unknown shift strategy {self.shifts!r}')
        if not (isinstance(self.eps_out, float) and self.eps_out > 0):
            raise ConfigError('eps_out must be positive')
        try:
            make_inner_tol(self.inner_tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.max_iter < 0 or self.max_space < 1:
            raise ConfigError('max_iter must be >= 0 and max_space >= 1')
        parse_problem(self.problem)
        return self


@dataclass
class Problem:
    op: object
    B: np.ndarray
    back_map: object = None
    meta: dict = dataclasses.field(default_factory=dict)


# -- problem specs -------------------------------------------------------------

_GEN_KEYS = {'laplacian2d': (('h', int), ('q', int), ('b', str)),
             'convdiff3d': (('h', int), ('zeta', float), ('q', int))}


def parse_problem(spec):
    """Split a problem spec into ``(kind, args)`` without touching files.

    ``mm:<A>[,<E>],<B>``, ``laplacian2d:h,q`` or ``convdiff3d:h,zeta``;
    generator arguments may also be given as ``key=value``.
    """
    kind, sep, rest = spec.partition(':')
    if not sep or not rest:
        raise ConfigError(f'malformed problem spec {spec!r}')
    parts = rest.split(',')
    if kind == 'mm':
        if len(parts) not in (2, 3) or not all(parts):
            raise ConfigError('mm problems take <A>,<B> or <A>,<E>,<B>')
        return kind, parts
    if kind not in _GEN_KEYS:
        raise ConfigError(f'unknown problem kind {kind!r}')
    keys = _GEN_KEYS[kind]
    args = {}
    for i, part in enumerate(parts):
        key, eq, val = part.partition('=')
        if not eq:
            if i >= len(keys):
                raise ConfigError(f'too many arguments in {spec!r}')
            key, val = keys[i][0], part
        conv = dict(keys).get(key)
        if conv is None:
            raise ConfigError(f'unknown {kind} parameter {key!r}')
        try:
            args[key] = conv(val)
        except ValueError:
            raise ConfigError(f'bad value {val!r} for {key}') from None
    if 'h' not in args or (kind == 'convdiff3d' and 'zeta' not in args):
        raise ConfigError(f'missing parameters in {spec!r}')
    if args['h'] < (2 if kind == 'laplacian2d' else 3) or args.get('q', 1) < 1:
        raise ConfigError(f'parameters out of range in {spec!r}')
    if kind == 'convdiff3d' and not args['zeta'] > 0:
        raise ConfigError('zeta must be positive')
    if args.get('b', 'ones') not in ('ones', 'random'):
        raise ConfigError("b must be 'ones' or 'random'")
    return kind, args


def load_problem(spec, seed=0):
    """Build the problem; Matrix Market read failures propagate as ``OSError``."""
    kind, args = parse_problem(spec)
    if kind == 'laplacian2d':
        g = gen_laplacian2d(args['h'], args.get('q', 1), args.get('b'), seed=seed)
        return Problem(g.A, g.B, meta=g.meta)
    if kind == 'convdiff3d':
        g = gen_convdiff3d(args['h'], args['zeta'], seed=seed, q=args.get('q', 1))
        return Problem(g.A, g.B, meta=g.meta)
    try:
        A = mmio.read_sparse(args[0])
        B = mmio.read_dense(args[-1])
        E = mmio.read_sparse(args[1]) if len(args) == 3 else None
    except (OSError, ValueError) as exc:
        raise OSError(f'cannot read problem files: {exc}') from exc
    if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise OSError('matrix dimensions do not match')
    meta = dict(generator='mm', files=list(args))
    if E is None:
        return Problem(A, B, meta=meta)
    if sp.triu(E, 1).nnz == 0 and sp.tril(E, -1).nnz == 0:
        op, Bt, back = transform_diag_e(A, E.diagonal(), B)
        meta['mass'] = 'diagonal'
    else:
        op, Bt, back = transform_chol_e(A, E, B)
        meta['mass'] = 'cholesky'
    return Problem(op, Bt, back, meta)


# -- running -------------------------------------------------------------------

def run_config(cfg, prob, shift_override=None):
    """Run one configuration; returns ``(Z, report, error)``.

    Solver failures that carry a partial result return it together with the
    exception; other solver errors give ``Z = report = None``.
    """
    strategy = shift_override if shift_override is not None else cfg.shifts
    try:
        if cfg.method == 'lradi':
            Z, rep = adi_run(prob.op, prob.B, strategy, eps=cfg.eps_out, j_max=cfg.max_iter)
        elif cfg.method == 'kpik':
            Z, rep = kpik_solve(prob.op, prob.B, cfg.eps_out, m_max=cfg.max_space)
        else:
            variant = 'galerkin' if cfg.method == 'kadi-g' else 'minres'
            Z, rep = kadi_run(prob.op, prob.B, strategy, variant, eps_out=cfg.eps_out,
                              inner_tol=cfg.inner_tol, m_max=cfg.max_space,
                              j_max=cfg.max_iter)
        err = None
    except _PartialResult as exc:
        Z, rep, err = exc.Z, exc.report, exc
    except LyapkitError as exc:
        return None, None, exc
    if prob.back_map is not None and Z is not None:
        Z = prob.back_map(Z)
    return Z, rep, err


def fmt(x):
    if x is None:
        return ''
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f'{float(x):.15e}'


def history_rows(report):
    for row in report.history:
        s = row.shift
        yield [fmt(row.j), fmt(row.m), fmt(row.space_dim), fmt(row.resnorm_abs),
               fmt(row.resnorm_rel), fmt(None if s is None else s.real),
               fmt(None if s is None else s.imag), fmt(row.eps_inn)]


def write_csv(path, header, rows):
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(header)
        w.writerows(rows)


def shift_pairs(shifts):
    return [[complex(p).real, complex(p).imag] for p in shifts]


def summary_dict(cfg, prob, Z, report):
    return dict(method=report.method, status=report.status,
                iterations=report.iterations, final_residual=report.final_residual,
                space_dim=report.space_dim, wall_time=report.wall_time,
                n=int(prob.B.shape[0]), q=int(prob.B.shape[1]),
                z_columns=int(Z.shape[1]), n_factorizations=int(report.n_factorizations),
                shifts=shift_pairs(report.shifts), problem_meta=prob.meta,
                config=dataclasses.asdict(cfg))


def write_run(out, cfg, prob, Z, report, save_z=False):
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / 'residual_history.csv', HISTORY_COLUMNS, history_rows(report))
    with open(out / 'summary.json', 'w') as fh:
        json.dump(summary_dict(cfg, prob, Z, report), fh, indent=2)
        fh.write('\n')
    if save_z:
        mmio.write_dense(out / 'Z.mtx', Z)


def summary_schema():
    path = Path(__file__).with_name('schemas') / 'summary.schema.json'
    return json.loads(path.read_text())


# -- argument handling ---------------------------------------------------------

def _positive_float(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not a number: {s!r}') from None
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f'must be positive: {s!r}')
    return v


def _nonneg_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f'not an integer: {s!r}') from None
    if v < 0:
        raise argparse.ArgumentTypeError(f'must be nonnegative: {s!r}')
    return v


def _common(p):
    d = RunConfig()
    p.add_argument('--problem', required=True,
                   help='mm:<A>[,<E>],<B> | laplacian2d:h,q | convdiff3d:h,zeta')
    p.add_argument('--shifts', '--shift', default=d.shifts, choices=sorted(STRATEGIES))
    p.add_argument('--eps_out', '--eps-out', type=_positive_float, default=d.eps_out)
    p.add_argument('--inner_tol', '--inner-tol', default=d.inner_tol,
                   help="'relaxed', 'fixed' or 'fixed:<value>'")
    p.add_argument('--max_iter', '--max-iter', type=_nonneg_int, default=d.max_iter)
    p.add_argument('--max_space', '--max-space', type=_nonneg_int, default=d.max_space)
    p.add_argument('--seed', type=int, default=d.seed)
    p.add_argument('--out_dir', '--out-dir', default=d.out_dir)


def build_parser():
    parser = argparse.ArgumentParser(prog='lyapkit',
                                     description='Low-rank Lyapunov solvers.')
    sub = parser.add_subparsers(dest='command', required=True)
    ps = sub.add_parser('solve', help='run one configuration')
    ps.add_argument('--method', default='kadi-g', choices=METHODS)
    ps.add_argument('--save_z', '--save-z', action='store_true',
                    help='write the factor as Z.mtx')
    _common(ps)
    pc = sub.add_parser('compare', help='run several configurations on one problem')
    pc.add_argument('--methods', help='comma-separated methods, e.g. kadi-g,lradi,kpik')
    pc.add_argument('--configs', help='JSON file with a list of per-run overrides')
    pc.add_argument('--shared_shifts', '--shared-shifts', action='store_true',
                    help='replay the shifts of the first shifted run in all others')
    _common(pc)
    return parser


def _config_from(ns, **over):
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    vals = {k: v for k, v in vars(ns).items() if k in fields}
    vals.update(over)
    out = os.environ.get('LYAPKIT_OUT')
    if out:
        vals['out_dir'] = out
    return RunConfig(**vals).validate()


def _compare_configs(ns):
    if ns.configs:
        try:
            with open(ns.configs) as fh:
                items = json.load(fh)
        except OSError as exc:
            raise OSError(f'cannot read {ns.configs}: {exc}') from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f'{ns.configs}: {exc}') from None
        if not isinstance(items, list) or not all(isinstance(i, dict) for i in items):
            raise ConfigError('--configs must hold a JSON list of objects')
        allowed = {'method', 'shifts', 'eps_out', 'inner_tol', 'max_iter', 'max_space'}
        for item in items:
            bad = set(item) - allowed
            if bad:
                raise ConfigError(f'keys not allowed per run: {sorted(bad)}')
            if 'eps_out' in item:
                item['eps_out'] = float(item['eps_out'])
    elif ns.methods:
        items = [dict(method=m.strip()) for m in ns.methods.split(',') if m.strip()]
    else:
        raise ConfigError('compare needs --methods or --configs')
    if len(items) < 2:
        raise ConfigError('compare needs at least two configurations')
    return [_config_from(ns, **item) for item in items]


def cmd_solve(ns):
    cfg = _config_from(ns)
    prob = load_problem(cfg.problem, cfg.seed)
    Z, report, err = run_config(cfg, prob)
    if report is not None:
        write_run(Path(cfg.out_dir), cfg, prob, Z, report, ns.save_z)
    if err is not None:
        print(f'lyapkit: solver failure: {type(err).__name__}: {err}', file=sys.stderr)
        return EXIT_SOLVER
    print(f'{report.method}: {report.status} after {report.iterations} iterations, '
          f'residual {report.final_residual:.3e}, space {report.space_dim}')
    return EXIT_OK


def _gap(row, ref):
    if ref is None or row.j not in ref:
        return None
    r0 = ref[row.j]
    return abs(row.resnorm_rel - r0) / r0 if r0 > 0 else None


def cmd_compare(ns):
    cfgs = _compare_configs(ns)
    out = Path(cfgs[0].out_dir)
    prob = load_problem(cfgs[0].problem, cfgs[0].seed)
    shifted = [i for i, c in enumerate(cfgs) if c.method != 'kpik']
    if ns.shared_shifts and not shifted:
        raise ConfigError('shared-shifts mode needs at least one shifted method')
    producer = shifted[0] if ns.shared_shifts else None
    order = ([producer] if producer is not None else []) + \
        [i for i in range(len(cfgs)) if i != producer]

    results = {}
    replay = None
    failed = None
    for i in order:
        cfg = cfgs[i]
        override = ReplayShifts(replay) if (replay is not None and cfg.method != "kpik") else None
        Z, rep, err = run_config(cfg, prob, override)
        results[i] = (rep, err)
        if rep is not None:
            write_run(out / f'run{i}_{cfg.method}', cfg, prob, Z, rep)
        if err is not None:
            failed = (i, err)
            break
        if i == producer:
            if not rep.shifts:
                failed = (i, LyapkitError('shift-producing run consumed no shifts'))
                break
            replay = rep.shifts
            with open(out / 'shifts.json', 'w') as fh:
                json.dump(shift_pairs(rep.shifts), fh)
                fh.write('\n')

    ref_idx = producer if producer is not None else 0
    ref = None
    if ref_idx in results and results[ref_idx][0] is not None:
        ref = {r.j: r.resnorm_rel for r in results[ref_idx][0].history}

    rows, hist = [], []
    for i, cfg in enumerate(cfgs):
        kpik = cfg.method == 'kpik'
        source = '' if kpik else ('replay' if producer not in (None, i) else 'own')
        rep, err = results.get(i, (None, None))
        status = (type(err).__name__ if err is not None else rep.status) if i in results \
            else 'not_run'
        rows.append([str(i), cfg.method, '' if kpik else cfg.shifts,
                     cfg.inner_tol if cfg.method.startswith('kadi') else '', status,
                     fmt(rep.iterations) if rep else '', fmt(rep.space_dim) if rep else '',
                     fmt(rep.final_residual) if rep else '', source,
                     fmt(rep.wall_time) if rep else ''])
        if rep is None:
            continue
        for row, cells in zip(rep.history, history_rows(rep)):
            gap = None if kpik or i == ref_idx else _gap(row, ref)
            hist.append([str(i), cfg.method] + cells + [fmt(gap)])
    write_csv(out / 'compare.csv', COMPARE_COLUMNS, rows)
    write_csv(out / 'compare_history.csv', ('run', 'method') + HISTORY_COLUMNS + ('gap_rel',),
              hist)
    if failed is not None:
        i, err = failed
        print(f'lyapkit: run {i} failed: {type(err).__name__}: {err}', file=sys.stderr)
        return EXIT_SOLVER
    for r in rows:
        print(','.join(r[:8]))
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return (cmd_solve if ns.command == 'solve' else cmd_compare)(ns)
    except ConfigError as exc:
        print(f'lyapkit: configuration error: {exc}', file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f'lyapkit: I/O error: {exc}', file=sys.stderr)
        return EXIT_IO
    except LyapkitError as exc:
        print(f'lyapkit: solver failure: {type(exc).__name__}: {exc}', file=sys.stderr)
        return EXIT_SOLVER


if __name__ == '__main__':
    sys.exit(main())
