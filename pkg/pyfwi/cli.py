"""Command line interface: ``pyfwi generate | invert | kernel | compare-traces``."""
import argparse
import logging
import os
import sys

from . import set_max_threads, __version__
from .config import ExperimentConfig, preset, PRESETS, SCALES
from .data import Dataset, generate_observed
from .grids import ConfigurationError, write_model
from .picking import AcceptanceTable, PickingPolicy, select_pairs, apply_window
from .scaling import KINDS, ScalingOperator, misfit, apply, DegenerateTraceError
from .transport import w2_squared, outer_gradient, write_map_csv
from .wave import solve_forward
from .adjoint import source_task
from .inversion import InversionProblem, invert, SolverError

logger = logging.getLogger(__name__)

_LEVELS = [logging.WARNING, logging.INFO, logging.DEBUG]


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='experiment configuration (JSON)')
    common.add_argument('--preset', choices=PRESETS, default='two-layer',
            help='built-in experiment used when no --config is given')
    common.add_argument('--scale', choices=SCALES, default='desk', help='size of the preset experiment')
    common.add_argument('--misfit', choices=KINDS, help='misfit kind')
    common.add_argument('--epsilon', type=float, help='floor parameter of the transport misfits')
    common.add_argument('--seed', type=int, help='seed for random placement')
    common.add_argument('--threads', type=int, help='number of worker threads')
    common.add_argument('--out', help='output directory')
    common.add_argument('-v', '--verbose', action='count', default=0,
            help='more output (repeat for debug messages)')

    parser = argparse.ArgumentParser(prog='pyfwi',
            description='Full waveform inversion with quadratic Wasserstein misfits.')
    parser.add_argument('--version', action='version', version='pyfwi ' + __version__)
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    p = sub.add_parser('generate', parents=[common], help='simulate observed data in the true model')
    p.add_argument('--format', choices=('csv', 'bin'), default='csv', help='trace file format')

    p = sub.add_parser('invert', parents=[common], help='run the inversion')
    p.add_argument('--data', help='directory written by "generate"; simulated afresh if omitted')
    p.add_argument('--iterations', type=int, help='number of iterations')
    p.add_argument('--plot', action='store_true', help='save figures of the result')

    p = sub.add_parser('kernel', parents=[common], help='sensitivity kernel of one source in the initial model')
    p.add_argument('--source', type=int, required=True, help='source id')
    p.add_argument('--no-windows', action='store_true', help='use whole traces instead of phase windows')

    p = sub.add_parser('compare-traces', parents=[common], help='misfit of one pair under every misfit kind')
    p.add_argument('--source', type=int, required=True, help='source id')
    p.add_argument('--receiver', type=int, required=True, help='receiver id')
    p.add_argument('--synthetic-model', choices=('initial', 'true'), default='initial',
            help='model in which the synthetic trace is computed')
    return parser


def _configure_logging(verbose):
    logging.basicConfig(level=_LEVELS[min(verbose, len(_LEVELS) - 1)],
            format='%(asctime)s %(name)s %(levelname)s %(message)s')

def load_config(args):
    """Configuration from ``--config`` or the preset, with command line overrides applied."""
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = preset(args.preset, args.scale)
    if args.misfit is not None:
        cfg.misfit = args.misfit
    if args.epsilon is not None:
        cfg.epsilon = args.epsilon
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, 'iterations', None) is not None:
        cfg.optimizer.iterations = args.iterations
    cfg = cfg.resolve()
    cfg.validate()
    set_max_threads(cfg.threads)
    return cfg

def _source(cfg, i):
    for s in cfg.sources:
        if s.index == i:
            return s
    raise ConfigurationError('no source with id %d (have %d sources)' % (i, len(cfg.sources)))

def _receiver(cfg, j):
    for r in cfg.receivers:
        if r.index == j:
            return r
    raise ConfigurationError('no receiver with id %d (have %d receivers)' % (j, len(cfg.receivers)))


def cmd_generate(cfg, args):
    true, initial = cfg.build_models()
    out = cfg.out
    cfg.write(out)
    write_model(os.path.join(out, 'model_true.txt'), true)
    write_model(os.path.join(out, 'model_initial.txt'), initial)
    dataset = generate_observed(true, cfg.sources, cfg.receivers, cfg.t_f, cfg.dt,
            settings=cfg.solver, verbose=args.verbose)
    dataset.save(out, fmt=args.format)
    table = select_pairs(initial, cfg.sources, cfg.receivers, cfg.picking, cfg.t_f,
            observed=dataset.observed, verbose=args.verbose)
    table.write_csv(os.path.join(out, 'acceptance.csv'))
    print('wrote %d traces, %d of %d pairs accepted, to %s'
            % (len(dataset.observed), table.num_accepted, len(table.pairs()), out))
    return 0

def cmd_invert(cfg, args):
    true, initial = cfg.build_models()
    if args.data:
        dataset = Dataset.load(args.data)
        table = AcceptanceTable.read_csv(os.path.join(args.data, 'acceptance.csv'))
    else:
        dataset = generate_observed(true, cfg.sources, cfg.receivers, cfg.t_f, cfg.dt,
                settings=cfg.solver, verbose=args.verbose)
        table = select_pairs(initial, cfg.sources, cfg.receivers, cfg.picking, cfg.t_f,
                observed=dataset.observed, verbose=args.verbose)
    cfg.write(cfg.out)
    table.write_csv(os.path.join(cfg.out, 'acceptance.csv'))
    problem = InversionProblem(dataset, cfg.scaling_operator(), table, cfg.transfer(), settings=cfg.solver,
            mask_cells=cfg.mask_cells, smoothing_km=cfg.smoothing_km)
    states = invert(problem, initial, cfg.optimizer, model_true=true, out=cfg.out, verbose=args.verbose)
    last = states[-1]
    print('%d iterations: rme = %.4g, rmf = %.4g%s' % (last.k, last.rme, last.rmf,
        ' (stalled)' if last.stalled else ''))
    if args.plot:
        import matplotlib
        matplotlib.use('Agg')
        from . import vis
        vis.save_inversion_figures(cfg.out, states, true, initial)
    return 0

def cmd_kernel(cfg, args):
    true, initial = cfg.build_models()
    src = _source(cfg, args.source)
    policy = cfg.picking
    if args.no_windows:
        d = policy.to_dict()
        d['enabled'] = False
        policy = PickingPolicy.from_dict(d)
    dataset = generate_observed(true, [src], cfg.receivers, cfg.t_f, cfg.dt, settings=cfg.solver)
    table = select_pairs(initial, [src], cfg.receivers, policy, cfg.t_f, observed=dataset.observed)
    op = cfg.scaling_operator()
    result = source_task(initial, src, dataset, op, table, settings=cfg.solver)
    os.makedirs(cfg.out, exist_ok=True)
    tag = '%s_%s' % (cfg.misfit, 'nowin' if args.no_windows else 'win')
    fname = os.path.join(cfg.out, 'kernel_%d_%s.txt' % (src.index, tag))
    write_model(fname, result.kernel)
    if op.is_transport:
        for s in result.synthetic:
            w = table.window(s.i, s.j)
            if s.j not in result.misfits:
                continue
            f = apply(op, apply_window(w, s))
            value, T = w2_squared(f, apply(op, apply_window(w, dataset.observed[(s.i, s.j)])))
            write_map_csv(os.path.join(cfg.out, 'map_%d_%d_%s.csv' % (s.i, s.j, tag)), f, T,
                    outer_gradient(f, T))
    print('misfit %.6g over %d pairs; kernel written to %s' % (result.misfit, len(result.misfits), fname))
    return 0

def cmd_compare_traces(cfg, args):
    true, initial = cfg.build_models()
    src = _source(cfg, args.source)
    rec = _receiver(cfg, args.receiver)
    (d,), _ = solve_forward(true, src, [rec], cfg.t_f, cfg.dt, settings=cfg.solver)
    model = initial if args.synthetic_model == 'initial' else true
    (s,), _ = solve_forward(model, src, [rec], cfg.t_f, cfg.dt, settings=cfg.solver)
    table = select_pairs(initial, [src], [rec], cfg.picking, cfg.t_f, observed={(d.i, d.j): d})
    w = table.window(d.i, d.j)
    print('pair (%d, %d): window [%g, %g] s, %s' % (d.i, d.j, w.t_lo, w.t_hi, w.reason))
    s_w, d_w = apply_window(w, s), apply_window(w, d)
    for kind in KINDS:
        op = ScalingOperator(kind, cfg.epsilon, t_f=cfg.scaling_operator().t_f)
        try:
            print('%-6s %.10g' % (kind, misfit(op, s_w, d_w)))
        except DegenerateTraceError as e:
            print('%-6s undefined (%s)' % (kind, e))
    return 0

_COMMANDS = {
    'generate': cmd_generate,
    'invert': cmd_invert,
    'kernel': cmd_kernel,
    'compare-traces': cmd_compare_traces,
}


def main(argv=None):
    args = _parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        cfg = load_config(args)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigurationError, SolverError, ValueError, ArithmeticError, OSError) as e:
        logger.debug('command failed', exc_info=True)
        print('error: %s' % e, file=sys.stderr)
        return 1
