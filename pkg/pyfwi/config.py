"""Experiment configuration and the built-in experiment presets.

A configuration is stored as JSON with a top-level ``"schema"`` version.
Sources and receivers are given either as explicit lists or as a request for
random placement, which :meth:`ExperimentConfig.resolve` turns into explicit
lists using the configured seed.
"""
import copy
import json
import logging
import os

import numpy as np

from .grids import (Grid2D, GridTransfer, ConfigurationError, build_two_layer_model,
        build_crustal_root_model, two_layer_grid, crustal_root_grid, read_model)
from .wave import SourceSpec, ReceiverSpec, SolverSettings, check_cfl, num_time_samples
from .scaling import ScalingOperator
from .picking import PickingPolicy
from .inversion import OptimizerPolicy

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

PRESETS = ('two-layer', 'crustal-root')
SCALES = ('full', 'desk')

_BUILDERS = {
    'two-layer': build_two_layer_model,
    'crustal-root': build_crustal_root_model,
}

# margin (km) between random sources and the domain boundary or the Moho
SOURCE_MARGIN = 3.0


class ExperimentConfig:
    """All parameters of a synthetic inversion experiment.

    Args:
        grid (:class:`pyfwi.grids.Grid2D`): simulation grid
        inversion_grid (:class:`pyfwi.grids.Grid2D`): grid of the unknowns
        model (dict): ``{'kind': 'two-layer' | 'crustal-root', 'params': {...}}`` with
            builder parameters, or ``{'kind': 'file', 'true': path, 'initial': path}``
        t_f (float): final time
        dt (float): time step
        sources: list of :class:`pyfwi.wave.SourceSpec` or ``{'random': n, 'f0': .., 'tau': ..}``
        receivers: list of :class:`pyfwi.wave.ReceiverSpec` or ``{'random': n}``
        misfit (str): misfit kind, see :data:`pyfwi.scaling.KINDS`
        epsilon (float): floor parameter of the transport misfits
    """
    def __init__(self, grid, inversion_grid, model, t_f, dt, sources, receivers,
            misfit='w2-p3', epsilon=1e-3, picking=None, optimizer=None, solver=None,
            smoothing_km=0.0, mask_cells=3, seed=0, threads=None, out='run'):
        self.grid = grid
        self.inversion_grid = inversion_grid
        self.model = model
        self.t_f = float(t_f)
        self.dt = float(dt)
        self.sources = sources
        self.receivers = receivers
        self.misfit = misfit
        self.epsilon = float(epsilon)
        self.picking = picking if picking is not None else PickingPolicy()
        self.optimizer = optimizer if optimizer is not None else OptimizerPolicy()
        self.solver = solver if solver is not None else SolverSettings()
        self.smoothing_km = float(smoothing_km)
        self.mask_cells = int(mask_cells)
        self.seed = int(seed)
        self.threads = threads
        self.out = out

    @property
    def is_resolved(self):
        return isinstance(self.sources, list) and isinstance(self.receivers, list)

    ############################################################
    # serialization
    ############################################################

    def to_dict(self):
        def specs(s):
            if isinstance(s, list):
                return [dict(x.to_dict(), index=k if x.index is None else x.index) for (k, x) in enumerate(s)]
            return dict(s)
        return {
            'schema': SCHEMA_VERSION,
            'grid': self.grid.to_dict(),
            'inversion_grid': self.inversion_grid.to_dict(),
            'model': copy.deepcopy(self.model),
            'time': {'t_f': self.t_f, 'dt': self.dt},
            'sources': specs(self.sources),
            'receivers': specs(self.receivers),
            'misfit': {'kind': self.misfit, 'epsilon': self.epsilon},
            'picking': self.picking.to_dict(),
            'optimizer': self.optimizer.to_dict(),
            'solver': self.solver.to_dict(),
            'kernel': {'smoothing_km': self.smoothing_km, 'mask_cells': self.mask_cells},
            'seed': self.seed,
            'threads': self.threads,
            'out': self.out,
        }

    @staticmethod
    def from_dict(d):
        schema = d.get('schema')
        if schema != SCHEMA_VERSION:
            raise ConfigurationError('unsupported configuration schema %s (expected %d)' % (schema, SCHEMA_VERSION))
        for key in ('grid', 'inversion_grid', 'model', 'time', 'sources', 'receivers'):
            if key not in d:
                raise ConfigurationError('configuration lacks the section %r' % key)
        def specs(s, cls):
            if isinstance(s, list):
                return [cls(**x) for x in s]
            if 'random' not in s:
                raise ConfigurationError('placement must be a list or {"random": n}, got %r' % (s,))
            return dict(s)
        misfit = d.get('misfit', {})
        kernel = d.get('kernel', {})
        return ExperimentConfig(
            Grid2D.from_dict(d['grid']),
            Grid2D.from_dict(d['inversion_grid']),
            d['model'],
            d['time']['t_f'], d['time']['dt'],
            specs(d['sources'], SourceSpec),
            specs(d['receivers'], ReceiverSpec),
            misfit=misfit.get('kind', 'w2-p3'),
            epsilon=misfit.get('epsilon', 1e-3),
            picking=PickingPolicy.from_dict(d.get('picking', {})),
            optimizer=OptimizerPolicy.from_dict(d.get('optimizer', {})),
            solver=SolverSettings.from_dict(d.get('solver', {})),
            smoothing_km=kernel.get('smoothing_km', 0.0),
            mask_cells=kernel.get('mask_cells', 3),
            seed=d.get('seed', 0),
            threads=d.get('threads'),
            out=d.get('out', 'run'),
        )

    def save(self, fname):
        with open(fname, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)

    @staticmethod
    def load(fname):
        """Read and validate a configuration file."""
        with open(fname) as f:
            try:
                d = json.load(f)
            except ValueError as e:
                raise ConfigurationError('%s is not valid JSON: %s' % (fname, e))
        cfg = ExperimentConfig.from_dict(d)
        cfg.validate()
        return cfg

    def copy(self):
        return ExperimentConfig.from_dict(self.to_dict())

    ############################################################
    # derived objects
    ############################################################

    def build_models(self):
        """Return the true and the initial model."""
        kind = self.model.get('kind')
        if kind == 'file':
            true, initial = read_model(self.model['true']), read_model(self.model['initial'])
            if true.grid != self.grid or initial.grid != self.grid:
                raise ConfigurationError('model files do not match the simulation grid')
            return true, initial
        if kind not in _BUILDERS:
            raise ConfigurationError('unknown model kind %r' % kind)
        build = _BUILDERS[kind]
        params = self.model.get('params', {})
        return build(True, grid=self.grid, **params), build(False, grid=self.grid, **params)

    def _crust_depth(self):
        params = self.model.get('params', {})
        if self.model.get('kind') == 'two-layer':
            return params.get('moho', 30.0)
        elif self.model.get('kind') == 'crustal-root':
            return params.get('moho', 36.0)
        return self.grid.extent[1]

    def resolve(self):
        """A copy with random placement replaced by explicit, indexed lists.

        Receivers are placed uniformly on the top of the domain, sources
        uniformly in the crust at least :data:`SOURCE_MARGIN` km away from the
        sides, the top and the Moho.
        """
        cfg = self.copy()
        rng = np.random.default_rng(self.seed)
        (x0, z0), (x1, z1) = self.grid.origin, self.grid.extent
        if not isinstance(cfg.receivers, list):
            n = int(cfg.receivers['random'])
            xs = rng.uniform(x0, x1, size=n)
            cfg.receivers = [ReceiverSpec(x, z0, index=j) for (j, x) in enumerate(xs)]
        else:
            cfg.receivers = [ReceiverSpec(r.x, r.z, index=j) for (j, r) in enumerate(cfg.receivers)]
        if not isinstance(cfg.sources, list):
            spec = cfg.sources
            n = int(spec['random'])
            m = spec.get('margin', SOURCE_MARGIN)
            z_hi = min(self._crust_depth(), z1) - m
            if not (x1 - x0 > 2*m and z_hi > z0 + m):
                raise ConfigurationError('no room for random sources with margin %g km' % m)
            xs = rng.uniform(x0 + m, x1 - m, size=n)
            zs = rng.uniform(z0 + m, z_hi, size=n)
            cfg.sources = [SourceSpec(x, z, tau=spec.get('tau', 0.0), f0=spec.get('f0', 2.0),
                amplitude=spec.get('amplitude', 1.0), index=i) for (i, (x, z)) in enumerate(zip(xs, zs))]
        else:
            cfg.sources = [SourceSpec(s.x, s.z, s.tau, s.f0, s.amplitude, index=i)
                    for (i, s) in enumerate(cfg.sources)]
        return cfg

    def validate(self):
        """Check stability, grid nesting, placement and misfit settings.

        Raises:
            ConfigurationError: for any inconsistency
        """
        num_time_samples(self.t_f, self.dt)
        true, initial = self.build_models()
        check_cfl(true, self.dt, self.solver.cfl_safety)
        check_cfl(initial, self.dt, self.solver.cfl_safety)
        self.transfer()
        try:
            self.scaling_operator()
        except ValueError as e:
            raise ConfigurationError(str(e))
        for (name, specs, surface) in (('source', self.sources, False), ('receiver', self.receivers, True)):
            if isinstance(specs, list):
                for s in specs:
                    if not self.grid.interior(s.x, s.z, surface):
                        raise ConfigurationError('%s at (%g, %g) does not lie inside the domain' % (name, s.x, s.z))
            elif int(specs['random']) < 1:
                raise ConfigurationError('need at least one %s' % name)
        if self.threads is not None and self.threads < 1:
            raise ConfigurationError('invalid thread count %s' % self.threads)

    def transfer(self):
        return GridTransfer(self.inversion_grid, self.grid)

    def scaling_operator(self):
        return ScalingOperator(self.misfit, self.epsilon, t_f=self.dt * (num_time_samples(self.t_f, self.dt) - 1))

    def write(self, dirname):
        """Write the resolved configuration as `config.json` into `dirname`."""
        os.makedirs(dirname, exist_ok=True)
        fname = os.path.join(dirname, 'config.json')
        self.save(fname)
        return fname


def preset(name, scale='full'):
    """Configuration of a built-in experiment.

    The ``full`` scale uses an 80 km wide domain simulated at 0.2 km and
    0.01 s up to 21 s, 80 randomly placed sources and an inversion grid of
    2 km cells. The ``desk`` scale keeps the simulation steps with 4 sources and
    5 surface receivers: the two-layer domain shrinks to 30x24 km around a
    12 km fast box sounded at 4 Hz, the crustal root to 20x20 km.

    Raises:
        ConfigurationError: for an unknown name or scale
    """
    if name not in PRESETS:
        raise ConfigurationError('unknown preset %r (expected one of %s)' % (name, ', '.join(PRESETS)))
    if scale not in SCALES:
        raise ConfigurationError('unknown scale %r (expected one of %s)' % (scale, ', '.join(SCALES)))
    f0, dt = 2.0, 0.01
    if scale == 'full':
        sources = {'random': 80, 'f0': f0, 'tau': 0.0, 'margin': SOURCE_MARGIN}
        if name == 'two-layer':
            return ExperimentConfig(two_layer_grid(), Grid2D((1.0, 1.0), (2.0, 2.0), (40, 30)),
                    {'kind': 'two-layer', 'params': {}}, 21.0, dt, sources, {'random': 25},
                    picking=PickingPolicy(1.0, 3.0, 0.5, reflectors=[30.0]),
                    optimizer=OptimizerPolicy(iterations=60, checkpoint_every=20))
        else:
            return ExperimentConfig(crustal_root_grid(), Grid2D((1.0, 1.0), (2.0, 2.0), (40, 40)),
                    {'kind': 'crustal-root', 'params': {}}, 21.0, dt, sources, {'random': 40},
                    picking=PickingPolicy(1.0, 3.0, 0.5, reflectors=[20.0, 36.0]),
                    optimizer=OptimizerPolicy(iterations=60, checkpoint_every=20))
    if name == 'two-layer':
        # the direct waves cross 12 km of the fast box: a delay of two basin widths of
        # the l2 misfit at 4 Hz; the source next to the moho has only multipath pairs
        f0 = 4.0
        sources = [SourceSpec(x, z, f0=f0) for (x, z) in ((11.0, 16.8), (15.0, 16.8), (19.0, 16.8), (15.0, 19.0))]
        receivers = [ReceiverSpec(x, 0.0) for x in (10.0, 12.5, 15.0, 17.5, 20.0)]
        return ExperimentConfig(Grid2D((0.0, 0.0), (0.2, 0.2), (151, 121)),
                Grid2D((0.0, 0.0), (1.0, 1.0), (31, 25)),
                {'kind': 'two-layer', 'params': {'moho': 20.0, 'anomaly_box': [9.0, 21.0, 4.0, 16.0]}},
                5.0, dt, sources, receivers,
                picking=PickingPolicy(2.2, 1.4, 0.5, reflectors=[20.0]),
                optimizer=OptimizerPolicy(iterations=20, checkpoint_every=10))
    receivers = [ReceiverSpec(x, 0.0) for x in (2.0, 6.0, 10.0, 14.0, 18.0)]
    sources = [SourceSpec(x, 4.0, f0=f0) for x in (3.0, 8.0, 12.0, 17.0)]
    # reflections off the shallow interfaces overlap every direct arrival at this scale
    return ExperimentConfig(Grid2D((0.0, 0.0), (0.2, 0.2), (101, 101)),
            Grid2D((0.0, 0.0), (1.0, 1.0), (21, 21)),
            {'kind': 'crustal-root', 'params': {'conrad': 5.0, 'moho': 9.0,
                'root_depth': 6.25, 'root_end': 10.0}},
            6.0, dt, sources, receivers,
            picking=PickingPolicy(1.0, 1.5, 0.5, reflectors=[]),
            optimizer=OptimizerPolicy(iterations=20, checkpoint_every=10))
