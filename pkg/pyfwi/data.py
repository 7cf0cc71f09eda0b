"""Observed seismograms together with the acquisition geometry."""
import concurrent.futures
import json
import logging
import os

from . import get_max_threads
from . import utils
from .wave import SourceSpec, ReceiverSpec, Trace, solve_forward, spec_ids

logger = logging.getLogger(__name__)


class Dataset:
    """Observed traces `d_ij` for sources `i` and receivers `j` on a common time axis.

    Args:
        sources: list of :class:`pyfwi.wave.SourceSpec`
        receivers: list of :class:`pyfwi.wave.ReceiverSpec`
        t_f (float): final time
        dt (float): sampling interval
        observed (dict): maps `(i, j)` to :class:`pyfwi.wave.Trace`
    """
    def __init__(self, sources, receivers, t_f, dt, observed):
        self.sources = list(sources)
        self.receivers = list(receivers)
        self.t_f = t_f
        self.dt = dt
        self.observed = observed
        for i in self.source_ids:
            for j in self.receiver_ids:
                if (i, j) not in observed:
                    raise ValueError('observed trace (%s, %s) is missing' % (i, j))

    @property
    def source_ids(self):
        return spec_ids(self.sources)

    @property
    def receiver_ids(self):
        return spec_ids(self.receivers)

    def traces_for(self, i):
        """Observed traces of source `i` in receiver order."""
        return [self.observed[(i, j)] for j in self.receiver_ids]

    def save(self, dirname, fmt='csv'):
        """Write `geometry.json` and `observed/trace_<i>_<j>.<fmt>` below `dirname`."""
        if fmt not in ('csv', 'bin'):
            raise ValueError('unknown trace format %s' % fmt)
        tdir = os.path.join(dirname, 'observed')
        os.makedirs(tdir, exist_ok=True)
        geometry = {
            'sources': [dict(s.to_dict(), index=i) for (i, s) in zip(self.source_ids, self.sources)],
            'receivers': [dict(r.to_dict(), index=j) for (j, r) in zip(self.receiver_ids, self.receivers)],
            't_f': self.t_f, 'dt': self.dt, 'format': fmt,
        }
        with open(os.path.join(dirname, 'geometry.json'), 'w') as f:
            json.dump(geometry, f, indent=2)
        for ((i, j), d) in sorted(self.observed.items()):
            utils.write_trace_file(os.path.join(tdir, 'trace_%d_%d.%s' % (i, j, fmt)),
                    d.samples, i, j, self.dt, self.t_f)

    @staticmethod
    def load(dirname):
        """Read a dataset written by :meth:`save`."""
        with open(os.path.join(dirname, 'geometry.json')) as f:
            geometry = json.load(f)
        sources = [SourceSpec(**s) for s in geometry['sources']]
        receivers = [ReceiverSpec(**r) for r in geometry['receivers']]
        t_f, dt = geometry['t_f'], geometry['dt']
        observed = {}
        for s in sources:
            for r in receivers:
                fname = os.path.join(dirname, 'observed', 'trace_%d_%d.%s' % (s.index, r.index, geometry['format']))
                samples, i, j, dt_file, _ = utils.read_trace_file(fname)
                if (i, j) != (s.index, r.index) or abs(dt_file - dt) > 1e-12 * dt:
                    raise ValueError('trace file %s does not match the geometry' % fname)
                observed[(i, j)] = Trace(samples, dt, t_f, i, j)
        return Dataset(sources, receivers, t_f, dt, observed)


def generate_observed(model, sources, receivers, t_f, dt, settings=None, verbose=0):
    """Simulate the observed traces of all sources in the true model.

    Sources are simulated concurrently with up to :func:`pyfwi.get_max_threads`
    threads.

    Returns:
        :class:`Dataset`
    """
    src_ids = spec_ids(sources)
    sources = [s if s.index is not None else SourceSpec(s.x, s.z, s.tau, s.f0, s.amplitude, index=i)
            for (i, s) in zip(src_ids, sources)]
    def task(src):
        traces, _ = solve_forward(model, src, receivers, t_f, dt, settings=settings)
        if verbose >= 1:
            print('simulated source %d' % src.index)
        return traces
    with concurrent.futures.ThreadPoolExecutor(max_workers=get_max_threads()) as pool:
        results = list(pool.map(task, sources))
    observed = {}
    for traces in results:
        for d in traces:
            observed[(d.i, d.j)] = d
    logger.info('generated %d observed traces', len(observed))
    return Dataset(sources, receivers, t_f, dt, observed)
