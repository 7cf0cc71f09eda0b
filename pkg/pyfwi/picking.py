"""Direct-wave traveltimes, phase windows and selection of usable source-receiver pairs.

Only the direct phase of each trace is compared. Its arrival time is taken
from the first-arrival traveltime field of the initial model, computed by
fast marching. Windows are built once from these times and then kept fixed.
Pairs whose direct arrival is not separated from a reflection off one of the
configured horizontal discontinuities are rejected, as are pairs whose
windowed observed trace carries no energy.
"""
import csv
import logging
import math

import numpy as np
import scipy.interpolate
import skfmm
from scipy.integrate import trapezoid

from .wave import spec_ids

logger = logging.getLogger(__name__)

# radius (in cells) of the disc around the source where the traveltime is set analytically
SOURCE_RADIUS_CELLS = 3.0

REASONS = ('accepted', 'multipath', 'window', 'low-energy')


class TraveltimeError(ArithmeticError):
    """The eikonal solver did not produce a finite traveltime field."""
    pass


class TraveltimeField:
    """First-arrival times (s) of one source on the simulation grid."""
    def __init__(self, grid, values, source):
        self.grid = grid
        self.values = values
        self.source = source
        xg, zg = grid.coords()
        self._interp = scipy.interpolate.RegularGridInterpolator((zg, xg), values)

    def at(self, x, z):
        """Bilinearly interpolated traveltime at `(x, z)`."""
        x0, z0 = self.grid.origin
        x1, z1 = self.grid.extent
        return float(self._interp([[np.clip(z, z0, z1), np.clip(x, x0, x1)]])[0])


def traveltime(model, source):
    """Compute the first-arrival traveltime field of `source` in `model`.

    The source is represented by a small disc in which the time is the
    straight-ray time at the source velocity; outside, fast marching of second
    order (first order as a fallback) propagates the front.

    Raises:
        TraveltimeError: if the solver does not return a finite field
    """
    grid = model.grid
    dx, dz = grid.spacing
    xg, zg = grid.coords()
    X, Z = np.meshgrid(xg, zg)
    dist = np.hypot(X - source.x, Z - source.z)
    radius = SOURCE_RADIUS_CELLS * max(dx, dz)
    c_src = model.sample(source.x, source.z).item()
    phi = dist - radius
    if not np.any(phi < 0):
        raise TraveltimeError('source disc at (%g, %g) contains no grid node' % source.location)
    try:
        tt = skfmm.travel_time(phi, model.values, dx=[dz, dx])
    except ValueError:
        logger.debug('second order fast marching failed, using first order')
        tt = skfmm.travel_time(phi, model.values, dx=[dz, dx], order=1)
    tt = np.array(np.ma.filled(tt, np.nan), dtype=float)
    inside = phi < 0
    tt[~inside] += radius / c_src
    tt[inside] = dist[inside] / c_src
    if not np.all(np.isfinite(tt)):
        raise TraveltimeError('traveltime field of source at (%g, %g) is not finite' % source.location)
    return TraveltimeField(grid, tt, source)


class PickingPolicy:
    """Window shape and rejection settings.

    Args:
        a (float): periods before the arrival included in the window
        b (float): periods after the arrival included in the window
        c (float): width of the cosine taper at either end, in periods
        enabled (bool): if `False`, the whole trace is used and multipath is not checked
        reflectors: depths (km) of horizontal discontinuities producing reflections
        noise_floor (float): minimum windowed energy relative to the strongest pair
    """
    def __init__(self, a=1.0, b=3.0, c=0.5, enabled=True, reflectors=(), noise_floor=1e-6):
        if not (a >= 0 and b >= 0 and a + b > 0):
            raise ValueError('invalid window extent a=%s, b=%s' % (a, b))
        if not 0 <= c <= 0.5 * (a + b):
            raise ValueError('taper width %s does not fit into the window' % c)
        self.a = float(a)
        self.b = float(b)
        self.c = float(c)
        self.enabled = bool(enabled)
        self.reflectors = tuple(float(r) for r in reflectors)
        self.noise_floor = float(noise_floor)

    def to_dict(self):
        return {'a': self.a, 'b': self.b, 'c': self.c, 'enabled': self.enabled,
                'reflectors': list(self.reflectors), 'noise_floor': self.noise_floor}

    @staticmethod
    def from_dict(d):
        return PickingPolicy(**d)


class PhaseWindow:
    """Time window `[t_lo, t_hi]` of one pair with cosine tapers of width `taper`."""
    def __init__(self, i, j, t_lo, t_hi, taper, accepted=True, reason='accepted'):
        assert reason in REASONS, 'unknown rejection reason %s' % reason
        self.i = i
        self.j = j
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        self.taper = float(taper)
        self.accepted = accepted
        self.reason = reason

    @property
    def length(self):
        return self.t_hi - self.t_lo

    def reject(self, reason):
        self.accepted = False
        self.reason = reason

    def weights(self, times):
        """Taper values at `times`: zero outside the window, one in its interior."""
        t = np.asarray(times, dtype=float)
        w = ((t >= self.t_lo) & (t <= self.t_hi)).astype(float)
        if self.taper > 0:
            for d in (t - self.t_lo, self.t_hi - t):
                ramp = (d >= 0) & (d < self.taper)
                w[ramp] *= 0.5 * (1.0 - np.cos(math.pi * d[ramp] / self.taper))
        return w

    def __repr__(self):
        return 'PhaseWindow(%s, %s, [%g, %g], %s)' % (self.i, self.j, self.t_lo, self.t_hi, self.reason)


def make_window(t_arr, f0, policy, t_f, pair=(0, 0)):
    """Window around the direct arrival `t_arr` of a source with dominant frequency `f0`.

    The window `[t_arr - a/f0, t_arr + b/f0]` is clipped to `[0, t_f]`; if what
    remains is shorter than two taper widths, the pair is rejected.
    """
    if not np.isfinite(t_arr):
        raise ValueError('arrival time must be finite, got %s' % t_arr)
    T = 1.0 / f0
    i, j = pair
    if not policy.enabled:
        return PhaseWindow(i, j, 0.0, t_f, 0.0)
    taper = policy.c * T
    t_lo = max(0.0, t_arr - policy.a * T)
    t_hi = min(t_f, t_arr + policy.b * T)
    if t_hi <= t_lo or t_hi - t_lo < 2 * taper:
        return PhaseWindow(i, j, 0.0, t_f, 0.0, accepted=False, reason='window')
    return PhaseWindow(i, j, t_lo, t_hi, taper)

def apply_window(window, trace):
    """Multiply `trace` by the taper of `window` and tag it with the window.

    Applying a window to a trace already tagged with it returns the trace
    unchanged.
    """
    if trace.window is window:
        return trace
    if trace.window is not None:
        raise ValueError('trace (%s, %s) already carries a different window' % (trace.i, trace.j))
    return trace.with_samples(window.weights(trace.times) * trace.samples, window=window)

def reflection_time(model, source, point, depth, samples=200):
    """Traveltime of the reflection off a horizontal interface at `depth`.

    The path consists of the two straight legs through the mirror point on
    the interface; slowness is integrated along both legs.

    Returns:
        float: the time in s, or `inf` if source or point lie below the interface
    """
    xs, zs = source.location
    xr, zr = point
    if zs >= depth or zr >= depth:
        return math.inf
    ds, dr = depth - zs, depth - zr
    xm = xs + (xr - xs) * ds / (ds + dr)
    x0, z0 = model.grid.origin
    x1, z1 = model.grid.extent
    total = 0.0
    for (xa, za) in ((xs, zs), (xr, zr)):
        s = np.linspace(0.0, 1.0, samples)
        x = np.clip(xa + s * (xm - xa), x0, x1)
        z = np.clip(za + s * (depth - za), z0, z1)
        L = math.hypot(xm - xa, depth - za)
        total += L * trapezoid(1.0 / model.sample(x, z), dx=s[1] - s[0])
    return total


class AcceptanceTable:
    """Phase windows of all source-receiver pairs, keyed by `(i, j)`."""
    def __init__(self, windows):
        self.windows = dict(((w.i, w.j), w) for w in windows)

    def window(self, i, j):
        return self.windows[(i, j)]

    def pairs(self):
        return sorted(self.windows)

    def accepted_pairs(self):
        return [p for p in self.pairs() if self.windows[p].accepted]

    @property
    def num_accepted(self):
        return len(self.accepted_pairs())

    def counts(self):
        """Number of pairs per reason."""
        result = dict((r, 0) for r in REASONS)
        for w in self.windows.values():
            result[w.reason] += 1
        return result

    def write_csv(self, fname):
        with open(fname, 'w', newline='') as f:
            out = csv.writer(f)
            out.writerow(['i', 'j', 't_lo', 't_hi', 'taper', 'accepted', 'reason'])
            for (i, j) in self.pairs():
                w = self.windows[(i, j)]
                out.writerow([i, j, repr(w.t_lo), repr(w.t_hi), repr(w.taper), int(w.accepted), w.reason])

    @staticmethod
    def read_csv(fname):
        windows = []
        with open(fname, newline='') as f:
            for row in csv.DictReader(f):
                windows.append(PhaseWindow(int(row['i']), int(row['j']), float(row['t_lo']),
                    float(row['t_hi']), float(row['taper']), bool(int(row['accepted'])), row['reason']))
        return AcceptanceTable(windows)


def select_pairs(model_0, sources, receivers, policy, t_f, observed=None, verbose=0):
    """Build the phase windows of all pairs on the initial model and decide acceptance.

    Args:
        model_0 (:class:`pyfwi.grids.VelocityModel`): the initial model
        sources: list of :class:`pyfwi.wave.SourceSpec`
        receivers: list of :class:`pyfwi.wave.ReceiverSpec`
        policy (:class:`PickingPolicy`): window shape and rejection settings
        t_f (float): final time of the traces
        observed: optional dict `{(i, j): Trace}`; enables the energy test

    Returns:
        :class:`AcceptanceTable`
    """
    windows = []
    rec_ids = spec_ids(receivers)
    for (i, src) in zip(spec_ids(sources), sources):
        field = traveltime(model_0, src)
        for (j, rec) in zip(rec_ids, receivers):
            t_dir = field.at(rec.x, rec.z)
            w = make_window(t_dir, src.f0, policy, t_f, pair=(i, j))
            if w.accepted and policy.enabled:
                for depth in policy.reflectors:
                    t_ref = reflection_time(model_0, src, rec.location, depth)
                    if t_ref - t_dir < w.length:
                        w.reject('multipath')
                        break
            windows.append(w)
        if verbose >= 2:
            print('source %s: %d of %d pairs accepted' % (i, sum(w.accepted for w in windows[-len(receivers):]),
                len(receivers)))

    if observed is not None:
        energy = {}
        for w in windows:
            if w.accepted:
                d = observed[(w.i, w.j)]
                energy[(w.i, w.j)] = trapezoid((w.weights(d.times) * d.samples)**2, dx=d.dt)
        E_max = max(energy.values()) if energy else 0.0
        for w in windows:
            if w.accepted and not energy[(w.i, w.j)] > policy.noise_floor * E_max:
                w.reject('low-energy')

    table = AcceptanceTable(windows)
    if table.num_accepted == 0:
        logger.warning('no source-receiver pair was accepted')
    logger.info('pair selection: %s', table.counts())
    if verbose >= 1:
        print('%d of %d pairs accepted' % (table.num_accepted, len(windows)))
    return table
