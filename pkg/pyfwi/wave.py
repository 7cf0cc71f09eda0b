"""Finite difference solver for the 2D acoustic wave equation.

The equation :math:`u_{tt} = \\nabla\\cdot(c^2\\nabla u) + f` is discretized by
staggered fourth-order differences in space and leapfrog in time.  With
:math:`D` the staggered difference operator and :math:`C` the harmonic mean
of :math:`c^2` at half nodes, the spatial operator is :math:`L = -D^T C D`,
which is symmetric; this makes the adjoint solve a forward solve in reversed
time.

The physical grid is padded on all sides by a perfectly matched layer using
auxiliary flux variables.  Inside the physical domain the damping vanishes and
the scheme reduces exactly to plain leapfrog.
"""
import logging
import math

import numpy as np
import scipy.sparse

from . import utils
from .grids import ConfigurationError

logger = logging.getLogger(__name__)

# staggered fourth-order coefficients
_C1 = 9.0 / 8.0
_C2 = 1.0 / 24.0

# halo of physical-domain snapshots needed by the stencil
HALO = 2


class InstabilityError(ArithmeticError):
    """The wavefield became non-finite during time stepping."""
    def __init__(self, step):
        ArithmeticError.__init__(self, 'wavefield became non-finite at time step %d' % step)
        self.step = step


class SourceSpec:
    """Ricker point source at `(x, z)` with origin time `tau`.

    Sources must lie strictly inside the physical domain; the solvers raise
    :class:`ConfigurationError` otherwise.
    """
    def __init__(self, x, z, tau=0.0, f0=2.0, amplitude=1.0, index=None):
        if not f0 > 0:
            raise ValueError('dominant frequency must be positive, got %s' % f0)
        if tau < 0:
            raise ValueError('origin time must be nonnegative, got %s' % tau)
        self.x, self.z = float(x), float(z)
        self.tau = float(tau)
        self.f0 = float(f0)
        self.amplitude = float(amplitude)
        self.index = index

    @property
    def location(self):
        return (self.x, self.z)

    def wavelet(self, t):
        return ricker(np.asarray(t) - self.tau, self.f0, self.amplitude)

    def to_dict(self):
        return {'x': self.x, 'z': self.z, 'tau': self.tau, 'f0': self.f0, 'amplitude': self.amplitude}

    def __repr__(self):
        return 'SourceSpec(x=%g, z=%g, tau=%g, f0=%g)' % (self.x, self.z, self.tau, self.f0)


class ReceiverSpec:
    """Receiver location `(x, z)`; it samples at the solver time step.

    Receivers lie strictly inside the physical domain or on its top edge.
    """
    def __init__(self, x, z, index=None):
        self.x, self.z = float(x), float(z)
        self.index = index

    @property
    def location(self):
        return (self.x, self.z)

    def to_dict(self):
        return {'x': self.x, 'z': self.z}

    def __repr__(self):
        return 'ReceiverSpec(x=%g, z=%g)' % (self.x, self.z)


def num_time_samples(t_f, dt):
    """Number of samples `round(t_f/dt) + 1` of a time axis on `[0, t_f]`."""
    if not (dt > 0 and t_f > 0):
        raise ConfigurationError('invalid time axis t_f=%s, dt=%s' % (t_f, dt))
    return int(round(t_f / dt)) + 1


class Trace:
    """Time series of one receiver for one source.

    Attributes:
        samples (ndarray): amplitudes at times `k*dt`, `k = 0, ..., round(t_f/dt)`
        i (int): source id
        j (int): receiver id
        window: the :class:`pyfwi.picking.PhaseWindow` applied to the samples, if any
    """
    def __init__(self, samples, dt, t_f, i=0, j=0, window=None):
        samples = np.array(samples, dtype=float)
        n = num_time_samples(t_f, dt)
        if samples.shape != (n,):
            raise ValueError('trace needs %d samples, got shape %s' % (n, samples.shape))
        if not np.all(np.isfinite(samples)):
            raise ValueError('trace (%d, %d) contains non-finite samples' % (i, j))
        samples.setflags(write=False)
        self.samples = samples
        self.dt = float(dt)
        self.t_f = float(t_f)
        self.i = i
        self.j = j
        self.window = window

    @property
    def times(self):
        return self.dt * np.arange(self.samples.size)

    def with_samples(self, samples, window=None):
        """A trace with the same axis and ids but new samples."""
        return Trace(samples, self.dt, self.t_f, self.i, self.j, window=window)

    def same_axis(self, other):
        return self.samples.size == other.samples.size and abs(self.dt - other.dt) <= 1e-12 * self.dt

    def __repr__(self):
        return 'Trace(i=%s, j=%s, n=%d, dt=%g)' % (self.i, self.j, self.samples.size, self.dt)


def ricker(t, f0, A=1.0):
    """Ricker wavelet `A (1 - 2 pi^2 f0^2 t^2) exp(-pi^2 f0^2 t^2)`; its peak value is `A`."""
    a = (math.pi * f0 * np.asarray(t, dtype=float))**2
    return A * (1.0 - 2.0 * a) * np.exp(-a)

def discrete_delta(x, h):
    """Evaluate the regularized one-dimensional delta function of width `3h`.

    The kernel is a piecewise quintic polynomial in `r = |x|/h`, scaled by `1/h`;
    it vanishes for `r >= 3`. The 2D delta is the tensor product.
    """
    if not h > 0:
        raise ValueError('grid spacing must be positive, got %s' % h)
    r = np.abs(np.asarray(x, dtype=float)) / h
    r2, r3, r4, r5 = r**2, r**3, r**4, r**5
    b1 = 1 - 5/4*r2 - 35/12*r3 + 21/4*r4 - 25/12*r5
    b2 = -4 + 75/4*r - 245/8*r2 + 545/24*r3 - 63/8*r4 + 25/24*r5
    b3 = 18 - 153/4*r + 255/8*r2 - 313/24*r3 + 21/8*r4 - 5/24*r5
    phi = np.where(r <= 1, b1, np.where(r <= 2, b2, np.where(r <= 3, b3, 0.0)))
    return phi / h


class SolverSettings:
    """Numerical settings of the wave solver.

    Args:
        pml_layers (int): number of absorbing layers on each side
        pml_reflection (float): theoretical reflection coefficient of the layer
        cfl_safety (float): admissible Courant number `c_max dt / min(dx,dz)`
        memory_mb (float): budget for stored snapshots per wavefield
        top_pml (bool): if `False`, the top side is reflecting instead of absorbing
    """
    def __init__(self, pml_layers=20, pml_reflection=1e-3, cfl_safety=0.45, memory_mb=1024.0, top_pml=True):
        if pml_layers < HALO:
            raise ConfigurationError('need at least %d PML layers, got %d' % (HALO, pml_layers))
        if not 0 < pml_reflection < 1:
            raise ConfigurationError('PML reflection coefficient must lie in (0,1), got %s' % pml_reflection)
        self.pml_layers = int(pml_layers)
        self.pml_reflection = float(pml_reflection)
        self.cfl_safety = float(cfl_safety)
        self.memory_mb = float(memory_mb)
        self.top_pml = bool(top_pml)

    def to_dict(self):
        return {'pml_layers': self.pml_layers, 'pml_reflection': self.pml_reflection,
                'cfl_safety': self.cfl_safety, 'memory_mb': self.memory_mb, 'top_pml': self.top_pml}

    @staticmethod
    def from_dict(d):
        return SolverSettings(**d)


def check_cfl(model, dt, safety=0.45):
    """Raise :class:`ConfigurationError` if `dt` exceeds the stability limit."""
    h = min(model.grid.spacing)
    limit = safety * h / model.c_max
    if dt > limit * (1 + 1e-12):
        raise ConfigurationError('time step %g violates CFL limit %g (c_max=%g km/s, h=%g km)'
                % (dt, limit, model.c_max, h))

################################################################################
# staggered differences
################################################################################

def _slab(a, axis, start, stop):
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    return a[tuple(idx)]

def diff_half(u, h, axis):
    """Staggered difference from `n` nodes to `n+1` half nodes; zero outside."""
    n = u.shape[axis]
    pad = [(0, 0)] * u.ndim
    pad[axis] = (2, 2)
    up = np.pad(u, pad)
    return (_C1 * (_slab(up, axis, 2, n+3) - _slab(up, axis, 1, n+2))
          - _C2 * (_slab(up, axis, 3, n+4) - _slab(up, axis, 0, n+1))) / h

def diff_half_T(q, h, axis):
    """Transpose of :func:`diff_half`, mapping half nodes back to nodes."""
    n = q.shape[axis] - 1
    pad = [(0, 0)] * q.ndim
    pad[axis] = (1, 1)
    qp = np.pad(q, pad)
    return (_C1 * (_slab(qp, axis, 1, n+1) - _slab(qp, axis, 2, n+2))
          - _C2 * (_slab(qp, axis, 0, n) - _slab(qp, axis, 3, n+3))) / h

def half_node_moduli(c, axis):
    """Harmonic mean of `c**2` at half nodes along `axis`; boundary halves take the adjacent node value."""
    c2 = c**2
    n = c.shape[axis]
    a = _slab(c2, axis, 0, n-1)
    b = _slab(c2, axis, 1, n)
    inner = 2 * a * b / (a + b)
    return np.concatenate((_slab(c2, axis, 0, 1), inner, _slab(c2, axis, n-1, n)), axis=axis)

def apply_operator(c, u, spacing):
    """Apply `L = -D^T C D` for the model values `c` to the field `u` (both `(nz, nx)`)."""
    dx, dz = spacing
    qx = half_node_moduli(c, 1) * diff_half(u, dx, 1)
    qz = half_node_moduli(c, 0) * diff_half(u, dz, 0)
    return -(diff_half_T(qx, dx, 1) + diff_half_T(qz, dz, 0))

def energy(c, u0, u1, dt, spacing):
    """Discrete energy between two consecutive time levels `u0`, `u1`.

    This is the quantity conserved exactly by leapfrog for the operator of
    :func:`apply_operator` with zero values outside the arrays.
    """
    area = spacing[0] * spacing[1]
    kin = 0.5 * np.sum(((u1 - u0) / dt)**2)
    pot = -0.5 * np.sum(u1 * apply_operator(c, u0, spacing))
    return area * (kin + pot)

def region_energy(model, wavefield, n):
    """Energy of a stored wavefield inside the physical domain between steps `n-1` and `n`.

    Kinetic terms run over the physical nodes and potential terms over the half
    nodes between them, so the absorbing layer does not contribute.
    """
    assert 1 <= n < wavefield.nt, 'time step %d out of range' % n
    dx, dz = model.grid.spacing
    nx, nz = model.grid.counts
    u0, u1 = wavefield.snapshot(n - 1), wavefield.snapshot(n)
    phys = (slice(HALO, nz + HALO), slice(HALO, nx + HALO))
    kin = 0.5 * np.sum(((u1[phys] - u0[phys]) / wavefield.dt)**2)
    # half node m lies between the nodes m-1 and m of the padded slice
    hx = (slice(HALO, nz + HALO), slice(HALO + 1, nx + HALO))
    hz = (slice(HALO + 1, nz + HALO), slice(HALO, nx + HALO))
    Cx = half_node_moduli(model.values, 1)[:, 1:-1]
    Cz = half_node_moduli(model.values, 0)[1:-1, :]
    pot = 0.5 * (np.sum(Cx * diff_half(u0, dx, 1)[hx] * diff_half(u1, dx, 1)[hx])
               + np.sum(Cz * diff_half(u0, dz, 0)[hz] * diff_half(u1, dz, 0)[hz]))
    return dx * dz * (kin + pot)

################################################################################
# wavefield storage
################################################################################

class Wavefield:
    """Time slices of a wavefield on the physical grid plus a halo of `HALO` nodes.

    Only every `decimation`-th step (and the last one) is kept; other steps are
    reconstructed by linear interpolation in time.
    """
    def __init__(self, grid, t_f, dt, decimation=1, reverse=False):
        self.grid = grid
        self.t_f = t_f
        self.dt = dt
        self.nt = num_time_samples(t_f, dt)
        self.decimation = max(1, int(decimation))
        self._slices = {}
        self._reverse = reverse

    @property
    def shape(self):
        return (self.grid.counts[1] + 2*HALO, self.grid.counts[0] + 2*HALO)

    def _store(self, n, u):
        N = self.nt - 1
        if n % self.decimation == 0 or n == N:
            self._slices[n] = np.array(u)

    def _stored(self, n):
        k = self.decimation
        if n in self._slices:
            return self._slices[n]
        lo = (n // k) * k
        hi = min(lo + k, self.nt - 1)
        theta = (n - lo) / float(hi - lo)
        return (1 - theta) * self._slices[lo] + theta * self._slices[hi]

    def snapshot(self, n):
        """Field at time step `n` including the halo."""
        assert 0 <= n < self.nt, 'time step %d out of range' % n
        if self._reverse:
            n = self.nt - 1 - n
        return self._stored(n)

    def interior(self, n):
        """Field at time step `n` on the physical grid only."""
        return self.snapshot(n)[HALO:-HALO, HALO:-HALO]

    def write_snapshot(self, fname, n):
        """Write the physical part of slice `n` in the grid file format."""
        utils.write_grid_file(fname, self.interior(n), self.grid.origin, self.grid.spacing)

    def same_axis(self, other):
        return self.grid == other.grid and self.nt == other.nt and abs(self.dt - other.dt) <= 1e-12 * self.dt

    @property
    def nbytes(self):
        return sum(s.nbytes for s in self._slices.values())


def choose_decimation(grid, nt, memory_mb):
    """Smallest snapshot decimation that keeps a wavefield within `memory_mb`."""
    per_slice = (grid.counts[0] + 2*HALO) * (grid.counts[1] + 2*HALO) * 8.0
    max_slices = int(memory_mb * 2**20 // per_slice)
    if max_slices < 2:
        raise ConfigurationError('memory budget of %g MB cannot hold two snapshots' % memory_mb)
    N = nt - 1
    return max(1, int(math.ceil(N / float(max_slices - 1))))

################################################################################
# the time stepping kernel
################################################################################

class Propagator:
    """Time stepping for one model on the PML-padded grid.

    Args:
        model (:class:`pyfwi.grids.VelocityModel`): wave speed on the physical grid
        dt (float): time step
        settings (:class:`SolverSettings`): PML and stability settings
    """
    def __init__(self, model, dt, settings=None):
        if settings is None:
            settings = SolverSettings()
        check_cfl(model, dt, settings.cfl_safety)
        self.model = model
        self.dt = dt
        self.settings = settings
        p = self.p = settings.pml_layers
        grid = model.grid
        self.dx, self.dz = grid.spacing
        nx, nz = grid.counts
        self.padded_origin = (grid.origin[0] - p*self.dx, grid.origin[1] - p*self.dz)
        c = np.pad(model.values, p, mode='edge')
        self.shape = c.shape
        self.Cx = half_node_moduli(c, 1)
        self.Cz = half_node_moduli(c, 0)

        sx, sx_h = self._profile(nx, self.dx, model.c_max, True, True)
        sz, sz_h = self._profile(nz, self.dz, model.c_max, settings.top_pml, True)
        S = sz[:, None] + sx[None, :]
        self.a_plus = 1 + 0.5 * dt * S
        self.a_minus = 1 - 0.5 * dt * S
        self.damp = np.multiply.outer(sz, sx)
        self.gx = sz[:, None] - sx_h[None, :]
        self.bx_plus = np.broadcast_to(1 + 0.5 * dt * sx_h[None, :], self.Cx.shape)
        self.bx_minus = np.broadcast_to(1 - 0.5 * dt * sx_h[None, :], self.Cx.shape)
        self.gz = sx[None, :] - sz_h[:, None]
        self.bz_plus = np.broadcast_to(1 + 0.5 * dt * sz_h[:, None], self.Cz.shape)
        self.bz_minus = np.broadcast_to(1 - 0.5 * dt * sz_h[:, None], self.Cz.shape)
        self.has_pml = np.any(S > 0)

    def _profile(self, n, h, c_max, low, high):
        """Quadratic damping at nodes and half nodes along one padded axis."""
        p = self.p
        thickness = p * h
        d0 = 3.0 * c_max * math.log(1.0 / self.settings.pml_reflection) / (2.0 * thickness)
        def sigma(pos):
            # pos in units of h, relative to the first padded node
            d = np.zeros_like(pos)
            if low:
                d = np.maximum(d, p - pos)
            if high:
                d = np.maximum(d, pos - (p + n - 1))
            return d0 * (d * h / thickness)**2
        nodes = np.arange(n + 2*p, dtype=float)
        halves = np.arange(n + 2*p + 1, dtype=float) - 0.5
        return sigma(nodes), sigma(halves)

    def point_matrix(self, points, surface=False):
        """Sparse matrix of discrete delta weights; one row per point `(x, z)`.

        Row `k` applied to a padded field evaluates `sum(delta(x - x_k) * u)`.
        Points must lie strictly inside the physical domain; with `surface`
        they may also sit on its top edge.
        """
        nzp, nxp = self.shape
        I, J, V = [], [], []
        for k, (x, z) in enumerate(points):
            if not self.model.grid.interior(x, z, surface):
                raise ConfigurationError('point (%g, %g) does not lie inside the physical domain' % (x, z))
            ix, wx = self._stencil(x, self.padded_origin[0], self.dx, nxp)
            iz, wz = self._stencil(z, self.padded_origin[1], self.dz, nzp)
            W = np.multiply.outer(wz, wx)
            idx = np.add.outer(iz * nxp, ix)
            I.extend([k] * W.size)
            J.extend(idx.ravel())
            V.extend(W.ravel())
        return scipy.sparse.coo_matrix((V, (I, J)), shape=(len(points), nzp*nxp)).tocsr()

    @staticmethod
    def _stencil(x, origin, h, n):
        lo = int(math.ceil((x - 3*h - origin) / h))
        hi = int(math.floor((x + 3*h - origin) / h))
        idx = np.arange(max(lo, 0), min(hi, n - 1) + 1)
        return idx, discrete_delta(origin + h*idx - x, h)

    def run(self, nt, injection, series, record=None, wavefield=None, check_every=100):
        """Integrate from zero initial data.

        Args:
            nt (int): number of time levels, including `t = 0`
            injection: point matrix of the forcing locations
            series (ndarray): forcing amplitudes of shape `(num_points, nt)`; level `n`
                drives the update from `u^n` to `u^{n+1}`
            record: optional point matrix of recording locations
            wavefield (:class:`Wavefield`): optional storage for time slices

        Returns:
            ndarray: recorded samples of shape `(num_records, nt)` (empty if `record` is None)
        """
        dt2 = self.dt**2
        nzp, nxp = self.shape
        p, h = self.p, HALO
        u_prev = np.zeros(self.shape)
        u = np.zeros(self.shape)
        phi = np.zeros(self.Cx.shape)
        psi = np.zeros(self.Cz.shape)
        injT = injection.T.tocsr()
        active = np.flatnonzero(np.any(series != 0, axis=0))
        active = set(active.tolist())
        out = np.zeros((record.shape[0] if record is not None else 0, nt))
        scale = self.dx * self.dz
        if wavefield is not None:
            region = (slice(p - h, nzp - p + h), slice(p - h, nxp - p + h))

        for n in range(nt):
            if record is not None:
                out[:, n] = scale * record.dot(u.ravel())
            if wavefield is not None:
                wavefield._store(n, u[region])
            if n % check_every == 0 or n == nt - 1:
                if not np.all(np.isfinite(u)):
                    raise InstabilityError(n)
            if n == nt - 1:
                break
            qx = self.Cx * diff_half(u, self.dx, 1)
            qz = self.Cz * diff_half(u, self.dz, 0)
            if self.has_pml:
                rhs = -(diff_half_T(qx + phi, self.dx, 1) + diff_half_T(qz + psi, self.dz, 0))
                rhs -= self.damp * u
            else:
                rhs = -(diff_half_T(qx, self.dx, 1) + diff_half_T(qz, self.dz, 0))
            if n in active:
                rhs += injT.dot(series[:, n]).reshape(self.shape)
            if self.has_pml:
                u_next = (2*u - self.a_minus * u_prev + dt2 * rhs) / self.a_plus
                phi = (self.bx_minus * phi + self.dt * self.gx * qx) / self.bx_plus
                psi = (self.bz_minus * psi + self.dt * self.gz * qz) / self.bz_plus
            else:
                u_next = 2*u - u_prev + dt2 * rhs
            u_prev, u = u, u_next
        return out

################################################################################
# public solvers
################################################################################

def spec_ids(specs):
    """Ids of sources or receivers: their `index` if set, else their position."""
    return [s.index if s.index is not None else k for (k, s) in enumerate(specs)]

def solve_forward(model, source, receivers, t_f, dt, store=False, settings=None):
    """Simulate one Ricker source and record traces at the receivers.

    Args:
        model (:class:`pyfwi.grids.VelocityModel`): wave speed
        source (:class:`SourceSpec`): the point source
        receivers: list of :class:`ReceiverSpec`
        t_f (float): final time
        dt (float): time step
        store (bool): whether to keep the wavefield for kernel computation
        settings (:class:`SolverSettings`): solver settings

    Returns:
        tuple: `(traces, wavefield)`; `wavefield` is `None` unless `store` is set
    """
    if settings is None:
        settings = SolverSettings()
    prop = Propagator(model, dt, settings)
    nt = num_time_samples(t_f, dt)
    times = dt * np.arange(nt)
    series = source.wavelet(times)[None, :]
    inj = prop.point_matrix([source.location])
    rec = prop.point_matrix([r.location for r in receivers], surface=True) if receivers else None
    wf = None
    if store:
        wf = Wavefield(model.grid, t_f, dt, choose_decimation(model.grid, nt, settings.memory_mb))
    out = prop.run(nt, inj, series, record=rec, wavefield=wf)
    i = source.index if source.index is not None else 0
    traces = [Trace(out[k], dt, t_f, i, j) for (k, j) in enumerate(spec_ids(receivers))]
    logger.debug('forward solve for source %s: %d steps, %d receivers', i, nt - 1, len(receivers))
    return traces, wf

def solve_with_adjoint_sources(model, injections, t_f, dt, settings=None):
    """Solve the adjoint wave equation driven by time series at receivers.

    The adjoint field vanishes at `t_f` together with its time derivative; it
    is computed by a forward solve in reversed time with reversed forcing.

    Args:
        injections: list of pairs `(ReceiverSpec, series)` where `series` is a
            :class:`Trace` or an array on the full time axis

    Returns:
        :class:`Wavefield`: the adjoint field, indexed in forward time
    """
    if settings is None:
        settings = SolverSettings()
    prop = Propagator(model, dt, settings)
    nt = num_time_samples(t_f, dt)
    wf = Wavefield(model.grid, t_f, dt, choose_decimation(model.grid, nt, settings.memory_mb), reverse=True)
    if not injections:
        wf._slices = {n: np.zeros(wf.shape) for n in (0, nt - 1)}
        wf.decimation = nt - 1
        return wf
    series = np.array([np.asarray(getattr(q, 'samples', q), dtype=float) for (_, q) in injections])
    assert series.shape[1] == nt, 'injected series do not match the time axis'
    inj = prop.point_matrix([r.location for (r, _) in injections], surface=True)
    prop.run(nt, inj, series[:, ::-1], wavefield=wf)
    return wf
