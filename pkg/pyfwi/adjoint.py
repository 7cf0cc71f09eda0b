"""Adjoint sources, sensitivity kernels and the misfit gradient.

For one source, the adjoint field is driven at the receivers by the misfit
derivatives `Q_ij` of the accepted pairs. Correlating it with the stored
forward field gives the sensitivity kernel. The kernel is the exact
derivative of the discrete misfit with respect to the node velocities, taken
through the harmonic averages of the wave operator. Kernels are summed over
sources in a fixed order and restricted to the inversion grid.
"""
import concurrent.futures
import logging

import numpy as np
import scipy.ndimage

from . import get_max_threads
from .utils import trapezoid_weights
from .scaling import misfit_gradient, DegenerateTraceError
from .picking import apply_window
from .wave import HALO, diff_half, solve_forward, solve_with_adjoint_sources, spec_ids

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A forward or adjoint solve of one source failed."""
    def __init__(self, source, cause):
        RuntimeError.__init__(self, 'solve for source %s failed: %s' % (source, cause))
        self.source = source
        self.cause = cause


class AdjointSourceSet:
    """Adjoint sources `Q_ij(t)` of one source `i`.

    Attributes:
        series (dict): `Q_ij` on the full time axis for every accepted pair `j`;
            the taper of the phase window is applied, so `Q_ij` vanishes outside it
        misfits (dict): `chi_ij` of the accepted pairs
        flagged (list): receivers whose pair was degenerate and contributes nothing
    """
    def __init__(self, i, dt):
        self.i = i
        self.dt = dt
        self.series = {}
        self.misfits = {}
        self.flagged = []

    @property
    def misfit(self):
        return sum(self.misfits[j] for j in sorted(self.misfits))

    def is_zero(self):
        return all(not np.any(q) for q in self.series.values())

    def injections(self, receivers):
        """Forcing time series `(receiver, w_n Q_n / dt)` for the adjoint solve."""
        by_id = dict(zip(spec_ids(receivers), receivers))
        result = []
        for j in sorted(self.series):
            q = self.series[j]
            if np.any(q):
                result.append((by_id[j], trapezoid_weights(q.size, self.dt) * q / self.dt))
        return result


def build_adjoint_sources(op, table, synthetic, observed):
    """Misfits and adjoint sources of one source.

    Args:
        op (:class:`pyfwi.scaling.ScalingOperator`): misfit definition
        table (:class:`pyfwi.picking.AcceptanceTable`): frozen phase windows
        synthetic: traces `s_ij` of source `i` (one per receiver)
        observed: traces `d_ij` in the same order

    Returns:
        :class:`AdjointSourceSet`
    """
    assert len(synthetic) == len(observed), 'need one observed trace per synthetic trace'
    i = synthetic[0].i if synthetic else None
    result = AdjointSourceSet(i, synthetic[0].dt if synthetic else None)
    for (s, d) in zip(synthetic, observed):
        assert (s.i, s.j) == (d.i, d.j), 'trace pairs out of order'
        window = table.window(s.i, s.j)
        if not window.accepted:
            continue
        s_w = apply_window(window, s)
        d_w = apply_window(window, d)
        try:
            chi, Q = misfit_gradient(op, s_w, d_w)
        except DegenerateTraceError as e:
            logger.warning('pair (%s, %s) skipped: %s', s.i, s.j, e)
            result.flagged.append(s.j)
            continue
        result.misfits[s.j] = chi
        result.series[s.j] = window.weights(s.times) * Q
    return result


class SensitivityKernel:
    """Kernel `K_i` of one source on the simulation grid.

    `K_i` is a density with respect to the trapezoid area weights, i.e. the
    first order misfit change is `sum(W * K_i * dc)`.
    """
    def __init__(self, grid, values, i=None):
        assert values.shape == grid.shape, 'kernel does not match the grid'
        self.grid = grid
        self.values = values
        self.i = i

    @staticmethod
    def zero(grid, i=None):
        return SensitivityKernel(grid, np.zeros(grid.shape), i)


def _modulus_derivatives(c, axis):
    """Derivatives of the half node moduli with respect to the left and right node velocity.

    Returns arrays with one entry per half node along `axis`, the boundary
    halves included; there both sides are the same node.
    """
    pad = [(0, 0), (0, 0)]
    pad[axis] = (1, 1)
    ce = np.pad(c, pad, mode='edge')
    n = ce.shape[axis]
    left = np.take(ce, np.arange(0, n - 1), axis=axis)
    right = np.take(ce, np.arange(1, n), axis=axis)
    a, b = left**2, right**2
    denom = (a + b)**2
    return 4 * left * b**2 / denom, 4 * right * a**2 / denom

def _scatter_halves(dl, dr, axis):
    """Sum half node contributions onto the adjacent nodes."""
    n = dl.shape[axis] - 1
    out = np.take(dr, np.arange(0, n), axis=axis)
    out = out + np.take(dl, np.arange(1, n + 1), axis=axis)
    return out

def compute_kernel(model, forward, adjoint, i=None):
    """Correlate forward and adjoint fields of one source into its kernel.

    The time sum runs over all steps of the common time axis with the step
    `dt`; spatial differences use the solver's staggered stencil.
    """
    assert forward.same_axis(adjoint), 'forward and adjoint fields live on different axes'
    assert forward.grid == model.grid, 'wavefield does not match the model grid'
    grid = model.grid
    nx, nz = grid.counts
    dx, dz = grid.spacing
    Sx = np.zeros((nz, nx + 1))
    Sz = np.zeros((nz + 1, nx))
    rows = slice(HALO, nz + HALO)
    cols = slice(HALO, nx + HALO)
    halves_x = slice(HALO, nx + HALO + 1)
    halves_z = slice(HALO, nz + HALO + 1)
    for n in range(forward.nt):
        w = adjoint.snapshot(n)
        if not np.any(w):
            continue
        u = forward.snapshot(n)
        Sx += diff_half(w, dx, 1)[rows, halves_x] * diff_half(u, dx, 1)[rows, halves_x]
        Sz += diff_half(w, dz, 0)[halves_z, cols] * diff_half(u, dz, 0)[halves_z, cols]
    c = model.values
    dlx, drx = _modulus_derivatives(c, 1)
    dlz, drz = _modulus_derivatives(c, 0)
    grad = _scatter_halves(dlx * Sx, drx * Sx, 1) + _scatter_halves(dlz * Sz, drz * Sz, 0)
    grad *= -grid.cell_area * forward.dt
    return SensitivityKernel(grid, grad / grid.weights(), i)


def gradient_mask(grid, points, cells=3):
    """Mask that is zero on a boundary ring and on discs around `points`.

    Args:
        grid (:class:`pyfwi.grids.Grid2D`): simulation grid
        points: coordinates `(x, z)` of sources and receivers
        cells (int): width of the ring and radius of the discs in grid cells
    """
    mask = np.ones(grid.shape)
    if cells <= 0:
        return mask
    mask[:cells, :] = 0
    mask[-cells:, :] = 0
    mask[:, :cells] = 0
    mask[:, -cells:] = 0
    xg, zg = grid.coords()
    X, Z = np.meshgrid(xg, zg)
    radius = cells * max(grid.spacing)
    for (x, z) in points:
        mask[np.hypot(X - x, Z - z) <= radius + 1e-9] = 0
    return mask


class GradientField:
    """Gradient of the misfit with respect to the velocities on the inversion grid.

    The first order misfit change for a coarse perturbation `dm` is
    :meth:`directional_derivative`, i.e., the coarse inner product.
    """
    def __init__(self, transfer, values):
        self.transfer = transfer
        self.values = values

    @property
    def grid(self):
        return self.transfer.coarse

    def directional_derivative(self, dm):
        return self.transfer.coarse_inner(self.values, dm)

    def norm(self):
        return np.sqrt(self.transfer.coarse_inner(self.values, self.values))


def aggregate_gradient(kernels, transfer, mask=None, smoothing_km=0.0):
    """Sum kernels in the given order, mask them and restrict to the inversion grid.

    Args:
        kernels: list of :class:`SensitivityKernel` on the simulation grid
        transfer (:class:`pyfwi.grids.GridTransfer`): simulation/inversion grid pair
        mask (ndarray): optional mask on the simulation grid
        smoothing_km (float): standard deviation of an optional Gaussian filter

    Returns:
        :class:`GradientField`
    """
    total = np.zeros(transfer.fine.shape)
    for K in kernels:
        assert K.grid == transfer.fine, 'kernel lives on a different grid'
        total += K.values
    if smoothing_km > 0:
        dx, dz = transfer.fine.spacing
        total = scipy.ndimage.gaussian_filter(total, sigma=(smoothing_km / dz, smoothing_km / dx), mode='nearest')
    if mask is not None:
        total = mask * total
    return GradientField(transfer, transfer.restrict(total))


class SourceResult:
    """Misfit terms, synthetic traces and (optionally) the kernel of one source."""
    def __init__(self, i, adjoint_sources, synthetic, kernel=None):
        self.i = i
        self.adjoint_sources = adjoint_sources
        self.synthetic = synthetic
        self.kernel = kernel

    @property
    def misfit(self):
        return self.adjoint_sources.misfit

    @property
    def misfits(self):
        return self.adjoint_sources.misfits


def source_task(model, source, dataset, op, table, settings=None, kernel=True):
    """Forward solve, misfit and (if `kernel` is set) adjoint solve and kernel of one source."""
    i = source.index
    try:
        synthetic, fwd = solve_forward(model, source, dataset.receivers, dataset.t_f, dataset.dt,
                store=kernel, settings=settings)
        adj_src = build_adjoint_sources(op, table, synthetic, dataset.traces_for(i))
        K = None
        if kernel:
            injections = adj_src.injections(dataset.receivers)
            if injections:
                adj = solve_with_adjoint_sources(model, injections, dataset.t_f, dataset.dt, settings=settings)
                K = compute_kernel(model, fwd, adj, i)
            else:
                K = SensitivityKernel.zero(model.grid, i)
    except (ArithmeticError, ValueError) as e:
        raise SolverError(i, e)
    logger.debug('source %s: misfit %g', i, adj_src.misfit)
    return SourceResult(i, adj_src, synthetic, K)

def run_sources(model, dataset, op, table, settings=None, kernel=True):
    """Run :func:`source_task` for all sources concurrently; results are in source order."""
    def task(src):
        return source_task(model, src, dataset, op, table, settings=settings, kernel=kernel)
    with concurrent.futures.ThreadPoolExecutor(max_workers=get_max_threads()) as pool:
        return list(pool.map(task, dataset.sources))

def compute_gradient(model, dataset, op, table, transfer, mask=None, settings=None, smoothing_km=0.0):
    """Total misfit and its gradient on the inversion grid.

    Returns:
        tuple: `(xi, gradient, results)` where `results` are the per-source
        :class:`SourceResult` objects
    """
    results = run_sources(model, dataset, op, table, settings=settings, kernel=True)
    xi = sum(r.misfit for r in results)
    grad = aggregate_gradient([r.kernel for r in results], transfer, mask, smoothing_km)
    return xi, grad, results
