"""Velocity models on rectangular grids and transfer between grid resolutions.

Fields are stored as arrays of shape `(nz, nx)`, i.e., the x coordinate
varies fastest. Coordinates are in km, wave speeds in km/s.
"""
import numpy as np
import scipy.sparse
import scipy.sparse.linalg
import scipy.interpolate

from . import utils

VELOCITY_FLOOR = 0.5

# interfaces are closed sets; absorbs round-off in node coordinates
_EPS = 1e-9


class ConfigurationError(ValueError):
    """Raised when grids, geometry or time stepping are inconsistent."""
    pass


class Grid2D:
    """A uniform rectangular grid of nodes.

    Args:
        origin: coordinates `(x0, z0)` of the first node in km
        spacing: node distances `(dx, dz)` in km
        counts: node counts `(nx, nz)`
    """
    def __init__(self, origin, spacing, counts):
        self.origin = tuple(float(o) for o in origin)
        self.spacing = tuple(float(h) for h in spacing)
        self.counts = tuple(int(n) for n in counts)
        if not (self.spacing[0] > 0 and self.spacing[1] > 0):
            raise ConfigurationError('grid spacing must be positive, got %s' % (self.spacing,))
        if min(self.counts) < 2:
            raise ConfigurationError('grid needs at least 2 nodes per axis, got %s' % (self.counts,))

    @property
    def shape(self):
        """Array shape `(nz, nx)` of fields on this grid."""
        return (self.counts[1], self.counts[0])

    @property
    def extent(self):
        """Coordinates `(x1, z1)` of the last node."""
        return tuple(o + h * (n - 1) for (o, h, n) in zip(self.origin, self.spacing, self.counts))

    @property
    def cell_area(self):
        return self.spacing[0] * self.spacing[1]

    def coords(self):
        """Return the node coordinate vectors `(x, z)`."""
        return tuple(o + h * np.arange(n) for (o, h, n) in zip(self.origin, self.spacing, self.counts))

    def weights(self):
        """Trapezoid area weights of the nodes."""
        wx, wz = (utils.trapezoid_weights(n, h) for (h, n) in zip(self.spacing, self.counts))
        return np.multiply.outer(wz, wx)

    def interior(self, x, z, surface=False, tol=1e-9):
        """Whether `(x, z)` lies strictly inside the grid.

        With `surface` set, points on the top edge `z = z0` (away from the
        corners) are accepted too; receivers are placed there.
        """
        (x0, z0), (x1, z1) = self.origin, self.extent
        if not (x0 + tol < x < x1 - tol and z < z1 - tol):
            return False
        return z > z0 + tol or (surface and abs(z - z0) <= tol)

    def nearest_index(self, x, z):
        """Return the index `(iz, ix)` of the node closest to `(x, z)`."""
        ix = int(np.clip(np.round((x - self.origin[0]) / self.spacing[0]), 0, self.counts[0] - 1))
        iz = int(np.clip(np.round((z - self.origin[1]) / self.spacing[1]), 0, self.counts[1] - 1))
        return iz, ix

    def to_dict(self):
        return {'origin': list(self.origin), 'spacing': list(self.spacing), 'counts': list(self.counts)}

    @staticmethod
    def from_dict(d):
        return Grid2D(d['origin'], d['spacing'], d['counts'])

    def __eq__(self, other):
        return (isinstance(other, Grid2D) and self.origin == other.origin
                and self.spacing == other.spacing and self.counts == other.counts)

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash((self.origin, self.spacing, self.counts))

    def __repr__(self):
        return 'Grid2D(origin=%s, spacing=%s, counts=%s)' % (self.origin, self.spacing, self.counts)


class VelocityModel:
    """Wave speed per grid node.

    The value array is copied and made read-only; all values must be finite
    and strictly positive.
    """
    def __init__(self, grid, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ConfigurationError('model values have shape %s, grid expects %s'
                    % (values.shape, grid.shape))
        if not np.all(np.isfinite(values)):
            raise ValueError('velocity model contains non-finite values')
        if not values.min() > 0:
            raise ValueError('velocity model must be positive, minimum is %g' % values.min())
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @property
    def c_max(self):
        return self.values.max()

    @property
    def c_min(self):
        return self.values.min()

    def at(self, x, z):
        """Value at the node nearest to `(x, z)`."""
        return self.values[self.grid.nearest_index(x, z)]

    def sample(self, x, z):
        """Bilinear interpolation at arbitrary points inside the grid."""
        xg, zg = self.grid.coords()
        interp = scipy.interpolate.RegularGridInterpolator((zg, xg), self.values)
        pts = np.stack(np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(x, dtype=float)), axis=-1)
        return interp(pts)

    def updated(self, delta, floor=VELOCITY_FLOOR):
        """Return a new model `max(c + delta, floor)`."""
        return VelocityModel(self.grid, np.maximum(self.values + delta, floor))

    def __repr__(self):
        return 'VelocityModel(%s, range=[%g, %g])' % (self.grid, self.c_min, self.c_max)


def write_model(fname, model):
    """Write a model (or any field with a `grid` and `values`) in the grid file format."""
    utils.write_grid_file(fname, model.values, model.grid.origin, model.grid.spacing)

def read_model(fname):
    values, origin, spacing = utils.read_grid_file(fname)
    grid = Grid2D(origin, spacing, values.shape[::-1])
    return VelocityModel(grid, values)

################################################################################
# preset models
################################################################################

def two_layer_grid():
    """Simulation grid of the two-layer experiment: 80 x 60 km at 0.2 km."""
    return Grid2D((0.0, 0.0), (0.2, 0.2), (401, 301))

def crustal_root_grid():
    """Simulation grid of the crustal root experiment: 80 x 80 km at 0.2 km."""
    return Grid2D((0.0, 0.0), (0.2, 0.2), (401, 401))

def _on(flag):
    if isinstance(flag, str):
        if flag not in ('on', 'off'):
            raise ValueError("expected 'on' or 'off', got %r" % flag)
        return flag == 'on'
    return bool(flag)

def build_two_layer_model(anomaly=True, grid=None, moho=30.0, anomaly_box=(35.0, 45.0, 10.0, 20.0),
        crust=5.8, mantle=8.1, anomaly_speed=6.67):
    """Crust over mantle with an optional fast box in the crust.

    Args:
        anomaly: `True`/'on' to include the anomaly, `False`/'off' for the initial model
        grid (:class:`Grid2D`): sampling grid; defaults to :func:`two_layer_grid`
        moho (float): interface depth in km; nodes with `z <= moho` are crust
        anomaly_box: `(x_lo, x_hi, z_lo, z_hi)` of the closed anomaly region

    Returns:
        :class:`VelocityModel`: the model sampled pointwise at the nodes
    """
    if grid is None:
        grid = two_layer_grid()
    with_anomaly = _on(anomaly)
    x_lo, x_hi, z_lo, z_hi = anomaly_box
    def speed(x, z):
        c = np.where(z <= moho + _EPS, crust, mantle)
        if with_anomaly:
            inside = ((x >= x_lo - _EPS) & (x <= x_hi + _EPS)
                    & (z >= z_lo - _EPS) & (z <= z_hi + _EPS))
            c = np.where(inside, anomaly_speed, c)
        return c
    return VelocityModel(grid, utils.grid_eval(speed, grid.coords()[::-1]))

def build_crustal_root_model(root=True, grid=None, conrad=20.0, moho=36.0, root_depth=25.0,
        root_end=40.0, speeds=(5.8, 6.5, 8.04)):
    """Upper crust, lower crust and mantle with an optional crustal root.

    The Moho lies at `moho + root_depth*(x/root_end)**2` for `x <= root_end`
    and at `moho` elsewhere; without the root it is flat.
    """
    if grid is None:
        grid = crustal_root_grid()
    with_root = _on(root)
    upper, lower, mantle = speeds
    def speed(x, z):
        if with_root:
            L = np.where(x <= root_end + _EPS, moho + root_depth * (x / root_end)**2, moho)
        else:
            L = moho
        return np.where(z <= conrad + _EPS, upper, np.where(z <= L + _EPS, lower, mantle))
    return VelocityModel(grid, utils.grid_eval(speed, grid.coords()[::-1]))

################################################################################
# grid transfer
################################################################################

def hat_collocation(coarse, fine):
    """Collocation matrix of piecewise linear hat functions at fine nodes.

    The hats are centered at the uniformly spaced `coarse` nodes; fine nodes
    outside the coarse hull see the nearest boundary hat with value 1.

    Returns:
        csr_matrix: sparse matrix of shape `(len(fine), len(coarse))`
    """
    coarse = np.asarray(coarse, dtype=float)
    fine = np.asarray(fine, dtype=float)
    n = coarse.size
    H = coarse[1] - coarse[0]
    t = (np.clip(fine, coarse[0], coarse[-1]) - coarse[0]) / H
    idx = np.clip(np.floor(t).astype(int), 0, n - 2)
    frac = t - idx
    m = fine.size
    I = np.concatenate((np.arange(m), np.arange(m)))
    J = np.concatenate((idx, idx + 1))
    V = np.concatenate((1.0 - frac, frac))
    P = scipy.sparse.coo_matrix((V, (I, J)), shape=(m, n)).tocsr()
    P.eliminate_zeros()
    return P


class GridTransfer:
    """Bilinear prolongation from an inversion grid to a simulation grid and
    its adjoint restriction.

    The fine inner product uses trapezoid area weights `W_f`, the coarse one
    the Galerkin mass matrix `M = P^T W_f P`. With these, `restrict` is the
    exact adjoint of `prolongate` and a left inverse of it. Both `P` and `M`
    are tensor products, so `M` is factorized once per axis.
    """
    def __init__(self, coarse, fine, tol=1e-9):
        self.coarse = coarse
        self.fine = fine
        xc, zc = coarse.coords()
        xf, zf = fine.coords()
        for (c, f, h, name) in ((xc, xf, fine.spacing[0], 'x'), (zc, zf, fine.spacing[1], 'z')):
            if c[0] < f[0] - tol or c[-1] > f[-1] + tol:
                raise ConfigurationError('inversion grid exceeds the simulation grid along %s' % name)
            offs = (c - f[0]) / h
            if np.abs(offs - np.round(offs)).max() > tol * max(1.0, abs(offs).max()):
                raise ConfigurationError('inversion grid nodes along %s do not lie on simulation nodes' % name)
        self.Px = hat_collocation(xc, xf)
        self.Pz = hat_collocation(zc, zf)
        self.fine_weights = fine.weights()
        wx = utils.trapezoid_weights(fine.counts[0], fine.spacing[0])
        wz = utils.trapezoid_weights(fine.counts[1], fine.spacing[1])
        self.Mx = (self.Px.T @ scipy.sparse.diags(wx) @ self.Px).tocsc()
        self.Mz = (self.Pz.T @ scipy.sparse.diags(wz) @ self.Pz).tocsc()
        self._solve_x = scipy.sparse.linalg.splu(self.Mx).solve
        self._solve_z = scipy.sparse.linalg.splu(self.Mz).solve

    def _check(self, a, grid):
        a = np.asarray(a, dtype=float)
        if a.shape != grid.shape:
            raise ConfigurationError('field of shape %s does not match grid shape %s' % (a.shape, grid.shape))
        return a

    def prolongate(self, a):
        """Interpolate a coarse field to the fine grid."""
        a = self._check(a, self.coarse)
        return self.Pz.dot(self.Px.dot(a.T).T)

    def restrict(self, b):
        """Adjoint of :meth:`prolongate` with respect to the weighted inner products.

        This is the weighted least-squares projection onto the coarse hat
        space, so `restrict(prolongate(a)) == a` up to round-off.
        """
        b = self._check(b, self.fine)
        Wb = self.fine_weights * b
        rhs = self.Pz.T.dot(self.Px.T.dot(Wb.T).T)
        return self._solve_x(np.ascontiguousarray(self._solve_z(rhs).T)).T

    def restrict_model(self, model):
        """Restrict a velocity model to the inversion grid."""
        return VelocityModel(self.coarse, self.restrict(model.values))

    def fine_inner(self, a, b):
        return np.sum(self.fine_weights * a * b)

    def coarse_inner(self, a, b):
        """Inner product `a^T M b` of two coarse fields."""
        b = np.asarray(b, dtype=float)
        return np.sum(np.asarray(a, dtype=float) * self.Mz.dot(self.Mx.dot(b.T).T))


class FieldPair:
    """A field on the inversion grid together with its prolongation."""
    def __init__(self, transfer, coarse):
        self.transfer = transfer
        self.coarse = np.array(transfer._check(coarse, transfer.coarse))
        self.fine = transfer.prolongate(self.coarse)

    def restricted(self):
        """Restriction of the fine part; equals `coarse` up to round-off."""
        return self.transfer.restrict(self.fine)
