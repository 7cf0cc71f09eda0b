import numpy as np

def _broadcast_to_grid(X, grid_shape):
    # input might be a single scalar; make sure it's an array
    X = np.asanyarray(X)
    if X.shape != grid_shape:
        X = np.broadcast_to(X, grid_shape)
    return X

def grid_eval(f, grid):
    """Evaluate function `f(x, z)` over the tensor grid `grid` = (z, x).

    The result has shape `(len(z), len(x))`, i.e., x is the fastest axis.
    """
    if hasattr(f, 'grid_eval'):
        return f.grid_eval(grid)
    else:
        # meshgrid returns a tuple in numpy 2; convert order ZX into XZ
        mesh = list(np.meshgrid(*grid, sparse=True, indexing='ij'))[::-1]
        values = f(*mesh)
        return _broadcast_to_grid(values, tuple(len(g) for g in grid))

def trapezoid_weights(n, h):
    """Weights of the composite trapezoid rule with `n` nodes and spacing `h`.

    Integrals themselves go through :func:`scipy.integrate.trapezoid`; the
    weights are needed where a derivative is expressed in the discrete inner
    product.
    """
    if n < 2:
        raise ValueError('trapezoid rule needs at least two nodes, got %d' % n)
    w = np.full(n, float(h))
    w[0] = w[-1] = 0.5 * h
    return w

################################################################################
# file formats
################################################################################

def write_grid_file(fname, values, origin, spacing):
    """Write node values in the plain-text grid format.

    The header line holds `nx nz dx dz x0 z0`; it is followed by one line per
    row of constant z containing the `nx` values of that row. Files ending in
    ``.csv`` are written as `x,z,value` columns instead.
    """
    values = np.asarray(values, dtype=float)
    nz, nx = values.shape
    x0, z0 = origin
    dx, dz = spacing
    if str(fname).endswith('.csv'):
        x = x0 + dx * np.arange(nx)
        z = z0 + dz * np.arange(nz)
        X, Z = np.meshgrid(x, z)
        table = np.column_stack((X.ravel(), Z.ravel(), values.ravel()))
        np.savetxt(fname, table, delimiter=',', header='x,z,value', comments='', fmt='%.17g')
    else:
        header = '%d %d %.17g %.17g %.17g %.17g' % (nx, nz, dx, dz, x0, z0)
        np.savetxt(fname, values, header=header, comments='', fmt='%.17g')

def read_grid_file(fname):
    """Read a grid file written by :func:`write_grid_file`.

    Returns:
        tuple: `(values, origin, spacing)` with `values` of shape `(nz, nx)`
    """
    if str(fname).endswith('.csv'):
        x, z, v = np.loadtxt(fname, delimiter=',', skiprows=1, unpack=True, ndmin=2)
        xs, zs = np.unique(x), np.unique(z)
        if xs.size * zs.size != v.size:
            raise ValueError('%s does not describe a full tensor grid' % fname)
        values = v.reshape(zs.size, xs.size)
        return values, (xs[0], zs[0]), (xs[1] - xs[0], zs[1] - zs[0])
    with open(fname) as f:
        header = f.readline().split()
    if len(header) != 6:
        raise ValueError('%s: malformed grid header' % fname)
    nx, nz = int(header[0]), int(header[1])
    dx, dz, x0, z0 = (float(h) for h in header[2:])
    values = np.loadtxt(fname, skiprows=1, ndmin=2)
    if values.shape != (nz, nx):
        raise ValueError('%s: expected %dx%d values, found %s' % (fname, nz, nx, values.shape))
    return values, (x0, z0), (dx, dz)

def write_trace_file(fname, samples, i, j, dt, t_f):
    """Write one trace; CSV with a header line, or raw float64 if the name ends in ``.bin``."""
    samples = np.asarray(samples, dtype=float)
    if str(fname).endswith('.bin'):
        np.concatenate(([i, j, dt, t_f], samples)).astype('<f8').tofile(fname)
    else:
        np.savetxt(fname, samples, header='%d,%d,%.17g,%.17g' % (i, j, dt, t_f),
                comments='', fmt='%.17g')

def read_trace_file(fname):
    """Read a trace file.

    Returns:
        tuple: `(samples, i, j, dt, t_f)`
    """
    if str(fname).endswith('.bin'):
        raw = np.fromfile(fname, dtype='<f8')
        if raw.size < 5:
            raise ValueError('%s: truncated trace file' % fname)
        return raw[4:], int(raw[0]), int(raw[1]), raw[2], raw[3]
    with open(fname) as f:
        header = f.readline().strip().split(',')
    if len(header) != 4:
        raise ValueError('%s: malformed trace header' % fname)
    samples = np.loadtxt(fname, skiprows=1, ndmin=1)
    return samples, int(header[0]), int(header[1]), float(header[2]), float(header[3])
