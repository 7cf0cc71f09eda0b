"""One-dimensional optimal transport between probability densities in time.

For densities `f` and `g` on `[0, t_f]` with cumulative distributions `F`
and `G`, the optimal map is `T = G^{-1}(F)` and the squared quadratic
Wasserstein distance is the integral of `|t - T(t)|^2 f(t)`. All integrals use
the trapezoid rule on the sampling axis; the inverse CDF is piecewise linear.
"""
import numpy as np
from scipy.integrate import trapezoid, cumulative_trapezoid

from .utils import trapezoid_weights


class DomainError(ValueError):
    """Argument outside the domain of a function, e.g., a probability outside [0,1]."""
    pass


class ProbabilityTrace:
    """Nonnegative density samples with unit trapezoid mass on `[0, t_f]`."""
    def __init__(self, density, dt, t_f, check=True, tol=1e-12):
        density = np.array(density, dtype=float)
        if check:
            if density.ndim != 1 or density.size < 2:
                raise ValueError('density must be a 1D array with at least 2 samples')
            if np.any(density < 0):
                raise ValueError('density has negative samples (min %g)' % density.min())
            mass = trapezoid(density, dx=dt)
            if abs(mass - 1.0) > tol:
                raise ValueError('density mass is %.16g, expected 1' % mass)
        density.setflags(write=False)
        self.density = density
        self.dt = float(dt)
        self.t_f = float(t_f)

    @property
    def times(self):
        return self.dt * np.arange(self.density.size)

    @staticmethod
    def normalized(values, dt, t_f):
        """Density obtained by dividing nonnegative `values` by their mass."""
        values = np.asarray(values, dtype=float)
        return ProbabilityTrace(values / trapezoid(values, dx=dt), dt, t_f)


class CdfTable:
    """Values of a cumulative distribution function at the sample times."""
    def __init__(self, values, dt, t_f):
        self.values = values
        self.dt = dt
        self.t_f = t_f


class TransportMap:
    """Monotone map `T(t_k)` from the source density's axis into `[0, t_f]`.

    When produced by :func:`w2_squared`, the map also keeps the distribution
    tables it was computed from (`F`, `G`) and the slope of the inverse CDF at
    each sample (`slope`); these are needed for the exact discrete gradient.
    """
    def __init__(self, values, dt, t_f, F=None, G=None, slope=None):
        self.values = np.asarray(values, dtype=float)
        self.dt = dt
        self.t_f = t_f
        self.F = F
        self.G = G
        self.slope = slope

    @property
    def times(self):
        return self.dt * np.arange(self.values.size)


def cdf(f):
    """Cumulative distribution of a :class:`ProbabilityTrace` by running trapezoid integration.

    The values are renormalized so that the last one is exactly 1 and clamped to `[0, 1]`.
    """
    F = cumulative_trapezoid(f.density, dx=f.dt, initial=0)
    F /= F[-1]
    np.clip(F, 0.0, 1.0, out=F)
    F[-1] = 1.0
    return CdfTable(F, f.dt, f.t_f)

def _locate(G, p):
    """Segment index `m` (first node with `G >= p`) and interpolation fraction."""
    vals = G.values
    m = np.searchsorted(vals, p, side='left')
    m = np.clip(m, 1, vals.size - 1)
    G0 = vals[m - 1]
    G1 = vals[m]
    span = G1 - G0
    at_zero = (p <= vals[0])
    with np.errstate(divide='ignore', invalid='ignore'):
        frac = np.where(at_zero, 0.0, (p - G0) / span)
        slope = np.where(at_zero, 0.0, G.dt / span)
    m = np.where(at_zero, 0, m)
    frac = np.where(at_zero, 0.0, frac)
    return m, frac, slope

def quantile(G, p):
    """Inverse of the CDF `G` by monotone piecewise linear interpolation.

    On intervals where `G` is constant the left end point is returned; in
    particular `quantile(G, 0) = 0`.

    Args:
        G (:class:`CdfTable`): cumulative distribution
        p: probability or array of probabilities in `[0, 1]`

    Returns:
        the time(s) `t` with `G(t) = p`
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1) or np.any(np.isnan(p)):
        raise DomainError('quantile argument must lie in [0,1]')
    m, frac, _ = _locate(G, p)
    t = np.where(m == 0, 0.0, G.dt * (m - 1 + frac))
    return t if t.ndim else float(t)

def w2_squared(f, g):
    """Squared quadratic Wasserstein distance between two densities on a common axis.

    Args:
        f (:class:`ProbabilityTrace`): source density
        g (:class:`ProbabilityTrace`): target density

    Returns:
        tuple: `(value, T)` where `T` is the :class:`TransportMap` from `f` to `g`
    """
    assert f.density.size == g.density.size and abs(f.dt - g.dt) <= 1e-12 * f.dt, \
        'densities live on different time axes'
    F = cdf(f)
    G = cdf(g)
    m, frac, slope = _locate(G, F.values)
    T = np.where(m == 0, 0.0, G.dt * (m - 1 + frac))
    # piecewise linear interpolation is monotone up to round-off; enforce it exactly
    T = np.maximum.accumulate(T)
    t = f.times
    value = trapezoid((t - T)**2 * f.density, dx=f.dt)
    return value, TransportMap(T, f.dt, f.t_f, F=F, G=G, slope=slope)

def outer_gradient(f, T, method='trapezoid'):
    """Fréchet derivative of the squared distance with respect to the source density.

    With `method='trapezoid'` this is `U(t) = 2 int_0^t (tau - T(tau)) dtau`,
    integrated by the running trapezoid rule, so that `U(0) = 0`.

    With `method='discrete'` the result is the exact gradient of the discrete
    value returned by :func:`w2_squared`, represented with respect to the
    trapezoid inner product. It differs from the trapezoid formula by a
    constant plus higher order terms and requires a map computed by
    :func:`w2_squared`.

    Returns:
        ndarray: samples of `U`
    """
    t = f.dt * np.arange(f.density.size)
    Tv = T.values if isinstance(T, TransportMap) else np.asarray(T, dtype=float)
    if method == 'trapezoid':
        return 2.0 * cumulative_trapezoid(t - Tv, dx=f.dt, initial=0)
    elif method == 'discrete':
        if getattr(T, 'F', None) is None:
            raise ValueError('discrete gradient requires a map computed by w2_squared')
        return _discrete_gradient(f, T)
    else:
        raise ValueError('unknown gradient method %s' % method)

def _discrete_gradient(f, T):
    dt = f.dt
    n = f.density.size
    t = f.times
    Tv = T.values
    Fv = T.F.values
    w = trapezoid_weights(n, dt)
    # the normalization constant of the running integral before rescaling
    C_N = trapezoid(f.density, dx=dt)
    a = w * f.density * 2.0 * (Tv - t) * T.slope
    # tail sums A[m] = sum_{k >= m} a_k, with A[n] = 0
    A = np.zeros(n + 1)
    A[:n] = np.cumsum(a[::-1])[::-1]
    m = np.arange(n)
    # f_m enters the increments ending at m and starting at m
    dC = 0.5 * dt * (A[m + 1] + np.where(m >= 1, A[m], 0.0))
    B = np.dot(a, Fv)
    grad = w * (t - Tv)**2 + (dC - w * B) / C_N
    return grad / w

def write_map_csv(fname, f, T, U):
    """Write columns `t, f(t), T(t), U(t)` for plotting transport maps."""
    table = np.column_stack((f.times, f.density, T.values, U))
    np.savetxt(fname, table, delimiter=',', header='t,f,T,U', comments='', fmt='%.17g')
