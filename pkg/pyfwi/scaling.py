"""Normalization of signed traces into probability densities, and the misfits built on them.

The operators square the trace and normalize it to unit mass:

* ``w2-p1``: `s^2 / |s^2|`
* ``w2-p2``: `(s^2 + eps) / |s^2 + eps|`
* ``w2-p3``: `(s^2/|s^2| + eps) / (1 + t_f eps)`

where `|.|` is the trapezoid integral over `[0, t_f]`. The ``l2`` kind is the
classical least-squares misfit `1/2 int (s - d)^2` and does not normalize.

All adjoint sources are represented with respect to the trapezoid inner
product, i.e., the derivative of a misfit `chi` along `ds` is
`sum(w * Q * ds)` with the trapezoid weights `w`.
"""
import numpy as np
from scipy.integrate import trapezoid

from .utils import trapezoid_weights
from .transport import ProbabilityTrace, w2_squared, outer_gradient

KINDS = ('l2', 'w2-p1', 'w2-p2', 'w2-p3')

DEFAULT_EPSILON = 1e-3
# range in which the floor parameter is known to work well
EPSILON_RANGE = (1e-4, 1e-2)


class DegenerateTraceError(ValueError):
    """The trace has zero squared mass and cannot be normalized."""
    pass


class ScalingOperator:
    """A trace normalization together with the misfit it induces.

    Args:
        kind (str): one of ``'l2'``, ``'w2-p1'``, ``'w2-p2'``, ``'w2-p3'``
        epsilon (float): floor parameter for P2 and P3
        t_f (float): length of the time axis
    """
    def __init__(self, kind, epsilon=DEFAULT_EPSILON, t_f=None):
        kind = kind.lower()
        if kind not in KINDS:
            raise ValueError('unknown misfit kind %s (expected one of %s)' % (kind, ', '.join(KINDS)))
        if kind in ('w2-p2', 'w2-p3') and not epsilon > 0:
            raise ValueError('%s requires epsilon > 0, got %s' % (kind, epsilon))
        if epsilon < 0:
            raise ValueError('epsilon must be nonnegative, got %s' % epsilon)
        self.kind = kind
        self.epsilon = float(epsilon)
        self.t_f = t_f

    @property
    def is_transport(self):
        return self.kind != 'l2'

    def __repr__(self):
        if self.is_transport:
            return 'ScalingOperator(%s, epsilon=%g)' % (self.kind, self.epsilon)
        return 'ScalingOperator(l2)'


def _samples(s):
    return np.asarray(getattr(s, 'samples', s), dtype=float)

def _axis(op, s):
    """Sample spacing and the length of the axis spanned by the samples."""
    length = s.dt * (_samples(s).size - 1)
    if op.t_f is not None:
        assert abs(op.t_f - length) <= 1e-9 * length, \
            "operator axis %g does not match trace axis %g" % (op.t_f, length)
    return s.dt, length

def apply(op, s):
    """Normalize the trace `s` into a :class:`ProbabilityTrace`.

    Raises:
        DegenerateTraceError: for P1 and P3 if `s` is identically zero
    """
    if not op.is_transport:
        raise ValueError('the l2 misfit does not normalize traces')
    dt, t_f = _axis(op, s)
    x = _samples(s)
    eps = op.epsilon
    if op.kind == 'w2-p2':
        v = x**2 + eps
        return ProbabilityTrace(v / trapezoid(v, dx=dt), dt, t_f)
    N = trapezoid(x**2, dx=dt)
    if not N > 0:
        raise DegenerateTraceError('trace (%s, %s) has zero energy' % (getattr(s, 'i', '?'), getattr(s, 'j', '?')))
    if op.kind == 'w2-p1':
        return ProbabilityTrace(x**2 / N, dt, t_f)
    else:
        return ProbabilityTrace((x**2 / N + eps) / (1 + t_f * eps), dt, t_f)

def added_mass(op, s):
    """Value of the density floor that the operator adds where `s` vanishes."""
    dt, t_f = _axis(op, s)
    eps = op.epsilon
    if op.kind == 'w2-p2':
        return eps / trapezoid(_samples(s)**2 + eps, dx=dt)
    elif op.kind == 'w2-p3':
        return eps / (1 + t_f * eps)
    return 0.0

def adjoint_apply(op, s, U):
    """Apply the transposed Jacobian of the normalization at `s` to `U`.

    Args:
        op (:class:`ScalingOperator`): a transport kind
        s (:class:`pyfwi.wave.Trace`): trace at which the Jacobian is taken
        U (ndarray): outer gradient with respect to the density

    Returns:
        ndarray: the adjoint source `Q` with `<dP(s) ds, U> = <ds, Q>`
    """
    if not op.is_transport:
        raise ValueError('use misfit_gradient for the l2 misfit')
    dt, t_f = _axis(op, s)
    x = _samples(s)
    U = np.asarray(U, dtype=float)
    eps = op.epsilon
    if op.kind == 'w2-p2':
        v = x**2 + eps
        N = trapezoid(v, dx=dt)
        return 2 * x / N * (U - trapezoid(U * v, dx=dt) / N)
    N = trapezoid(x**2, dx=dt)
    if not N > 0:
        raise DegenerateTraceError('trace (%s, %s) has zero energy' % (getattr(s, 'i', '?'), getattr(s, 'j', '?')))
    Q = 2 * x / N * (U - trapezoid(U * x**2, dx=dt) / N)
    if op.kind == 'w2-p3':
        Q /= (1 + t_f * eps)
    return Q

def jacobian_apply(op, s, ds):
    """Directional derivative of the normalization at `s` along `ds`."""
    dt, t_f = _axis(op, s)
    x = _samples(s)
    ds = np.asarray(ds, dtype=float)
    eps = op.epsilon
    if op.kind == 'w2-p2':
        v = x**2 + eps
        N = trapezoid(v, dx=dt)
        dN = trapezoid(2 * x * ds, dx=dt)
        return 2 * x * ds / N - v * dN / N**2
    N = trapezoid(x**2, dx=dt)
    dN = trapezoid(2 * x * ds, dx=dt)
    dP = 2 * x * ds / N - x**2 * dN / N**2
    if op.kind == 'w2-p3':
        dP /= (1 + t_f * eps)
    return dP

def _check_pair(s, d):
    assert s.same_axis(d), 'traces live on different time axes'
    assert getattr(s, 'window', None) is getattr(d, 'window', None), \
        'synthetic and observed traces carry different windows'

def misfit(op, s, d):
    """Misfit between synthetic trace `s` and observed trace `d`."""
    _check_pair(s, d)
    if not op.is_transport:
        return 0.5 * trapezoid((_samples(s) - _samples(d))**2, dx=s.dt)
    value, _ = w2_squared(apply(op, s), apply(op, d))
    return value

def misfit_gradient(op, s, d):
    """Misfit and adjoint source in one pass.

    Returns:
        tuple: `(chi, Q)` where `Q` represents the derivative of `chi` with
        respect to the samples of `s` in the trapezoid inner product
    """
    _check_pair(s, d)
    if not op.is_transport:
        r = _samples(s) - _samples(d)
        return 0.5 * trapezoid(r**2, dx=s.dt), r
    f = apply(op, s)
    value, T = w2_squared(f, apply(op, d))
    U = outer_gradient(f, T, method='discrete')
    return value, adjoint_apply(op, s, U)

def sample_gradient(op, s, d):
    """Gradient of the misfit with respect to the raw samples of `s` (no inner product weights)."""
    value, Q = misfit_gradient(op, s, d)
    return value, trapezoid_weights(Q.size, s.dt) * Q
