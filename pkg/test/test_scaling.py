from pyfwi.scaling import *
from scipy.integrate import trapezoid
from pyfwi.wave import Trace, ricker
import numpy as np
import pytest

DT, T_F = 0.01, 5.0
TIMES = DT * np.arange(501)

def _trace(samples, i=0, j=0):
    return Trace(samples, DT, T_F, i, j)

def _pulse(t0, f0=2.0, A=1.0, cut=None):
    v = ricker(TIMES - t0, f0, A)
    if cut is not None:
        v[np.abs(TIMES - t0) > cut] = 0.0
    return v

def _random_trace(rng):
    v = np.zeros_like(TIMES)
    for _ in range(3):
        v += _pulse(rng.uniform(1.0, 4.0), f0=rng.uniform(1.5, 3.0), A=rng.uniform(-1, 1))
    return v

def _operators(eps=1e-3):
    return [ScalingOperator(kind, eps, t_f=T_F) for kind in KINDS]

def test_invalid_operator():
    with pytest.raises(ValueError):
        ScalingOperator('w2-p4')
    with pytest.raises(ValueError):
        ScalingOperator('w2-p3', 0.0)
    with pytest.raises(ValueError):
        apply(ScalingOperator('l2'), _trace(_pulse(2.0)))
    assert not ScalingOperator('L2').is_transport

def test_constant_trace():
    s = _trace(np.full(TIMES.size, 0.7))
    for op in _operators()[1:]:
        f = apply(op, s)
        assert np.allclose(f.density, 1.0 / T_F)

def test_p3_floor():
    op = ScalingOperator('w2-p3', 1e-3, t_f=T_F)
    s = _trace(_pulse(2.5, cut=1.0))
    f = apply(op, s)
    floor = 1e-3 / (1 + T_F * 1e-3)
    assert abs(added_mass(op, s) - floor) < 1e-15
    assert f.density.min() >= floor * (1 - 1e-12)
    assert abs(f.density[0] - floor) < 1e-15
    assert abs(trapezoid(f.density, dx=DT) - 1) < 1e-12

def test_floor_amplitude_dependence():
    # the P3 density is invariant under rescaling of the trace, the P2 floor is not
    p2 = ScalingOperator('w2-p2', 1e-3, t_f=T_F)
    p3 = ScalingOperator('w2-p3', 1e-3, t_f=T_F)
    s = _trace(_pulse(2.5, cut=1.0))
    s100 = _trace(100 * s.samples)
    assert np.allclose(apply(p3, s).density, apply(p3, s100).density, rtol=1e-12)
    assert added_mass(p2, s100) < 1e-3 * added_mass(p2, s)
    assert added_mass(p3, s100) == added_mass(p3, s)

def test_degenerate():
    z = _trace(np.zeros(TIMES.size))
    d = _trace(_pulse(2.5))
    for kind in ('w2-p1', 'w2-p3'):
        op = ScalingOperator(kind, 1e-3, t_f=T_F)
        with pytest.raises(DegenerateTraceError):
            apply(op, z)
        with pytest.raises(DegenerateTraceError):
            misfit_gradient(op, z, d)
    # P2 turns the zero trace into the uniform density
    f = apply(ScalingOperator('w2-p2', 1e-3, t_f=T_F), z)
    assert np.allclose(f.density, 1.0 / T_F)

def test_jacobian():
    rng = np.random.default_rng(4)
    s = _trace(_random_trace(rng))
    ds = _random_trace(rng)
    h = 1e-6
    for op in _operators()[1:]:
        fd = (apply(op, _trace(s.samples + h * ds)).density
            - apply(op, _trace(s.samples - h * ds)).density) / (2 * h)
        dP = jacobian_apply(op, s, ds)
        assert np.allclose(fd, dP, rtol=1e-5, atol=1e-6 * np.abs(dP).max())
        # the normalization preserves unit mass
        assert abs(trapezoid(dP, dx=DT)) < 1e-10 * np.abs(dP).max()

def test_adjoint_identity():
    rng = np.random.default_rng(5)
    for op in _operators()[1:]:
        for _ in range(5):
            s = _trace(_random_trace(rng))
            ds = rng.standard_normal(TIMES.size)
            U = rng.standard_normal(TIMES.size)
            lhs = trapezoid(jacobian_apply(op, s, ds) * U, dx=DT)
            rhs = trapezoid(ds * adjoint_apply(op, s, U), dx=DT)
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)

def test_l2():
    op = ScalingOperator('l2', t_f=T_F)
    d = _trace(_pulse(2.5))
    s = _trace(2 * d.samples)
    chi, Q = misfit_gradient(op, s, d)
    assert np.allclose(Q, d.samples)
    assert abs(chi - 0.5 * trapezoid(d.samples**2, dx=DT)) < 1e-14
    assert misfit(op, d, d) == 0.0

def test_identical_traces():
    d = _trace(_pulse(2.5))
    for op in _operators():
        chi, Q = misfit_gradient(op, d, d)
        assert abs(chi) < 1e-12
        assert np.abs(Q).max() < 1e-8

def test_window_mismatch():
    op = ScalingOperator('w2-p3', 1e-3, t_f=T_F)
    d = _trace(_pulse(2.5))
    s = Trace(d.samples, DT, T_F, window=object())
    with pytest.raises(AssertionError):
        misfit(op, s, d)

def test_shift_landscape():
    # transport misfits grow monotonically with the time shift of a pulse,
    # while the least-squares misfit saturates once the pulses separate
    d = _trace(_pulse(2.5))
    shifts = 0.1 * np.arange(16)
    for kind in ('w2-p1', 'w2-p3'):
        op = ScalingOperator(kind, 1e-3, t_f=T_F)
        for sign in (1, -1):
            values = [misfit(op, _trace(_pulse(2.5 + sign * D)), d) for D in shifts]
            assert np.all(np.diff(values) > 0)
    op = ScalingOperator('l2', t_f=T_F)
    far = [misfit(op, _trace(_pulse(2.5 + D)), d) for D in (1.0, 1.5)]
    assert abs(far[0] - far[1]) <= 1e-3 * far[1]

def test_sample_gradient():
    # directional derivatives of the misfit against central differences
    rng = np.random.default_rng(6)
    for op in _operators():
        for _ in range(20):
            s = _trace(_random_trace(rng), 1, 2)
            d = _trace(_random_trace(rng), 1, 2)
            chi, g = sample_gradient(op, s, d)
            r = _random_trace(rng)
            # mostly along the gradient so the derivative does not cancel
            ds = g + 0.2 * np.linalg.norm(g) / np.linalg.norm(r) * r
            h = 1e-7 * np.abs(s.samples).max() / np.abs(ds).max()
            fd = (misfit(op, _trace(s.samples + h * ds, 1, 2), d)
                - misfit(op, _trace(s.samples - h * ds, 1, 2), d)) / (2 * h)
            an = np.dot(g, ds)
            assert abs(fd - an) <= 1e-4 * abs(an)
