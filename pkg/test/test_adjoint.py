from pyfwi.adjoint import *
from pyfwi.adjoint import _modulus_derivatives
from pyfwi.data import Dataset
from pyfwi.grids import Grid2D, VelocityModel, GridTransfer, ConfigurationError
from pyfwi.picking import AcceptanceTable, PhaseWindow, PickingPolicy, select_pairs
from pyfwi.scaling import ScalingOperator
from pyfwi.wave import SourceSpec, ReceiverSpec, Trace, solve_forward, half_node_moduli
import pyfwi
import numpy as np
import pytest

T_F, DT = 1.0, 0.0125

def _models():
    G = Grid2D((0.0, 0.0), (0.1, 0.1), (61, 61))
    x, z = G.coords()
    def bump(x0, z0, s):
        return np.exp(-np.add.outer((z - z0)**2, (x - x0)**2) / s)
    c0 = VelocityModel(G, 2.0 + 0.2 * bump(3.0, 3.0, 0.5))
    true = VelocityModel(G, c0.values + 0.15 * bump(3.0, 2.7, 0.1))
    return c0, true, bump(3.0, 3.4, 0.1)

def _problem(true, sources=None):
    # waves stay clear of the absorbing layer over the whole time window
    if sources is None:
        sources = [SourceSpec(2.6, 3.0, tau=0.4, index=0)]
    receivers = [ReceiverSpec(3.4, 3.0, index=0), ReceiverSpec(3.0, 2.4, index=1)]
    observed = {}
    for src in sources:
        traces, _ = solve_forward(true, src, receivers, T_F, DT)
        observed.update(((d.i, d.j), d) for d in traces)
    dataset = Dataset(sources, receivers, T_F, DT, observed)
    table = select_pairs(true, sources, receivers, PickingPolicy(enabled=False), T_F)
    return dataset, table

def _misfit(model, dataset, op, table):
    return source_task(model, dataset.sources[0], dataset, op, table, kernel=False).misfit

def test_modulus_derivatives():
    c = 1.5 + np.random.rand(5, 6)
    dc = np.random.rand(5, 6)
    h = 1e-6
    for axis in (0, 1):
        fd = (half_node_moduli(c + h * dc, axis) - half_node_moduli(c - h * dc, axis)) / (2 * h)
        dl, dr = _modulus_derivatives(c, axis)
        n = c.shape[axis]
        left = np.take(np.pad(dc, [(1, 1) if a == axis else (0, 0) for a in (0, 1)], mode='edge'),
                       np.arange(0, n + 1), axis=axis)
        right = np.take(np.pad(dc, [(1, 1) if a == axis else (0, 0) for a in (0, 1)], mode='edge'),
                        np.arange(1, n + 2), axis=axis)
        assert np.allclose(fd, dl * left + dr * right, rtol=1e-7, atol=1e-9)

def test_gradient_mask():
    G = Grid2D((0.0, 0.0), (0.5, 0.5), (21, 11))
    mask = gradient_mask(G, [(5.0, 2.5)], cells=2)
    assert mask.shape == (11, 21)
    assert np.all(mask[:2, :] == 0) and np.all(mask[:, -2:] == 0)
    assert mask[5, 10] == 0 and mask[5, 12] == 0 and mask[5, 13] == 1
    assert mask[3, 3] == 1
    assert np.all(gradient_mask(G, [(5.0, 2.5)], cells=0) == 1)

def test_adjoint_sources_l2():
    t = DT * np.arange(81)
    d = Trace(np.sin(4 * t), DT, T_F, 0, 0)
    s = Trace(2 * d.samples, DT, T_F, 0, 0)
    d1 = Trace(np.cos(4 * t), DT, T_F, 0, 1)
    s1 = Trace(np.zeros(81), DT, T_F, 0, 1)
    table = AcceptanceTable([PhaseWindow(0, 0, 0.0, T_F, 0.0),
                             PhaseWindow(0, 1, 0.0, T_F, 0.0, accepted=False, reason='multipath')])
    adj = build_adjoint_sources(ScalingOperator('l2'), table, [s, s1], [d, d1])
    assert sorted(adj.series) == [0]
    assert np.allclose(adj.series[0], d.samples)
    assert adj.misfit == adj.misfits[0] > 0
    assert not adj.is_zero()
    (rec, q), = adj.injections([ReceiverSpec(1, 1), ReceiverSpec(2, 2)])
    assert rec.location == (1.0, 1.0)
    assert np.allclose(q[1:-1], d.samples[1:-1])
    assert np.allclose(q[[0, -1]], 0.5 * d.samples[[0, -1]])

def test_adjoint_sources_degenerate(caplog):
    t = DT * np.arange(81)
    d = Trace(np.sin(4 * t), DT, T_F, 0, 0)
    s = Trace(np.zeros(81), DT, T_F, 0, 0)
    table = AcceptanceTable([PhaseWindow(0, 0, 0.0, T_F, 0.0)])
    adj = build_adjoint_sources(ScalingOperator('w2-p3', t_f=T_F), table, [s], [d])
    assert adj.flagged == [0]
    assert adj.misfit == 0 and adj.is_zero()
    assert 'skipped' in caplog.text

def test_adjoint_sources_windowed():
    t = DT * np.arange(81)
    d = Trace(np.sin(4 * t), DT, T_F, 0, 0)
    s = Trace(np.sin(4 * t + 0.3), DT, T_F, 0, 0)
    w = PhaseWindow(0, 0, 0.3, 0.7, 0.05)
    adj = build_adjoint_sources(ScalingOperator('w2-p3', t_f=T_F), AcceptanceTable([w]), [s], [d])
    q = adj.series[0]
    assert np.all(q[(t < 0.3) | (t > 0.7)] == 0)
    assert np.any(q != 0)

def test_zero_residual():
    c0, true, _ = _models()
    dataset, table = _problem(c0)
    for kind in ('l2', 'w2-p3'):
        op = ScalingOperator(kind, t_f=T_F)
        r = source_task(c0, dataset.sources[0], dataset, op, table)
        assert abs(r.misfit) < 1e-12
        assert r.kernel.values.shape == c0.grid.shape
        assert np.abs(r.kernel.values).max() < 1e-6
    # identical traces give identically vanishing l2 sources and kernel
    r = source_task(c0, dataset.sources[0], dataset, ScalingOperator('l2'), table)
    assert np.all(r.kernel.values == 0)

def _kernel_directional(kernel, dc):
    return np.sum(kernel.grid.weights() * kernel.values * dc)

def test_kernel_l2():
    # the kernel is the derivative of the discrete misfit
    c0, true, dc = _models()
    dataset, table = _problem(true)
    op = ScalingOperator('l2')
    r = source_task(c0, dataset.sources[0], dataset, op, table)
    assert r.misfit > 0
    h = 1e-3
    fd = (_misfit(c0.updated(h * dc), dataset, op, table)
        - _misfit(c0.updated(-h * dc), dataset, op, table)) / (2 * h)
    an = _kernel_directional(r.kernel, dc)
    assert abs(fd - an) <= 1e-4 * abs(an)

def test_kernel_transport():
    c0, true, dc = _models()
    dataset, table = _problem(true)
    op = ScalingOperator('w2-p3', 1e-3, t_f=T_F)
    r = source_task(c0, dataset.sources[0], dataset, op, table)
    # smaller steps are dominated by round-off in the traces
    h = 1e-4
    fd = (_misfit(c0.updated(h * dc), dataset, op, table)
        - _misfit(c0.updated(-h * dc), dataset, op, table)) / (2 * h)
    an = _kernel_directional(r.kernel, dc)
    assert abs(fd - an) <= 1e-4 * abs(an)

def test_aggregate_gradient():
    c0, true, dc = _models()
    coarse = Grid2D((1.0, 1.0), (0.5, 0.5), (9, 9))
    T = GridTransfer(coarse, c0.grid)
    K = SensitivityKernel(c0.grid, np.random.rand(*c0.grid.shape), 0)
    g = aggregate_gradient([K], T)
    assert np.allclose(g.values, T.restrict(K.values))
    # the coarse pairing equals the fine pairing with the prolongated perturbation
    dm = np.random.rand(*coarse.shape)
    assert np.allclose(g.directional_derivative(dm), T.fine_inner(K.values, T.prolongate(dm)))
    assert g.grid == coarse
    assert abs(g.norm()**2 - T.coarse_inner(g.values, g.values)) < 1e-12 * g.norm()**2
    mask = gradient_mask(c0.grid, [(2.0, 2.0)])
    g2 = aggregate_gradient([K, SensitivityKernel.zero(c0.grid, 1)], T, mask)
    assert np.allclose(g2.values, T.restrict(mask * K.values))
    # smoothing keeps constant kernels
    K1 = SensitivityKernel(c0.grid, np.ones(c0.grid.shape))
    assert np.allclose(aggregate_gradient([K1], T, smoothing_km=0.3).values, 1.0)
    with pytest.raises(AssertionError):
        aggregate_gradient([SensitivityKernel(coarse, np.ones(coarse.shape))], T)

def test_run_sources_order():
    c0, true, _ = _models()
    sources = [SourceSpec(2.6, 3.0, tau=0.4, index=0), SourceSpec(3.0, 3.6, tau=0.4, index=1)]
    dataset, table = _problem(true, sources)
    op = ScalingOperator('l2')
    results = run_sources(c0, dataset, op, table, kernel=False)
    assert [r.i for r in results] == [0, 1]
    assert all(r.kernel is None for r in results)
    coarse = Grid2D((1.0, 1.0), (0.5, 0.5), (9, 9))
    xi, grad, results = compute_gradient(c0, dataset, op, table, GridTransfer(coarse, c0.grid))
    assert xi == results[0].misfit + results[1].misfit
    assert grad.values.shape == coarse.shape

def test_solver_error():
    c0, true, _ = _models()
    dataset, table = _problem(true)
    fast = VelocityModel(c0.grid, 10 * c0.values)
    with pytest.raises(SolverError) as e:
        source_task(fast, dataset.sources[0], dataset, ScalingOperator('l2'), table)
    assert e.value.source == 0
    assert isinstance(e.value.cause, ConfigurationError)

def _crosshole(true, c0, f0=3.0, t_f=3.0, dt=0.0125):
    # the waves reflected at the absorbing layer arrive after t_f
    src, rec = SourceSpec(2.0, 4.0, tau=0.4, f0=f0, index=0), ReceiverSpec(8.0, 4.0, index=0)
    (obs,), _ = solve_forward(true, src, [rec], t_f, dt)
    dataset = Dataset([src], [rec], t_f, dt, {(0, 0): obs})
    table = select_pairs(c0, [src], [rec], PickingPolicy(enabled=False), t_f)
    return dataset, table

def _homogeneous(c):
    G = Grid2D((0.0, 0.0), (0.1, 0.1), (101, 81))
    return VelocityModel(G, np.full(G.shape, c))

def test_kernel_fresnel_zone():
    c0 = _homogeneous(3.0)
    dataset, table = _crosshole(_homogeneous(3.05), c0)
    x, z = c0.grid.coords()
    X, Z = np.meshgrid(x, z)
    dist = np.hypot(np.maximum(0.0, np.maximum(2.0 - X, X - 8.0)), Z - 4.0)
    wavelength, length = 3.0 / 3.0, 6.0
    width = np.sqrt(wavelength * length)
    W = c0.grid.weights()
    for kind in ('l2', 'w2-p3'):
        r = source_task(c0, dataset.sources[0], dataset, ScalingOperator(kind, t_f=3.0), table)
        K = W * np.abs(r.kernel.values)
        assert K.sum() > 0
        assert K[dist <= width].sum() >= 0.9 * K.sum()

def test_kernel_sign():
    # raising the velocity along the path decreases the misfit
    c0 = _homogeneous(3.0)
    x, z = c0.grid.coords()
    box = np.outer((z >= 3.5) & (z <= 4.5), (x >= 4.5) & (x <= 5.5))
    true = VelocityModel(c0.grid, np.where(box, 3.45, 3.0))
    dataset, table = _crosshole(true, c0)
    W = c0.grid.weights()
    for kind in ('l2', 'w2-p3'):
        r = source_task(c0, dataset.sources[0], dataset, ScalingOperator(kind, t_f=3.0), table)
        assert r.misfit > 0
        assert np.sum(W * r.kernel.values * box) < 0

def test_run_sources_deterministic():
    c0, true, _ = _models()
    sources = [SourceSpec(2.6, 3.0, tau=0.4, index=0), SourceSpec(3.0, 3.6, tau=0.4, index=1)]
    dataset, table = _problem(true, sources)
    op = ScalingOperator('w2-p3', t_f=T_F)
    runs = []
    try:
        for num in (4, 4, 1):
            pyfwi.set_max_threads(num)
            runs.append(run_sources(c0, dataset, op, table))
    finally:
        pyfwi.set_max_threads(None)
    for other in runs[1:]:
        for (a, b) in zip(runs[0], other):
            assert a.misfits == b.misfits
            assert np.array_equal(a.kernel.values, b.kernel.values)
