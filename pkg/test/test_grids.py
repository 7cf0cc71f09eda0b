from pyfwi.grids import *
import numpy as np
import pytest

def test_grid2d():
    G = Grid2D((1.0, 2.0), (0.5, 0.25), (5, 9))
    assert G.shape == (9, 5)
    assert np.allclose(G.extent, (3.0, 4.0))
    x, z = G.coords()
    assert np.allclose(x, [1, 1.5, 2, 2.5, 3])
    assert z.shape == (9,)
    assert G.weights().shape == G.shape
    assert abs(G.weights().sum() - 2.0 * 2.0) < 1e-14
    assert G.interior(2.0, 3.0)
    assert not G.interior(3.0, 3.0) and not G.interior(3.1, 3.0)
    # the top edge counts only for surface points, the bottom edge never
    assert not G.interior(2.0, 2.0) and G.interior(2.0, 2.0, surface=True)
    assert not G.interior(2.0, 4.0, surface=True)
    assert not G.interior(1.0, 2.0, surface=True)
    assert G.nearest_index(1.6, 2.3) == (1, 1)
    assert Grid2D.from_dict(G.to_dict()) == G

def test_grid2d_invalid():
    with pytest.raises(ConfigurationError):
        Grid2D((0, 0), (0.0, 1.0), (3, 3))
    with pytest.raises(ConfigurationError):
        Grid2D((0, 0), (1.0, 1.0), (1, 3))

def test_velocity_model():
    G = Grid2D((0, 0), (1.0, 1.0), (4, 3))
    c = VelocityModel(G, np.full(G.shape, 3.0))
    assert c.c_min == c.c_max == 3.0
    with pytest.raises(ValueError):
        c.values[0, 0] = 1.0
    with pytest.raises(ValueError):
        VelocityModel(G, -np.ones(G.shape))
    with pytest.raises(ValueError):
        VelocityModel(G, np.full(G.shape, np.nan))
    with pytest.raises(ConfigurationError):
        VelocityModel(G, np.ones((4, 3)))
    # update respects the floor
    c2 = c.updated(np.full(G.shape, -10.0))
    assert np.all(c2.values == VELOCITY_FLOOR)

def test_two_layer_model():
    c = build_two_layer_model('on')
    assert c.values.shape == (301, 401)
    assert c.at(40, 15) == 6.67
    assert c.at(40, 45) == 8.1
    assert c.at(40, 30) == 5.8     # interface belongs to the crust
    c0 = build_two_layer_model('off')
    assert c0.at(40, 15) == 5.8
    # builders are pure
    assert np.array_equal(build_two_layer_model(True).values, c.values)
    assert c.c_min > 0

def test_crustal_root_model():
    c = build_crustal_root_model('on')
    assert c.values.shape == (401, 401)
    assert c.at(0, 40) == 8.04
    assert c.at(20, 40) == 6.5
    assert c.at(10, 10) == 5.8
    c0 = build_crustal_root_model('off')
    assert c0.at(20, 40) == 8.04
    with pytest.raises(ValueError):
        build_crustal_root_model('maybe')

def test_sample():
    G = Grid2D((0, 0), (1.0, 1.0), (5, 4))
    x, z = G.coords()
    c = VelocityModel(G, 2.0 + np.add.outer(0.5 * z, 0.25 * x))
    assert np.allclose(c.sample(1.5, 2.5), 2.0 + 0.25*1.5 + 0.5*2.5)

def test_model_file(tmp_path):
    c = build_two_layer_model(True, grid=Grid2D((0, 0), (2.0, 2.0), (41, 31)))
    for ext in ('txt', 'csv'):
        fname = str(tmp_path / ('model.' + ext))
        write_model(fname, c)
        c2 = read_model(fname)
        assert c2.grid == c.grid
        assert np.array_equal(c2.values, c.values)

def test_hat_collocation():
    P = hat_collocation([0.0, 1.0, 2.0], [-0.5, 0.0, 0.25, 1.5, 2.0, 3.0])
    assert np.allclose(P.toarray(), [[1, 0, 0],
                             [1, 0, 0],
                             [0.75, 0.25, 0],
                             [0, 0.5, 0.5],
                             [0, 0, 1],
                             [0, 0, 1]])

def _transfer():
    coarse = Grid2D((1.0, 1.0), (2.0, 2.0), (5, 4))
    fine = Grid2D((0.0, 0.0), (0.2, 0.2), (51, 41))
    return GridTransfer(coarse, fine)

def test_transfer_adjoint():
    T = _transfer()
    a = np.random.rand(*T.coarse.shape)
    b = np.random.rand(*T.fine.shape)
    lhs = T.fine_inner(T.prolongate(a), b)
    rhs = T.coarse_inner(a, T.restrict(b))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)

def test_transfer_constants():
    T = _transfer()
    assert np.allclose(T.prolongate(np.ones(T.coarse.shape)), 1.0, rtol=0, atol=1e-14)
    assert np.allclose(T.restrict(np.ones(T.fine.shape)), 1.0, rtol=0, atol=1e-13)

def test_transfer_linear():
    T = _transfer()
    xc, zc = T.coarse.coords()
    a = 1.0 + np.add.outer(0.3 * zc, -0.2 * xc)
    pair = FieldPair(T, a)
    xf, zf = T.fine.coords()
    # bilinear interpolation is exact inside the coarse hull
    inside = np.ix_((zf >= 1) & (zf <= 7), (xf >= 1) & (xf <= 9))
    assert np.allclose(pair.fine[inside], (1.0 + np.add.outer(0.3 * zf, -0.2 * xf))[inside])
    r = pair.restricted()
    assert np.abs(r - a).max() <= 1e-12 * np.abs(a).max()

def test_restrict_prolongate():
    # restriction is a left inverse of prolongation at every node, boundary included
    fine = Grid2D((0.0, 0.0), (0.2, 0.2), (101, 76))
    for T in (_transfer(), GridTransfer(Grid2D((0.0, 0.0), (1.0, 1.0), (21, 16)), fine)):
        a = np.random.rand(*T.coarse.shape) - 0.5
        r = T.restrict(T.prolongate(a))
        assert r.shape == a.shape
        assert np.abs(r - a).max() <= 1e-12 * np.abs(a).max()
        assert np.allclose(FieldPair(T, a).restricted(), a, rtol=0, atol=1e-12)

def test_coarse_mass():
    T = _transfer()
    a = np.random.rand(*T.coarse.shape)
    b = np.random.rand(*T.coarse.shape)
    # the coarse inner product is the fine one of the prolongations
    lhs = T.coarse_inner(a, b)
    assert abs(lhs - T.fine_inner(T.prolongate(a), T.prolongate(b))) <= 1e-12 * abs(lhs)
    assert abs(lhs - T.coarse_inner(b, a)) <= 1e-12 * abs(lhs)

def test_transfer_mismatch():
    fine = Grid2D((0.0, 0.0), (0.2, 0.2), (51, 41))
    with pytest.raises(ConfigurationError):
        GridTransfer(Grid2D((1.1, 1.0), (2.0, 2.0), (4, 4)), fine)
    with pytest.raises(ConfigurationError):
        GridTransfer(Grid2D((1.0, 1.0), (2.0, 2.0), (6, 4)), fine)
    T = _transfer()
    with pytest.raises(ConfigurationError):
        T.prolongate(np.ones((3, 3)))
