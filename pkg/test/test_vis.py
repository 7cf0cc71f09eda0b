import pytest
matplotlib = pytest.importorskip('matplotlib')
matplotlib.use('Agg')

from pyfwi.vis import *
from pyfwi.adjoint import SensitivityKernel
from pyfwi.grids import Grid2D, build_two_layer_model
from pyfwi.inversion import InversionState
from pyfwi.transport import ProbabilityTrace, w2_squared
from pyfwi.wave import SourceSpec, ReceiverSpec, Trace
import os
import numpy as np

def _grid():
    return Grid2D((0.0, 0.0), (0.5, 0.5), (21, 11))

def test_plot_field():
    G = _grid()
    fig = plt.figure()
    im = plot_field(np.random.rand(*G.shape), G)
    assert np.allclose(im.get_extent(), [-0.25, 10.25, 5.25, -0.25])
    plot_kernel(SensitivityKernel(G, np.zeros(G.shape)))
    plot_geometry([SourceSpec(2.0, 3.0)], [ReceiverSpec(1.0, 0.0)])
    plt.close(fig)

def test_plot_traces_and_map():
    dt, t_f = 0.01, 2.0
    t = dt * np.arange(201)
    fig = plt.figure()
    lines = plot_traces([Trace(np.sin(t), dt, t_f, 0, 1), Trace(np.cos(t), dt, t_f, 0, 2)])
    assert len(lines) == 2 and lines[0].get_label() == 'trace (0, 1)'
    plt.close(fig)
    f = ProbabilityTrace.normalized(np.exp(-(t - 0.8)**2 / 0.02), dt, t_f)
    g = ProbabilityTrace.normalized(np.exp(-(t - 1.2)**2 / 0.02), dt, t_f)
    _, T = w2_squared(f, g)
    fig = plt.figure()
    ax, ax2 = plot_transport_map(f, T)
    assert ax2 is not ax
    plt.close(fig)

def test_save_inversion_figures(tmp_path):
    G = _grid()
    true = build_two_layer_model(True, grid=G, moho=3.0, anomaly_box=(4.0, 6.0, 1.0, 2.0))
    initial = build_two_layer_model(False, grid=G, moho=3.0)
    states = [InversionState(0, initial, 2.0, rme=1.0, rmf=1.0),
              InversionState(1, true, 1.0, rme=1e-3, rmf=0.5)]
    save_inversion_figures(str(tmp_path), states, true, initial)
    assert os.path.exists(str(tmp_path / 'convergence.png'))
    assert os.path.exists(str(tmp_path / 'models.png'))
