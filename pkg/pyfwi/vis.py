"""Visualization functions."""
import os

import numpy as np
import matplotlib.pyplot as plt


def _extent(grid):
    (x0, z0), (x1, z1) = grid.origin, grid.extent
    hx, hz = grid.spacing
    return (x0 - hx/2, x1 + hx/2, z1 + hz/2, z0 - hz/2)

def plot_field(values, grid, ax=None, **kwargs):
    """Plot a field on a grid with depth increasing downwards."""
    if ax is None:
        ax = plt.gca()
    kwargs.setdefault('aspect', 'equal')
    im = ax.imshow(values, extent=_extent(grid), **kwargs)
    ax.set_xlabel('x (km)')
    ax.set_ylabel('z (km)')
    return im

def plot_model(model, ax=None, **kwargs):
    """Plot a velocity model (km/s)."""
    kwargs.setdefault('cmap', 'jet_r')
    im = plot_field(model.values, model.grid, ax=ax, **kwargs)
    plt.colorbar(im, ax=im.axes, label='c (km/s)')
    return im

def plot_kernel(kernel, ax=None, clip=0.9, **kwargs):
    """Plot a sensitivity kernel with a symmetric color range.

    The range is `clip` times the largest absolute value.
    """
    values = getattr(kernel, 'values', kernel)
    vmax = clip * np.abs(values).max()
    if not vmax > 0:
        vmax = 1.0
    kwargs.setdefault('cmap', 'seismic')
    return plot_field(values, kernel.grid, ax=ax, vmin=-vmax, vmax=vmax, **kwargs)

def plot_geometry(sources, receivers, ax=None):
    if ax is None:
        ax = plt.gca()
    ax.plot([s.x for s in sources], [s.z for s in sources], 'r*', markersize=8, label='sources')
    ax.plot([r.x for r in receivers], [r.z for r in receivers], 'kv', markersize=6, label='receivers',
            clip_on=False)

def plot_traces(traces, ax=None, window=None, labels=None, **kwargs):
    """Plot traces over time, optionally shading a phase window."""
    if ax is None:
        ax = plt.gca()
    lines = []
    for (k, s) in enumerate(traces):
        label = labels[k] if labels is not None else 'trace (%s, %s)' % (s.i, s.j)
        lines.extend(ax.plot(s.times, s.samples, label=label, **kwargs))
    if window is not None:
        ax.axvspan(window.t_lo, window.t_hi, color='0.9', zorder=0)
    ax.set_xlabel('t (s)')
    ax.legend()
    return lines

def plot_transport_map(f, T, ax=None):
    """Plot the map `T(t)` next to the identity, and the source density on a twin axis."""
    if ax is None:
        ax = plt.gca()
    t = f.times
    ax.plot(t, T.values, 'b-', label='T(t)')
    ax.plot(t, t, 'k:', label='identity')
    ax.set_xlabel('t (s)')
    ax.set_ylabel('T(t) (s)')
    ax2 = ax.twinx()
    ax2.fill_between(t, f.density, color='0.8', zorder=0)
    ax2.set_ylabel('density')
    ax.legend(loc='upper left')
    return ax, ax2

def plot_convergence(states, ax=None):
    """Plot relative model error and relative misfit against the iteration count."""
    if ax is None:
        ax = plt.gca()
    k = [s.k for s in states]
    ax.semilogy(k, [s.rmf for s in states], 'o-', label='RMF')
    if not np.all(np.isnan([s.rme for s in states])):
        ax.semilogy(k, [s.rme for s in states], 's-', label='RME')
    ax.set_xlabel('iteration')
    ax.legend()
    return ax

def save_inversion_figures(out, states, model_true, model_initial):
    """Write `convergence.png` and `models.png` into `out`."""
    fig = plt.figure()
    plot_convergence(states)
    fig.savefig(os.path.join(out, 'convergence.png'))
    plt.close(fig)

    fig, axes = plt.subplots(3, 1, figsize=(6, 10))
    vmin = min(model_true.c_min, model_initial.c_min)
    vmax = max(model_true.c_max, model_initial.c_max)
    for (ax, m, title) in zip(axes, (model_true, model_initial, states[-1].model),
            ('true', 'initial', 'iteration %d' % states[-1].k)):
        plot_model(m, ax=ax, vmin=vmin, vmax=vmax)
        ax.set_title(title)
    fig.savefig(os.path.join(out, 'models.png'))
    plt.close(fig)
