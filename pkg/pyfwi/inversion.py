"""The outer inversion loop: misfit evaluation, descent steps and convergence metrics."""
import csv
import logging
import os
import time

import numpy as np

from .adjoint import SolverError, run_sources, compute_gradient, gradient_mask
from .grids import VELOCITY_FLOOR, write_model

logger = logging.getLogger(__name__)

__all__ = ['MetricUndefinedError', 'SolverError', 'OptimizerPolicy', 'InversionProblem',
           'InversionState', 'evaluate_misfit', 'step', 'metrics', 'invert',
           'scan_anomaly_shift', 'count_local_minima', 'read_convergence_log']


class MetricUndefinedError(ZeroDivisionError):
    """A relative metric has a vanishing reference value."""
    pass


class OptimizerPolicy:
    """Settings of steepest descent with backtracking line search.

    Args:
        iterations (int): number of descent steps
        max_step (float): largest velocity change (km/s) of the first trial step
        c1 (float): Armijo constant of sufficient decrease
        max_trials (int): maximal number of step halvings
        floor (float): lower bound on the velocity
        checkpoint_every (int): write the model every this many iterations (0: never)
    """
    def __init__(self, iterations=20, max_step=0.1, c1=1e-4, max_trials=8, floor=VELOCITY_FLOOR,
            checkpoint_every=10):
        if not max_step > 0:
            raise ValueError('max_step must be positive, got %s' % max_step)
        if not 0 < c1 < 1:
            raise ValueError('Armijo constant must lie in (0,1), got %s' % c1)
        self.iterations = int(iterations)
        self.max_step = float(max_step)
        self.c1 = float(c1)
        self.max_trials = int(max_trials)
        self.floor = float(floor)
        self.checkpoint_every = int(checkpoint_every)

    def to_dict(self):
        return {'iterations': self.iterations, 'max_step': self.max_step, 'c1': self.c1,
                'max_trials': self.max_trials, 'floor': self.floor, 'checkpoint_every': self.checkpoint_every}

    @staticmethod
    def from_dict(d):
        return OptimizerPolicy(**d)


class InversionProblem:
    """Everything needed to evaluate the misfit and its gradient for a model.

    Args:
        dataset (:class:`pyfwi.data.Dataset`): observed traces and geometry
        op (:class:`pyfwi.scaling.ScalingOperator`): misfit definition
        table (:class:`pyfwi.picking.AcceptanceTable`): frozen windows
        transfer (:class:`pyfwi.grids.GridTransfer`): inversion/simulation grids
        settings (:class:`pyfwi.wave.SolverSettings`): solver settings
        mask_cells (int): radius of the gradient mask around sources, receivers and the boundary
        smoothing_km (float): optional Gaussian smoothing of the gradient
    """
    def __init__(self, dataset, op, table, transfer, settings=None, mask_cells=3, smoothing_km=0.0):
        self.dataset = dataset
        self.op = op
        self.table = table
        self.transfer = transfer
        self.settings = settings
        self.smoothing_km = smoothing_km
        points = [s.location for s in dataset.sources] + [r.location for r in dataset.receivers]
        self.mask = gradient_mask(transfer.fine, points, mask_cells)

    def misfit(self, model):
        """Total misfit `xi` and the per-pair terms `{(i, j): chi_ij}`."""
        results = run_sources(model, self.dataset, self.op, self.table, settings=self.settings, kernel=False)
        terms = {}
        for r in results:
            for (j, chi) in r.misfits.items():
                terms[(r.i, j)] = chi
        return sum(terms[p] for p in sorted(terms)), terms

    def gradient(self, model):
        """Total misfit and :class:`pyfwi.adjoint.GradientField`."""
        xi, grad, _ = compute_gradient(model, self.dataset, self.op, self.table, self.transfer,
                mask=self.mask, settings=self.settings, smoothing_km=self.smoothing_km)
        return xi, grad

    def perturb(self, model, dm, floor=VELOCITY_FLOOR):
        """The model `max(c + mask * P dm, floor)` for a perturbation `dm` on the inversion grid."""
        return model.updated(self.mask * self.transfer.prolongate(dm), floor)


def evaluate_misfit(model, problem):
    """Total misfit over the accepted pairs and the individual terms `chi_ij`."""
    return problem.misfit(model)


class InversionState:
    """Snapshot of the inversion after `k` iterations."""
    def __init__(self, k, model, xi, rme=np.nan, rmf=np.nan, step=0.0, accepted_pairs=0,
            seconds=0.0, stalled=False):
        self.k = k
        self.model = model
        self.xi = xi
        self.rme = rme
        self.rmf = rmf
        self.step = step
        self.accepted_pairs = accepted_pairs
        self.seconds = seconds
        self.stalled = stalled

    def __repr__(self):
        return 'InversionState(k=%d, xi=%g, rme=%g, rmf=%g, step=%g%s)' % (
            self.k, self.xi, self.rme, self.rmf, self.step, ', stalled' if self.stalled else '')


def step(state, gradient, policy, problem):
    """One steepest descent step with Armijo backtracking.

    The first trial step changes the velocity by at most `policy.max_step`
    somewhere in the model; it is halved until the misfit decreases
    sufficiently. If no trial succeeds, the model is kept and the returned
    state is marked as stalled.
    """
    g = gradient.values
    dc = problem.mask * problem.transfer.prolongate(g)
    scale = np.abs(dc).max()
    slope = -gradient.directional_derivative(g)
    if not scale > 0 or not slope < 0:
        logger.warning('iteration %d: vanishing gradient', state.k)
        return InversionState(state.k + 1, state.model, state.xi, step=0.0,
                accepted_pairs=state.accepted_pairs, stalled=True)
    alpha = policy.max_step / scale
    for trial in range(policy.max_trials):
        trial_model = problem.perturb(state.model, -alpha * g, policy.floor)
        xi_new, _ = problem.misfit(trial_model)
        logger.debug('iteration %d, trial %d: step %g, misfit %g', state.k, trial, alpha, xi_new)
        if xi_new <= state.xi + policy.c1 * alpha * slope and xi_new < state.xi:
            return InversionState(state.k + 1, trial_model, xi_new, step=alpha,
                    accepted_pairs=state.accepted_pairs)
        alpha *= 0.5
    logger.warning('iteration %d: line search exhausted after %d trials', state.k, policy.max_trials)
    return InversionState(state.k + 1, state.model, state.xi, step=0.0,
            accepted_pairs=state.accepted_pairs, stalled=True)


def metrics(c_k, c_0, c_T, xi_k, xi_0, transfer=None):
    """Relative model error and relative misfit.

    The model error is measured on the inversion grid if a `transfer` is
    given (models are restricted first), otherwise by a plain sum over the
    values of the models.

    Returns:
        tuple: `(rme, rmf)`

    Raises:
        MetricUndefinedError: if `c_0 = c_T` or `xi_0 = 0`
    """
    def values(c):
        c = getattr(c, 'values', c)
        return transfer.restrict(c) if transfer is not None else np.asarray(c, dtype=float)
    def sqnorm(a):
        return transfer.coarse_inner(a, a) if transfer is not None else np.sum(a * a)
    vk, v0, vT = values(c_k), values(c_0), values(c_T)
    denom = sqnorm(v0 - vT)
    if not denom > 0:
        raise MetricUndefinedError('initial and true model coincide')
    if not xi_0 > 0:
        raise MetricUndefinedError('initial misfit vanishes')
    return sqnorm(vk - vT) / denom, xi_k / xi_0


_LOG_FIELDS = ('k', 'xi', 'rme', 'rmf', 'step', 'accepted_pairs')

def _log_row(writer, state):
    writer.writerow([state.k, repr(float(state.xi)), repr(float(state.rme)), repr(float(state.rmf)),
        repr(float(state.step)), state.accepted_pairs])

def read_convergence_log(fname):
    """Read `convergence.csv` into a dict of columns."""
    with open(fname, newline='') as f:
        rows = list(csv.DictReader(f))
    return dict((key, np.array([float(r[key]) for r in rows])) for key in _LOG_FIELDS)


def invert(problem, model_0, policy=None, model_true=None, out=None, verbose=0):
    """Run the inversion from `model_0`.

    Args:
        problem (:class:`InversionProblem`): data, misfit and grids
        model_0 (:class:`pyfwi.grids.VelocityModel`): initial model
        policy (:class:`OptimizerPolicy`): optimizer settings
        model_true: the true model, if known; enables the model error
        out (str): directory for `convergence.csv` and model checkpoints
        verbose (int): print one line per iteration if positive

    Returns:
        list: the :class:`InversionState` of every iteration, starting with `k = 0`
    """
    if policy is None:
        policy = OptimizerPolicy()
    n_pairs = problem.table.num_accepted
    tstart = time.time()
    xi_0, grad = problem.gradient(model_0)
    state = InversionState(0, model_0, xi_0, accepted_pairs=n_pairs, seconds=time.time() - tstart)
    if xi_0 > 0:
        state.rmf = 1.0
        state.rme = 1.0 if model_true is not None else np.nan
    states = [state]

    log = writer = None
    if out is not None:
        os.makedirs(out, exist_ok=True)
        log = open(os.path.join(out, 'convergence.csv'), 'w', newline='')
        writer = csv.writer(log)
        writer.writerow(_LOG_FIELDS)
        _log_row(writer, state)
    try:
        for k in range(policy.iterations):
            if not state.xi > 0:
                break
            tstart = time.time()
            new = step(state, grad, policy, problem)
            if new.stalled:
                new.rme, new.rmf = state.rme, state.rmf
                states.append(new)
                if writer:
                    _log_row(writer, new)
                break
            if model_true is not None:
                new.rme, new.rmf = metrics(new.model, model_0, model_true, new.xi, xi_0, problem.transfer)
            else:
                new.rmf = new.xi / xi_0
            assert new.rmf < state.rmf, 'relative misfit increased in iteration %d' % new.k
            if new.k < policy.iterations:
                _, grad = problem.gradient(new.model)
            new.seconds = time.time() - tstart
            state = new
            states.append(state)
            logger.info('iteration %d: xi=%g rme=%g rmf=%g step=%g (%.1f s)',
                    state.k, state.xi, state.rme, state.rmf, state.step, state.seconds)
            if verbose >= 1:
                print('%3d  xi = %10.4e  rme = %7.4f  rmf = %7.4f  step = %8.2e' %
                        (state.k, state.xi, state.rme, state.rmf, state.step))
            if writer:
                _log_row(writer, state)
                log.flush()
                if policy.checkpoint_every > 0 and state.k % policy.checkpoint_every == 0:
                    write_model(os.path.join(out, 'model_%d.txt' % state.k), state.model)
    finally:
        if log is not None:
            log.close()
    if out is not None:
        write_model(os.path.join(out, 'model_final.txt'), states[-1].model)
    return states


def scan_anomaly_shift(problem, build_model, shifts, verbose=0):
    """Misfit of the models `build_model(shift)` for each shift.

    Returns:
        ndarray: the misfit values in the order of `shifts`
    """
    values = []
    for s in shifts:
        xi, _ = problem.misfit(build_model(s))
        if verbose >= 1:
            print('shift %7.3f: misfit %g' % (s, xi))
        values.append(xi)
    return np.array(values)

def count_local_minima(values):
    """Number of strict local minima of a sampled curve, end points included."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return v.size
    left = np.concatenate(([np.inf], v[:-1]))
    right = np.concatenate((v[1:], [np.inf]))
    return int(np.sum((v < left) & (v < right)))
