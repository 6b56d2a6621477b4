#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""Minimization of ‖f − Aμ‖²_ρ + λ‖μ‖_TV over discrete magnetizations.

The data term has gradient −2A*(f − Aμ) whose Lipschitz constant is 2L with L ≥ ‖A‖². All iterations use the
step 1/(2L), so a proximal gradient step reads ``group_prox(y + A*(f − Ay)/L, λ/(2L))``. At a minimizer the
dual field g = A*(f − Aμ) satisfies g_j = (λ/2)·m_j/|m_j| on the support and |g_j| ≤ λ/2 everywhere.
"""
import math
import time
from typing import List, Optional, Sequence

import attr
import numpy as np

from magrec.config import Config
from magrec.exception import ConfigurationError, MagrecException, MeasurementMismatchError, UsageError
from magrec.fields import FieldData, ForwardModel, estimate_operator_norm, forward
from magrec.logging import logger
from magrec.measures import DiscreteMagnetization, MomentSummary, relative_tv_distance, site_norms, summarize, \
    tv_norm
from magrec.scenarios import add_noise

REASON_CERTIFICATE = 'certificate'
REASON_OBJECTIVE = 'objective'
REASON_STAGNATION = 'stagnation'
REASON_MAX_ITER = 'max_iter'
REASON_MAX_PASSES = 'max_passes'
REASON_ZERO = 'zero'

METHOD_IN_CROWD = 'in-crowd'
METHOD_FISTA = 'fista'

# Tightening of the inner tolerances stops here when an active set repeats
_TOLERANCE_FLOOR = 1e-15


def _positive(instance, attribute, value) -> None:
    if not (isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0):
        raise ConfigurationError('Solver option {} must be positive, got {!r}.'.format(attribute.name, value))


@attr.s(frozen=True, auto_attribs=True)
class SolverConfig:
    max_iter: int = attr.ib(default=20000, validator=_positive)
    rel_obj_tol: float = attr.ib(default=1e-10, validator=_positive)
    certificate_tol: float = attr.ib(default=1e-6, validator=_positive)
    in_crowd_batch: int = attr.ib(default=25, validator=_positive)
    restart: bool = True
    seed: int = 0
    max_passes: int = attr.ib(default=100, validator=_positive)
    norm_tol: float = attr.ib(default=1e-6, validator=_positive)
    norm_max_iter: int = attr.ib(default=1000, validator=_positive)
    check_every: int = attr.ib(default=10, validator=_positive)
    method: str = attr.ib(default=METHOD_IN_CROWD)

    @method.validator
    def _check_method(self, _, value) -> None:
        if value not in (METHOD_IN_CROWD, METHOD_FISTA):
            raise ConfigurationError('Unknown solver method {}.'.format(value))

    @classmethod
    def from_config(cls, config: Config) -> 'SolverConfig':
        return cls(max_iter=config.get('solver.maxIterations', types=int),
                   rel_obj_tol=config.get('solver.relativeObjectiveTolerance', types=float),
                   certificate_tol=config.get('solver.certificateTolerance', types=float),
                   in_crowd_batch=config.get('solver.inCrowdBatch', types=int),
                   restart=config.get('solver.restart', types=bool),
                   seed=config.get('solver.seed', types=int),
                   max_passes=config.get('solver.maxPasses', types=int),
                   norm_tol=config.get('solver.normTolerance', types=float),
                   norm_max_iter=config.get('solver.normMaxIterations', types=int),
                   check_every=config.get('solver.checkEvery', types=int),
                   method=config.get('solver.method', types=str))

    def evolve(self, **changes) -> 'SolverConfig':
        return attr.evolve(self, **changes)


@attr.s(frozen=True, auto_attribs=True)
class SolveProblem:
    model: ForwardModel
    f: FieldData
    lam: float = attr.ib(converter=float)

    @lam.validator
    def _check_lambda(self, _, value) -> None:
        if not (math.isfinite(value) and value > 0):
            raise UsageError('lambda must be positive, got {!r}.'.format(value))

    def __attrs_post_init__(self) -> None:
        if self.f.grid != self.model.target:
            raise MeasurementMismatchError('measurement mismatch: data grid {} is not the model target grid {}.'.format(
                self.f.grid.grid_id, self.model.target.grid_id))


@attr.s(frozen=True, auto_attribs=True, repr=False)
class SolveResult:
    mu: DiscreteMagnetization
    objective_trace: np.ndarray
    residual: FieldData
    lam: float
    objective: float
    iterations: int
    active_set_passes: int
    converged: bool
    reason: str
    lipschitz: float
    duration: float = 0.0

    def __repr__(self) -> str:
        return 'SolveResult(lam={!r}, objective={!r}, entries={}, iterations={}, passes={}, converged={}, ' \
               'reason={})'.format(self.lam, self.objective, self.mu.n_entries, self.iterations,
                                   self.active_set_passes, self.converged, self.reason)


def group_prox(m: np.ndarray, t: float) -> np.ndarray:
    """Group soft-thresholding m·max(0, 1 − t/|m|) per 3-vector, exactly zero when |m| ≤ t."""
    if not t > 0:
        raise UsageError('Threshold must be positive, got {!r}.'.format(t))
    m = np.asarray(m, dtype=np.float64)
    moments = m.reshape(-1, 3)
    norms = site_norms(moments)
    factor = np.zeros_like(norms)
    shrink = norms > t
    factor[shrink] = 1.0 - t / norms[shrink]
    return (moments * factor[:, None]).reshape(m.shape)


def objective(model: ForwardModel, f: FieldData, mu: DiscreteMagnetization, lam: float) -> float:
    residual = f - forward(model, mu)
    return residual.inner(residual) + lam * tv_norm(mu)


class _ActiveOperator:
    """A restricted to a fixed, sorted list of sites (all sites when ``sites`` is None)."""

    def __init__(self, model: ForwardModel, sites: Optional[np.ndarray]) -> None:
        self.model = model
        self.sites = sites
        self.weights = model.target.weights
        n_columns = 3 * (model.n_sites if sites is None else len(sites))
        self._matrix: Optional[np.ndarray] = None
        if model.storage == 'dense' or n_columns * model.n_meas <= model.dense_budget:
            self._matrix = model.matrix() if sites is None else model.submatrix(sites)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix @ x.ravel()
        return self.model.apply(x, self.sites)

    def adjoint(self, values: np.ndarray) -> np.ndarray:
        if self._matrix is not None:
            return (self._matrix.T @ (self.weights * values)).reshape(-1, 3)
        return self.model.apply_adjoint(values, self.sites)


def _certificate_holds(g: np.ndarray, x: np.ndarray, lam: float, tol: float) -> bool:
    half = 0.5 * lam
    if np.any(site_norms(g) > half * (1.0 + tol)):
        return False
    norms = site_norms(x)
    active = norms > 0.0
    if not active.any():
        return True
    alignment = site_norms(g[active] - half * x[active] / norms[active][:, None])
    return bool(np.all(alignment <= tol * lam))


@attr.s(auto_attribs=True)
class _FistaState:
    x: np.ndarray
    trace: List[float]
    iterations: int
    converged: bool
    reason: str


def _fista(operator: _ActiveOperator, f_values: np.ndarray, lam: float, lipschitz: float, x0: np.ndarray, *,
           restart: bool, max_iter: int, rel_obj_tol: float, certificate_tol: float, check_every: int) -> _FistaState:
    weights = operator.weights
    step_threshold = lam / (2.0 * lipschitz)

    def value(x: np.ndarray, residual: np.ndarray) -> float:
        return float(np.dot(weights * residual, residual)) + lam * float(np.sum(site_norms(x)))

    def prox_step(y: np.ndarray, residual_y: np.ndarray) -> np.ndarray:
        return group_prox(y + operator.adjoint(residual_y) / lipschitz, step_threshold)

    x = np.array(x0, dtype=np.float64).reshape(-1, 3)
    residual_x = f_values - operator.apply(x)
    value_x = value(x, residual_x)
    trace = [value_x]
    y, residual_y = x, residual_x
    t = 1.0

    for iteration in range(1, max_iter + 1):
        z = prox_step(y, residual_y)
        residual_z = f_values - operator.apply(z)
        value_z = value(z, residual_z)

        if restart and value_z > value_x:
            if y is not x:
                # Function-value restart: drop the momentum and take a plain step from x
                t = 1.0
                z = prox_step(x, residual_x)
                residual_z = f_values - operator.apply(z)
                value_z = value(z, residual_z)
            if value_z > value_x:
                logger.debug('FISTA stagnated at iteration {} with objective {!r}.'.format(iteration, value_x))
                return _FistaState(x=x, trace=trace, iterations=iteration, converged=True, reason=REASON_STAGNATION)

        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        momentum = (t - 1.0) / t_next
        change = abs(value_x - value_z)
        x_previous = x
        x, residual_x, value_x = z, residual_z, value_z
        trace.append(value_x)
        if momentum > 0.0:
            y = x + momentum * (x - x_previous)
            residual_y = f_values - operator.apply(y)
        else:
            y, residual_y = x, residual_x
        t = t_next

        if iteration == 1 or iteration % check_every == 0:
            if _certificate_holds(operator.adjoint(residual_x), x, lam, certificate_tol):
                return _FistaState(x=x, trace=trace, iterations=iteration, converged=True, reason=REASON_CERTIFICATE)
        if change <= rel_obj_tol * max(abs(value_x), np.finfo(np.float64).tiny):
            return _FistaState(x=x, trace=trace, iterations=iteration, converged=True, reason=REASON_OBJECTIVE)

    return _FistaState(x=x, trace=trace, iterations=max_iter, converged=False, reason=REASON_MAX_ITER)


def _finish(problem: SolveProblem, mu: DiscreteMagnetization, trace: Sequence[float], *, iterations: int,
            passes: int, converged: bool, reason: str, lipschitz: float, started: float) -> SolveResult:
    if reason == REASON_CERTIFICATE and mu.is_zero:
        reason = REASON_ZERO
    residual = problem.f - forward(problem.model, mu)
    result = SolveResult(mu=mu,
                         objective_trace=np.array(trace, dtype=np.float64),
                         residual=residual,
                         lam=problem.lam,
                         objective=residual.inner(residual) + problem.lam * tv_norm(mu),
                         iterations=iterations,
                         active_set_passes=passes,
                         converged=converged,
                         reason=reason,
                         lipschitz=lipschitz,
                         duration=time.monotonic() - started)
    logger.debug('Solved: {!r}.'.format(result))
    return result


def _check_warm_start(problem: SolveProblem, warm_start: Optional[DiscreteMagnetization]) -> None:
    if warm_start is not None and warm_start.grid != problem.model.source:
        raise UsageError('Warm start lives on grid {}, expected {}.'.format(warm_start.grid.grid_id,
                                                                            problem.model.source.grid_id))


def fista(problem: SolveProblem,
          config: SolverConfig = SolverConfig(),
          warm_start: Optional[DiscreteMagnetization] = None) -> SolveResult:
    """FISTA with group soft-thresholding over all sites."""
    started = time.monotonic()
    _check_warm_start(problem, warm_start)
    model = problem.model
    lipschitz = estimate_operator_norm(model, config.norm_tol, max_iter=config.norm_max_iter, seed=config.seed).bound
    x0 = np.zeros((model.n_sites, 3), dtype=np.float64) if warm_start is None else warm_start.to_dense()

    state = _fista(_ActiveOperator(model, None),
                   problem.f.values,
                   problem.lam,
                   lipschitz,
                   x0,
                   restart=config.restart,
                   max_iter=config.max_iter,
                   rel_obj_tol=config.rel_obj_tol,
                   certificate_tol=config.certificate_tol,
                   check_every=config.check_every)
    mu = DiscreteMagnetization.from_dense(model.source, state.x)
    return _finish(problem,
                   mu,
                   state.trace,
                   iterations=state.iterations,
                   passes=0,
                   converged=state.converged,
                   reason=state.reason,
                   lipschitz=lipschitz,
                   started=started)


def in_crowd(problem: SolveProblem,
             config: SolverConfig = SolverConfig(),
             warm_start: Optional[DiscreteMagnetization] = None) -> SolveResult:
    """Active-set outer loop around FISTA, terminated by the global certificate."""
    started = time.monotonic()
    _check_warm_start(problem, warm_start)
    model, f_values, lam = problem.model, problem.f.values, problem.lam
    half = 0.5 * lam

    if warm_start is None:
        active = np.empty(0, dtype=np.int64)
        x_active = np.empty((0, 3), dtype=np.float64)
    else:
        active = np.array(warm_start.sites, dtype=np.int64)
        x_active = np.array(warm_start.moments, dtype=np.float64)

    trace: List[float] = []
    iterations = 0
    lipschitz = 0.0
    inner_certificate_tol = config.certificate_tol
    inner_rel_obj_tol = config.rel_obj_tol
    seen_active_sets = set()
    converged, reason = False, REASON_MAX_PASSES

    passes = 0
    for passes in range(1, config.max_passes + 1):
        residual = f_values - model.apply(x_active, active)
        g = model.apply_adjoint(residual)
        if not trace:
            trace.append(float(np.dot(model.target.weights * residual, residual)) +
                         lam * float(np.sum(site_norms(x_active))))

        x_full = np.zeros((model.n_sites, 3), dtype=np.float64)
        x_full[active] = x_active
        if _certificate_holds(g, x_full, lam, config.certificate_tol):
            converged, reason = True, REASON_CERTIFICATE
            break

        if iterations >= config.max_iter:
            converged, reason = False, REASON_MAX_ITER
            break

        strength = site_norms(g)
        inactive = np.ones(model.n_sites, dtype=bool)
        inactive[active] = False
        candidates = np.flatnonzero(inactive & (strength > half))
        # Largest violation first, ties broken by the lowest site index
        order = np.lexsort((candidates, -strength[candidates]))
        added = candidates[order][:config.in_crowd_batch]

        new_active = np.union1d(active, added).astype(np.int64)
        x_new = np.zeros((new_active.shape[0], 3), dtype=np.float64)
        x_new[np.searchsorted(new_active, active)] = x_active

        key = new_active.tobytes()
        if key in seen_active_sets:
            inner_certificate_tol = max(inner_certificate_tol / 10.0, _TOLERANCE_FLOOR)
            inner_rel_obj_tol = max(inner_rel_obj_tol / 10.0, _TOLERANCE_FLOOR)
            logger.debug('Active set of size {} repeated, inner tolerances tightened to {!r}/{!r}.'.format(
                new_active.shape[0], inner_certificate_tol, inner_rel_obj_tol))
        seen_active_sets.add(key)

        lipschitz = estimate_operator_norm(model,
                                           config.norm_tol,
                                           sites=new_active,
                                           max_iter=config.norm_max_iter,
                                           seed=config.seed).bound
        state = _fista(_ActiveOperator(model, new_active),
                       f_values,
                       lam,
                       lipschitz,
                       x_new,
                       restart=config.restart,
                       max_iter=config.max_iter - iterations,
                       rel_obj_tol=inner_rel_obj_tol,
                       certificate_tol=inner_certificate_tol,
                       check_every=config.check_every)
        iterations += state.iterations
        # The first value repeats the end of the previous pass
        trace.extend(state.trace[1:])

        keep = np.any(state.x != 0.0, axis=1)
        active = new_active[keep]
        x_active = state.x[keep]
        logger.debug('In-Crowd pass {}: added {} sites, {} active, {} inner iterations ({}).'.format(
            passes, added.shape[0], active.shape[0], state.iterations, state.reason))

    mu = DiscreteMagnetization(grid=model.source, sites=active, moments=x_active)
    return _finish(problem,
                   mu,
                   trace,
                   iterations=iterations,
                   passes=passes,
                   converged=converged,
                   reason=reason,
                   lipschitz=lipschitz,
                   started=started)


def solve(problem: SolveProblem,
          config: SolverConfig = SolverConfig(),
          warm_start: Optional[DiscreteMagnetization] = None) -> SolveResult:
    if config.method == METHOD_FISTA:
        return fista(problem, config, warm_start)
    return in_crowd(problem, config, warm_start)


@attr.s(frozen=True, auto_attribs=True, repr=False)
class SweepPoint:
    lam: float
    result: Optional[SolveResult]
    summary: Optional[MomentSummary]
    relative_distance: Optional[float] = None
    noise_norm: float = 0.0
    bound: Optional[float] = None
    bound_satisfied: Optional[bool] = None
    error: Optional[str] = None

    def __repr__(self) -> str:
        return 'SweepPoint(lam={!r}, relative_distance={!r}, bound_satisfied={!r}, error={!r})'.format(
            self.lam, self.relative_distance, self.bound_satisfied, self.error)


# Absolute slack of the regularization bound check
BOUND_SLACK = 1e-9


def check_lambdas(lambdas: Sequence[float]) -> List[float]:
    values = [float(lam) for lam in lambdas]
    if not values:
        raise UsageError('At least one lambda is required.')
    if not all(math.isfinite(lam) and lam > 0 for lam in values):
        raise UsageError('All lambdas must be positive, got {}.'.format(values))
    if any(later >= earlier for earlier, later in zip(values, values[1:])):
        raise UsageError('Lambdas must be strictly decreasing, got {}.'.format(values))
    return values


def lambda_sweep(model: ForwardModel,
                 f: FieldData,
                 lambdas: Sequence[float],
                 config: SolverConfig = SolverConfig(),
                 *,
                 reference: Optional[DiscreteMagnetization] = None,
                 noise_ratio: Optional[float] = None,
                 noise_seed: int = 0,
                 warm_start: bool = True) -> List[SweepPoint]:
    """Warm-started continuation along a strictly decreasing λ path.

    With ``noise_ratio`` every λ gets its own noise realization e with ‖e‖_ρ = ratio·√λ. Failures at one λ
    are recorded and the sweep continues.
    """
    values = check_lambdas(lambdas)
    reference_tv = tv_norm(reference) if reference is not None else None
    points: List[SweepPoint] = []
    previous: Optional[DiscreteMagnetization] = None

    for index, lam in enumerate(values):
        noise_norm = 0.0
        data = f
        if noise_ratio is not None and noise_ratio > 0:
            data, noise_norm = add_noise(f, mode='ratio', ratio=noise_ratio, lam=lam, seed=noise_seed + index)
        logger.info('Solving for lambda {:.3e} ({}/{}).'.format(lam, index + 1, len(values)))
        try:
            result = solve(SolveProblem(model=model, f=data, lam=lam), config, previous if warm_start else None)
        except MagrecException as exception:
            logger.error('Solve for lambda {:.3e} failed: {}'.format(lam, exception))
            points.append(SweepPoint(lam=lam, result=None, summary=None, noise_norm=noise_norm, error=str(exception)))
            continue

        previous = result.mu
        summary = summarize(result.mu)
        relative_distance, bound, bound_satisfied = None, None, None
        if reference is not None and reference_tv is not None:
            if reference_tv > 0:
                relative_distance = relative_tv_distance(result.mu, reference)
            bound = noise_norm * noise_norm / lam + reference_tv
            bound_satisfied = summary.tv <= bound + BOUND_SLACK
            if not bound_satisfied:
                logger.warning('Regularization bound violated at lambda {:.3e}: {!r} > {!r}.'.format(
                    lam, summary.tv, bound))
        if not result.converged:
            logger.warning('Solve for lambda {:.3e} did not converge ({}).'.format(lam, result.reason))
        points.append(
            SweepPoint(lam=lam,
                       result=result,
                       summary=summary,
                       relative_distance=relative_distance,
                       noise_norm=noise_norm,
                       bound=bound,
                       bound_satisfied=bound_satisfied))
    return points
