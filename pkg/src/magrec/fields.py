#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""Dipole kernel, forward operator A and its adjoint.

Sign convention: A includes the leading minus, ``(Aμ)(x_p) = −κ Σ_j K_v(x_p − y_j)·m_j`` with
``K_v(x) = v/|x|³ − 3x(v·x)/|x|⁵``. The adjoint is taken with respect to the ρ-weighted inner product on
the measurement points, ``(A*ψ)(y_j) = −κ Σ_p w_p ψ(x_p) K_v(x_p − y_j)``.
"""
import math
from typing import Optional, Sequence, Union

import attr
import numpy as np

from magrec.exception import MeasurementMismatchError, NonFiniteError, NormEstimationError, \
    SingularEvaluationError, SupportMismatchError, UsageError
from magrec.geometry import DipoleGrid, Direction, MeasurementGrid, separation
from magrec.jobexecutor import BlockExecutor, block_slices
from magrec.logging import logger
from magrec.measures import DiscreteMagnetization
from magrec.repr import ReprMixIn
from magrec.splitmix import SplitMix64

KAPPA_NORMALIZED = 1.0
KAPPA_PHYSICAL = 1e-7
KAPPA_MODES = {'normalized': KAPPA_NORMALIZED, 'physical': KAPPA_PHYSICAL}

DEFAULT_DENSE_BUDGET = 200_000_000
DEFAULT_BLOCK_ENTRIES = 1_048_576


def kappa_for_mode(mode: str) -> float:
    try:
        return KAPPA_MODES[mode]
    except KeyError:
        raise UsageError('Unknown kappa mode {}, expected one of {}.'.format(mode, ', '.join(KAPPA_MODES))) from None


def _kernel(d: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Shared by kernel_Kv and the operator blocks
    d0, d1, d2 = d[..., 0], d[..., 1], d[..., 2]
    r2 = d0 * d0 + d1 * d1 + d2 * d2
    if np.any(r2 == 0.0):
        raise SingularEvaluationError('singular kernel evaluation: zero displacement.')
    r = np.sqrt(r2)
    r3 = r2 * r
    r5 = r3 * r2
    vd = d0 * v[0] + d1 * v[1] + d2 * v[2]
    return v / r3[..., None] - 3.0 * d * (vd / r5)[..., None]


def kernel_Kv(x: Sequence[float], v: Union[Direction, Sequence[float]]) -> np.ndarray:
    x_array = np.asarray(x, dtype=np.float64).reshape(1, 3)
    v_array = v.as_array() if isinstance(v, Direction) else np.asarray(v, dtype=np.float64)
    return _kernel(x_array, v_array)[0]


@attr.s(frozen=True, eq=False, repr=False)
class FieldData:
    """Scalar field samples on a MeasurementGrid."""

    grid: MeasurementGrid = attr.ib()
    values: np.ndarray = attr.ib()

    def __attrs_post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.shape[0] != self.grid.n_points:
            raise MeasurementMismatchError('measurement mismatch: {} values for {} points.'.format(
                values.shape[0], self.grid.n_points))
        if not np.all(np.isfinite(values)):
            raise NonFiniteError('Field data contains non-finite values.')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, grid: MeasurementGrid) -> 'FieldData':
        return cls(grid=grid, values=np.zeros(grid.n_points, dtype=np.float64))

    def points(self) -> np.ndarray:
        return self.grid.points()

    def _check(self, other: 'FieldData') -> None:
        if other.grid != self.grid:
            raise MeasurementMismatchError('measurement mismatch: fields live on different grids.')

    def inner(self, other: 'FieldData') -> float:
        """ρ-weighted inner product."""
        self._check(other)
        return math.fsum(self.grid.weights * self.values * other.values)

    def weighted_norm(self) -> float:
        return math.sqrt(math.fsum(self.grid.weights * self.values * self.values))

    def __add__(self, other: 'FieldData') -> 'FieldData':
        self._check(other)
        return FieldData(grid=self.grid, values=self.values + other.values)

    def __sub__(self, other: 'FieldData') -> 'FieldData':
        self._check(other)
        return FieldData(grid=self.grid, values=self.values - other.values)

    def scaled(self, factor: float) -> 'FieldData':
        return FieldData(grid=self.grid, values=self.values * factor)

    def same_values(self, other: 'FieldData') -> bool:
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return 'FieldData(grid_id={}, n_points={})'.format(self.grid.grid_id, self.grid.n_points)


def _site_columns(sites: np.ndarray) -> np.ndarray:
    return (3 * np.asarray(sites, dtype=np.int64)[:, None] + np.arange(3, dtype=np.int64)[None, :]).ravel()


class ForwardModel(ReprMixIn):
    """The operator A for a (source grid, measurement grid, direction) triple.

    The matrix has shape (n_meas, 3·n_sites) with column 3j+k holding moment component k of site j. It is kept
    in memory when it has at most ``dense_budget`` entries, otherwise rows are evaluated in blocks on demand.
    """

    def __init__(self,
                 source: DipoleGrid,
                 target: MeasurementGrid,
                 direction: Direction,
                 *,
                 scale: float = KAPPA_NORMALIZED,
                 dense_budget: int = DEFAULT_DENSE_BUDGET,
                 block_entries: int = DEFAULT_BLOCK_ENTRIES,
                 threads: int = 1) -> None:
        # Raises for coincident planes before anything is evaluated
        self.separation = separation(source, target)
        if not (math.isfinite(scale) and scale > 0):
            raise UsageError('Model scale must be positive, got {}.'.format(scale))

        self.source = source
        self.target = target
        self.direction = direction
        self.scale = float(scale)
        self.dense_budget = int(dense_budget)
        self.block_entries = int(block_entries)
        self.threads = int(threads)

        self._v = direction.as_array()
        self._origin_delta = target.origin3 - source.origin3
        self._source_offsets = source.offsets()
        self._target_offsets = target.offsets()
        self._executor = BlockExecutor(workers=threads, name='magrec-operator')

        self._matrix: Optional[np.ndarray] = None
        if self.n_entries <= self.dense_budget:
            self._matrix = np.concatenate(self._executor.map(lambda rows: self.block(rows), self._row_blocks(None)),
                                          axis=0)
            self._matrix.setflags(write=False)
        logger.debug('Forward model with {} sites and {} measurement points uses {} storage.'.format(
            source.n_sites, target.n_points, self.storage))

    @property
    def n_sites(self) -> int:
        return self.source.n_sites

    @property
    def n_meas(self) -> int:
        return self.target.n_points

    @property
    def n_entries(self) -> int:
        return 3 * self.n_sites * self.n_meas

    @property
    def storage(self) -> str:
        return 'dense' if self._matrix is not None else 'matrix-free'

    def _row_blocks(self, sites: Optional[np.ndarray]) -> list:
        columns = 3 * (self.n_sites if sites is None else len(sites))
        return block_slices(self.n_meas, max(1, self.block_entries // max(1, columns)))

    def block(self, rows: slice, sites: Optional[np.ndarray] = None) -> np.ndarray:
        """Closed-form evaluation of the rows ``rows`` restricted to the columns of ``sites``."""
        target_offsets = self._target_offsets[rows]
        source_offsets = self._source_offsets if sites is None else self._source_offsets[sites]
        d = self._origin_delta[None, None, :] + (target_offsets[:, None, :] - source_offsets[None, :, :])
        kernel = _kernel(d, self._v)
        return (-self.scale) * kernel.reshape(target_offsets.shape[0], 3 * source_offsets.shape[0])

    def matrix(self) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix
        return np.concatenate(self._executor.map(lambda rows: self.block(rows), self._row_blocks(None)), axis=0)

    def submatrix(self, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.int64)
        if self._matrix is not None:
            return self._matrix[:, _site_columns(sites)]
        return np.concatenate(self._executor.map(lambda rows: self.block(rows, sites), self._row_blocks(sites)),
                              axis=0)

    def apply(self, moments: np.ndarray, sites: Optional[np.ndarray] = None) -> np.ndarray:
        """A applied to moments given on ``sites`` (all sites by default), returns n_meas values."""
        x = np.asarray(moments, dtype=np.float64).reshape(-1)
        if self._matrix is not None:
            if sites is None:
                return self._matrix @ x
            return self._matrix[:, _site_columns(sites)] @ x
        parts = self._executor.map(lambda rows: self.block(rows, sites) @ x, self._row_blocks(sites))
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.float64)

    def apply_adjoint(self, values: np.ndarray, sites: Optional[np.ndarray] = None) -> np.ndarray:
        """A* applied to field values, returns a (len(sites), 3) array of moment-space vectors."""
        weighted = self.target.weights * np.asarray(values, dtype=np.float64)
        n_columns = self.n_sites if sites is None else len(sites)
        if self._matrix is not None:
            matrix = self._matrix if sites is None else self._matrix[:, _site_columns(sites)]
            return (matrix.T @ weighted).reshape(n_columns, 3)
        partials = self._executor.map(lambda rows: self.block(rows, sites).T @ weighted[rows], self._row_blocks(sites))
        total = np.zeros(3 * n_columns, dtype=np.float64)
        # Fixed block order keeps the reduction independent of the thread count
        for partial in partials:
            total += partial
        return total.reshape(n_columns, 3)

    def scaled(self, factor: float) -> 'ForwardModel':
        return ForwardModel(self.source,
                            self.target,
                            self.direction,
                            scale=self.scale * factor,
                            dense_budget=self.dense_budget,
                            block_entries=self.block_entries,
                            threads=self.threads)

    def close(self) -> None:
        self._executor.shutdown()


def scaled(model: ForwardModel, factor: float) -> ForwardModel:
    return model.scaled(factor)


def forward(model: ForwardModel, mu: DiscreteMagnetization) -> FieldData:
    if mu.grid != model.source:
        raise SupportMismatchError('support mismatch: magnetization grid {} is not the model source grid {}.'.format(
            mu.grid.grid_id, model.source.grid_id))
    if mu.n_entries == 0:
        return FieldData.zeros(model.target)
    return FieldData(grid=model.target, values=model.apply(mu.moments, mu.sites))


def adjoint(model: ForwardModel, psi: Union[FieldData, np.ndarray]) -> np.ndarray:
    if isinstance(psi, FieldData):
        if psi.grid != model.target:
            raise MeasurementMismatchError('measurement mismatch: field grid {} is not the model target grid {}.'.format(
                psi.grid.grid_id, model.target.grid_id))
        values = psi.values
    else:
        values = np.asarray(psi, dtype=np.float64).ravel()
        if values.shape[0] != model.n_meas:
            raise MeasurementMismatchError('measurement mismatch: {} values for {} points.'.format(
                values.shape[0], model.n_meas))
    return model.apply_adjoint(values)


@attr.s(frozen=True, auto_attribs=True)
class NormEstimate:
    raw: float
    bound: float
    iterations: int


def estimate_operator_norm(model: ForwardModel,
                           tol: float = 1e-6,
                           *,
                           sites: Optional[np.ndarray] = None,
                           max_iter: int = 1000,
                           seed: int = 0) -> NormEstimate:
    """Power iteration on A*A for ‖A‖² (optionally restricted to the columns of ``sites``)."""
    if not tol > 0:
        raise UsageError('Tolerance must be positive, got {}.'.format(tol))
    n_columns = model.n_sites if sites is None else len(sites)
    x = SplitMix64(seed).normal(3 * n_columns)
    x /= np.linalg.norm(x)

    previous = 0.0
    for iteration in range(1, max_iter + 1):
        image = model.apply(x, sites)
        # Rayleigh quotient ⟨x, A*Ax⟩ = ‖Ax‖²_ρ
        estimate = float(np.dot(model.target.weights * image, image))
        if not (math.isfinite(estimate) and estimate > 0):
            raise NormEstimationError('norm estimation failed: degenerate operator image.')
        y = model.apply_adjoint(image, sites).ravel()
        y_norm = np.linalg.norm(y)
        if abs(estimate - previous) <= tol * estimate:
            logger.debug('Operator norm estimate {!r} after {} iterations.'.format(estimate, iteration))
            return NormEstimate(raw=estimate, bound=estimate * (1.0 + 10.0 * tol), iterations=iteration)
        previous = estimate
        x = y / y_norm

    raise NormEstimationError('norm estimation failed: no convergence to {} after {} iterations.'.format(tol, max_iter))


def operator_norm(model: ForwardModel,
                  tol: float = 1e-6,
                  *,
                  sites: Optional[np.ndarray] = None,
                  max_iter: int = 1000,
                  seed: int = 0) -> float:
    """Upper bound L ≥ ‖A‖², the estimate inflated by (1 + 10·tol)."""
    return estimate_operator_norm(model, tol, sites=sites, max_iter=max_iter, seed=seed).bound


def _displacements(positions: np.ndarray, x: Sequence[float], what: str) -> np.ndarray:
    d = np.asarray(x, dtype=np.float64)[None, :] - np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if np.any(np.all(d == 0.0, axis=1)):
        raise SingularEvaluationError('singular evaluation: {} coincides with a dipole.'.format(what))
    return d


def dipole_potential(positions: np.ndarray, moments: np.ndarray, x: Sequence[float]) -> float:
    """Φ(x) = (1/4π) Σ_j (x−y_j)·m_j / |x−y_j|³."""
    moments = np.asarray(moments, dtype=np.float64).reshape(-1, 3)
    if moments.shape[0] == 0:
        return 0.0
    d = _displacements(positions, x, 'evaluation point')
    r2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
    r3 = r2 * np.sqrt(r2)
    terms = (d[:, 0] * moments[:, 0] + d[:, 1] * moments[:, 1] + d[:, 2] * moments[:, 2]) / r3
    return math.fsum(terms) / (4.0 * math.pi)


def dipole_field_vectors(positions: np.ndarray, moments: np.ndarray, x: Sequence[float],
                         scale: float = KAPPA_NORMALIZED) -> np.ndarray:
    """Full field b(x) = −4πκ ∇Φ(x) = −κ Σ_j K_{m_j}(x − y_j)."""
    moments = np.asarray(moments, dtype=np.float64).reshape(-1, 3)
    if moments.shape[0] == 0:
        return np.zeros(3, dtype=np.float64)
    d = _displacements(positions, x, 'evaluation point')
    r2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
    r = np.sqrt(r2)
    r3 = r2 * r
    r5 = r3 * r2
    md = d[:, 0] * moments[:, 0] + d[:, 1] * moments[:, 1] + d[:, 2] * moments[:, 2]
    terms = moments / r3[:, None] - 3.0 * d * (md / r5)[:, None]
    return -scale * np.array([math.fsum(terms[:, axis]) for axis in range(3)], dtype=np.float64)


def potential_phi(mu: DiscreteMagnetization, x: Sequence[float]) -> float:
    return dipole_potential(mu.positions(), mu.moments, x)


def field_vector(mu: DiscreteMagnetization, x: Sequence[float], scale: float = KAPPA_NORMALIZED) -> np.ndarray:
    return dipole_field_vectors(mu.positions(), mu.moments, x, scale)


def check_field_grid(model: ForwardModel, f: FieldData) -> None:
    if f.grid != model.target:
        raise MeasurementMismatchError('measurement mismatch: data grid {} is not the model target grid {}.'.format(
            f.grid.grid_id, model.target.grid_id))
