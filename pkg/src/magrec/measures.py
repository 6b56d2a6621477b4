#!/usr/bin/env python
# -*- encoding: utf-8 -*-
import math
from typing import List, Optional, Sequence, Tuple

import attr
import numpy as np

from magrec.exception import GridMismatchError, InputDataError, NonFiniteError, UndefinedDirectionError, \
    UnknownComponentError, UsageError
from magrec.geometry import DipoleGrid


def site_norms(moments: np.ndarray) -> np.ndarray:
    """Euclidean norm per row of a (k, 3) array, always evaluated in the same operation order."""
    moments = np.asarray(moments, dtype=np.float64)
    return np.sqrt(moments[:, 0] * moments[:, 0] + moments[:, 1] * moments[:, 1] + moments[:, 2] * moments[:, 2])


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@attr.s(frozen=True, eq=False, repr=False)
class DiscreteMagnetization:
    """Finite sum of point dipoles on the sites of a DipoleGrid.

    Entries are kept sorted by site index. Zero moments may be present until ``canonicalize`` is applied.
    """

    grid: DipoleGrid = attr.ib()
    sites: np.ndarray = attr.ib()
    moments: np.ndarray = attr.ib()

    def __attrs_post_init__(self) -> None:
        sites = np.array(self.sites, dtype=np.int64).ravel()
        moments = np.array(self.moments, dtype=np.float64).reshape(-1, 3)
        if sites.shape[0] != moments.shape[0]:
            raise InputDataError('Got {} sites but {} moments.'.format(sites.shape[0], moments.shape[0]))
        if sites.shape[0] > 0:
            if sites[0] < 0 or sites[-1] >= self.grid.n_sites:
                raise InputDataError('Site index outside of grid with {} sites.'.format(self.grid.n_sites))
            if np.any(np.diff(sites) <= 0):
                raise InputDataError('Site indices must be unique and sorted.')
        if not np.all(np.isfinite(moments)):
            raise NonFiniteError('Magnetization contains non-finite moments.')
        object.__setattr__(self, 'sites', _readonly(sites))
        object.__setattr__(self, 'moments', _readonly(moments))

    @classmethod
    def from_entries(cls, grid: DipoleGrid, sites: Sequence[int], moments: Sequence[Sequence[float]]) -> \
            'DiscreteMagnetization':
        sites_array = np.array(sites, dtype=np.int64).ravel()
        moments_array = np.array(moments, dtype=np.float64).reshape(-1, 3)
        if np.unique(sites_array).shape[0] != sites_array.shape[0]:
            raise InputDataError('Duplicate site indices in magnetization entries.')
        order = np.argsort(sites_array, kind='stable')
        return cls(grid=grid, sites=sites_array[order], moments=moments_array[order])

    @classmethod
    def from_dense(cls,
                   grid: DipoleGrid,
                   dense: np.ndarray,
                   sites: Optional[np.ndarray] = None) -> 'DiscreteMagnetization':
        """Builds a canonical magnetization from a (len(sites), 3) array, ``sites`` defaults to all sites."""
        dense = np.asarray(dense, dtype=np.float64).reshape(-1, 3)
        if sites is None:
            sites = np.arange(grid.n_sites, dtype=np.int64)
        keep = np.any(dense != 0.0, axis=1)
        return cls(grid=grid, sites=np.asarray(sites, dtype=np.int64)[keep], moments=dense[keep])

    @classmethod
    def zeros(cls, grid: DipoleGrid) -> 'DiscreteMagnetization':
        return cls(grid=grid, sites=np.empty(0, dtype=np.int64), moments=np.empty((0, 3), dtype=np.float64))

    @property
    def n_entries(self) -> int:
        return int(self.sites.shape[0])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.moments != 0.0)

    def norms(self) -> np.ndarray:
        return site_norms(self.moments)

    def positions(self) -> np.ndarray:
        return self.grid.positions(self.sites)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.grid.n_sites, 3), dtype=np.float64)
        dense[self.sites] = self.moments
        return dense

    def scaled(self, factor: float) -> 'DiscreteMagnetization':
        return DiscreteMagnetization(grid=self.grid, sites=self.sites, moments=self.moments * factor)

    def with_moment(self, site: int, moment: Sequence[float]) -> 'DiscreteMagnetization':
        dense = self.to_dense()
        dense[site] = moment
        support = np.union1d(self.sites, [site]).astype(np.int64)
        return DiscreteMagnetization(grid=self.grid, sites=support, moments=dense[support])

    def _combine(self, other: 'DiscreteMagnetization', sign: float) -> 'DiscreteMagnetization':
        _check_same_grid(self, other)
        support = np.union1d(self.sites, other.sites).astype(np.int64)
        moments = np.zeros((support.shape[0], 3), dtype=np.float64)
        moments[np.searchsorted(support, self.sites)] += self.moments
        moments[np.searchsorted(support, other.sites)] += sign * other.moments
        return DiscreteMagnetization(grid=self.grid, sites=support, moments=moments)

    def __add__(self, other: 'DiscreteMagnetization') -> 'DiscreteMagnetization':
        return self._combine(other, 1.0)

    def __sub__(self, other: 'DiscreteMagnetization') -> 'DiscreteMagnetization':
        return self._combine(other, -1.0)

    def same_entries(self, other: 'DiscreteMagnetization') -> bool:
        """Bitwise equality of grid and entry lists."""
        return (self.grid == other.grid and np.array_equal(self.sites, other.sites) and
                np.array_equal(self.moments, other.moments))

    def __repr__(self) -> str:
        return 'DiscreteMagnetization(grid_id={}, n_entries={})'.format(self.grid.grid_id, self.n_entries)


def _check_same_grid(mu: DiscreteMagnetization, nu: DiscreteMagnetization) -> None:
    if mu.grid != nu.grid:
        raise GridMismatchError('Magnetizations live on different grids ({} and {}).'.format(
            mu.grid.grid_id, nu.grid.grid_id))


def canonicalize(mu: DiscreteMagnetization) -> DiscreteMagnetization:
    """Removes entries whose moment is exactly zero."""
    keep = np.any(mu.moments != 0.0, axis=1)
    if keep.all():
        return mu
    return DiscreteMagnetization(grid=mu.grid, sites=mu.sites[keep], moments=mu.moments[keep])


def truncate(mu: DiscreteMagnetization, eps: float) -> DiscreteMagnetization:
    """Removes entries with |m_j| < eps. For reporting only, the solver never truncates."""
    if eps < 0:
        raise UsageError('Truncation threshold must be non-negative, got {}.'.format(eps))
    keep = mu.norms() >= eps
    keep &= np.any(mu.moments != 0.0, axis=1)
    return DiscreteMagnetization(grid=mu.grid, sites=mu.sites[keep], moments=mu.moments[keep])


def _component_slices(mu: DiscreteMagnetization) -> List[np.ndarray]:
    components = mu.grid.component_id[mu.sites]
    return [np.flatnonzero(components == component_id) for component_id in range(mu.grid.n_components)]


def _component_tvs(mu: DiscreteMagnetization) -> List[float]:
    norms = mu.norms()
    return [math.fsum(norms[entries]) for entries in _component_slices(mu)]


def _component_net_moments(mu: DiscreteMagnetization) -> List[Tuple[float, float, float]]:
    return [
        tuple(math.fsum(mu.moments[entries, axis]) for axis in range(3))  # type: ignore
        for entries in _component_slices(mu)
    ]


def _ordered_sum(values: Sequence[float]) -> float:
    # Sequential in component order so restricted sums reassemble the total exactly
    total = 0.0
    for value in values:
        total += value
    return total


def tv_norm(mu: DiscreteMagnetization) -> float:
    """Sum of the Euclidean norms of all moments."""
    return _ordered_sum(_component_tvs(mu))


def net_moment(mu: DiscreteMagnetization) -> np.ndarray:
    per_component = _component_net_moments(mu)
    return np.array([_ordered_sum([moment[axis] for moment in per_component]) for axis in range(3)],
                    dtype=np.float64)


def vector_norm(vector: Sequence[float]) -> float:
    return math.sqrt(math.fsum(float(c) * float(c) for c in vector))


def unidirectionality_defect(mu: DiscreteMagnetization) -> float:
    """1 − |⟨μ⟩| / ‖μ‖_TV, zero exactly for uni-directional magnetizations."""
    tv = tv_norm(mu)
    if tv == 0.0:
        raise UndefinedDirectionError('undefined direction: magnetization is zero.')
    return min(1.0, max(0.0, 1.0 - vector_norm(net_moment(mu)) / tv))


def mean_direction(mu: DiscreteMagnetization) -> np.ndarray:
    net = net_moment(mu)
    norm = vector_norm(net)
    if norm == 0.0:
        raise UndefinedDirectionError('undefined direction: net moment is zero.')
    return net / norm


def restrict(mu: DiscreteMagnetization, component_id: int) -> DiscreteMagnetization:
    if not 0 <= component_id < mu.grid.n_components:
        raise UnknownComponentError('Unknown component {}, grid has {} components.'.format(
            component_id, mu.grid.n_components))
    keep = mu.grid.component_id[mu.sites] == component_id
    return DiscreteMagnetization(grid=mu.grid, sites=mu.sites[keep], moments=mu.moments[keep])


def tv_distance(mu: DiscreteMagnetization, nu: DiscreteMagnetization) -> float:
    return tv_norm(mu - nu)


def relative_tv_distance(mu: DiscreteMagnetization, reference: DiscreteMagnetization) -> float:
    """tv_distance(mu, reference) / tv_norm(reference)."""
    reference_tv = tv_norm(reference)
    if reference_tv == 0.0:
        raise UndefinedDirectionError('Relative distance to the zero magnetization is undefined.')
    return tv_distance(mu, reference) / reference_tv


def local_mass(mu: DiscreteMagnetization, center: Sequence[float], radius: float) -> Tuple[float, np.ndarray]:
    """(|μ|(B), μ(B)) for the open ball B of the given radius around center."""
    if not radius > 0:
        raise UsageError('Radius must be positive, got {}.'.format(radius))
    delta = mu.positions() - np.asarray(center, dtype=np.float64)[None, :]
    inside = site_norms(delta) < radius
    moments = mu.moments[inside]
    mass = math.fsum(site_norms(moments))
    moment = np.array([math.fsum(moments[:, axis]) for axis in range(3)], dtype=np.float64)
    return mass, moment


@attr.s(frozen=True, auto_attribs=True)
class ComponentSummary:
    component_id: int
    tv: float
    net_moment: Tuple[float, float, float]


@attr.s(frozen=True, auto_attribs=True)
class MomentSummary:
    tv: float
    net_moment: Tuple[float, float, float]
    per_component: Tuple[ComponentSummary, ...]

    def to_dict(self) -> dict:
        return attr.asdict(self, recurse=True, retain_collection_types=False)


def summarize(mu: DiscreteMagnetization) -> MomentSummary:
    tvs = _component_tvs(mu)
    nets = _component_net_moments(mu)
    per_component = tuple(
        ComponentSummary(component_id=i, tv=tv, net_moment=net) for i, (tv, net) in enumerate(zip(tvs, nets)))
    total_net = tuple(_ordered_sum([net[axis] for net in nets]) for axis in range(3))
    return MomentSummary(tv=_ordered_sum(tvs), net_moment=total_net, per_component=per_component)  # type: ignore


def off_neighborhood_mass(mu: DiscreteMagnetization, centers: np.ndarray, radius: float) -> float:
    """|μ| outside the union of the open balls of the given radius around ``centers``."""
    if not radius > 0:
        raise UsageError('Radius must be positive, got {}.'.format(radius))
    positions = mu.positions()
    outside = np.ones(mu.n_entries, dtype=bool)
    for center in np.asarray(centers, dtype=np.float64).reshape(-1, 3):
        outside &= site_norms(positions - center[None, :]) >= radius
    return math.fsum(mu.norms()[outside])
