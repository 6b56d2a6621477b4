#!/usr/bin/env python
# -*- encoding: utf-8 -*-
import math
import os
import re
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import attr
import numpy as np
from scipy import ndimage

from magrec.exception import DirectionError, EmptySupportError, GeometryError, InputDataError, SeparationError, \
    UnknownComponentError
from magrec.logging import logger
from magrec.utils import canonical_json, data_checksum

UNIT_FACTORS = {'m': 1.0, 'cm': 1e-2, 'mm': 1e-3, 'um': 1e-6}

DIRECTION_TOLERANCE = 1e-12

_PGM_MAGIC = (b'P2', b'P5')


def _pair(value: Union[float, int, Sequence], name: str) -> Tuple[float, float]:
    if isinstance(value, (int, float)):
        return float(value), float(value)
    if len(value) != 2:
        raise GeometryError('invalid geometry: {} needs two entries, got {}.'.format(name, len(value)))
    return float(value[0]), float(value[1])


def _check_lattice(spacing: Tuple[float, float], counts: Tuple[int, int], plane_height: float) -> None:
    if not all(math.isfinite(d) and d > 0 for d in spacing):
        raise GeometryError('invalid geometry: spacing must be positive, got {}.'.format(spacing))
    if not all(int(n) == n and n >= 1 for n in counts):
        raise GeometryError('invalid geometry: counts must be positive integers, got {}.'.format(counts))
    if not math.isfinite(plane_height):
        raise GeometryError('invalid geometry: plane height must be finite, got {}.'.format(plane_height))


def _split_origin(origin: Sequence[float], plane_height: float) -> Tuple[float, float]:
    if len(origin) not in (2, 3):
        raise GeometryError('invalid geometry: origin needs two or three coordinates, got {}.'.format(len(origin)))
    if not all(math.isfinite(float(c)) for c in origin):
        raise GeometryError('invalid geometry: origin must be finite, got {}.'.format(list(origin)))
    if len(origin) == 3 and float(origin[2]) != plane_height:
        raise GeometryError('invalid geometry: origin z {} differs from plane height {}.'.format(
            origin[2], plane_height))
    return float(origin[0]), float(origin[1])


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@attr.s(frozen=True, eq=False, repr=False)
class Direction:
    """Unit sensor direction v."""

    v: Tuple[float, float, float] = attr.ib(converter=lambda value: tuple(float(c) for c in value))

    @v.validator
    def _check_unit(self, _, value) -> None:
        if len(value) != 3:
            raise DirectionError('Direction needs three components, got {}.'.format(len(value)))
        norm = math.sqrt(math.fsum(c * c for c in value))
        if not abs(norm - 1.0) <= DIRECTION_TOLERANCE:
            raise DirectionError('Direction {} is not a unit vector (norm {!r}).'.format(value, norm))

    @classmethod
    def normalized(cls, value: Sequence[float]) -> 'Direction':
        vector = np.asarray(value, dtype=np.float64)
        norm = np.linalg.norm(vector)
        if not norm > 0:
            raise DirectionError('Cannot normalize zero direction.')
        return cls(vector / norm)

    def as_array(self) -> np.ndarray:
        return np.array(self.v, dtype=np.float64)

    def __eq__(self, other) -> bool:
        return isinstance(other, Direction) and self.v == other.v

    def __hash__(self) -> int:
        return hash(self.v)

    def __repr__(self) -> str:
        return 'Direction(v={!r})'.format(self.v)


@attr.s(frozen=True, eq=False, repr=False)
class DipoleGrid:
    """Candidate dipole sites: a masked rectangular lattice in the plane z = plane_height.

    Sites are numbered in row-major order over the masked cells (iy outer, ix inner). Coordinates are
    ``origin + index * spacing`` computed by multiplication.
    """

    origin: Tuple[float, float] = attr.ib()
    spacing: Tuple[float, float] = attr.ib()
    counts: Tuple[int, int] = attr.ib()
    plane_height: float = attr.ib()
    mask: np.ndarray = attr.ib()

    site_ix: np.ndarray = attr.ib(init=False)
    site_iy: np.ndarray = attr.ib(init=False)
    component_id: np.ndarray = attr.ib(init=False)
    n_components: int = attr.ib(init=False)
    site_lookup: np.ndarray = attr.ib(init=False)
    grid_id: str = attr.ib(init=False)

    def __attrs_post_init__(self) -> None:
        _check_lattice(self.spacing, self.counts, self.plane_height)
        nx, ny = self.counts
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != (ny, nx):
            raise GeometryError('invalid geometry: mask shape {} does not match counts (ny, nx) = {}.'.format(
                mask.shape, (ny, nx)))
        if not mask.any():
            raise EmptySupportError('empty support: the mask has no set entries.')

        labels, n_components = ndimage.label(mask)
        site_iy, site_ix = np.nonzero(mask)
        lookup = np.full((ny, nx), -1, dtype=np.int64)
        lookup[site_iy, site_ix] = np.arange(site_iy.shape[0], dtype=np.int64)

        object.__setattr__(self, 'mask', _freeze(mask))
        object.__setattr__(self, 'site_ix', _freeze(site_ix.astype(np.int64)))
        object.__setattr__(self, 'site_iy', _freeze(site_iy.astype(np.int64)))
        object.__setattr__(self, 'component_id', _freeze(labels[site_iy, site_ix].astype(np.int64) - 1))
        object.__setattr__(self, 'n_components', int(n_components))
        object.__setattr__(self, 'site_lookup', _freeze(lookup))
        object.__setattr__(self, 'grid_id', data_checksum(canonical_json(self.to_dict()).encode('utf-8'))[:16])

    @property
    def n_sites(self) -> int:
        return int(self.site_ix.shape[0])

    @property
    def origin3(self) -> np.ndarray:
        return np.array([self.origin[0], self.origin[1], self.plane_height], dtype=np.float64)

    def offsets(self, sites: Optional[np.ndarray] = None) -> np.ndarray:
        """Site positions relative to ``origin3``."""
        ix = self.site_ix if sites is None else self.site_ix[sites]
        iy = self.site_iy if sites is None else self.site_iy[sites]
        offsets = np.zeros((ix.shape[0], 3), dtype=np.float64)
        offsets[:, 0] = ix * self.spacing[0]
        offsets[:, 1] = iy * self.spacing[1]
        return offsets

    def positions(self, sites: Optional[np.ndarray] = None) -> np.ndarray:
        ix = self.site_ix if sites is None else self.site_ix[sites]
        iy = self.site_iy if sites is None else self.site_iy[sites]
        positions = np.empty((ix.shape[0], 3), dtype=np.float64)
        positions[:, 0] = self.origin[0] + ix * self.spacing[0]
        positions[:, 1] = self.origin[1] + iy * self.spacing[1]
        positions[:, 2] = self.plane_height
        return positions

    def component_sites(self, component_id: int) -> np.ndarray:
        if not 0 <= component_id < self.n_components:
            raise UnknownComponentError('Unknown component {}, grid has {} components.'.format(
                component_id, self.n_components))
        return np.flatnonzero(self.component_id == component_id)

    def nearest_site(self, point: Sequence[float]) -> Tuple[int, float]:
        """Returns the nearest lattice site to ``point`` and the distance to it, -1 if the cell is unmasked."""
        nx, ny = self.counts
        ix = int(round((point[0] - self.origin[0]) / self.spacing[0]))
        iy = int(round((point[1] - self.origin[1]) / self.spacing[1]))
        if not (0 <= ix < nx and 0 <= iy < ny):
            return -1, math.inf
        site = int(self.site_lookup[iy, ix])
        x = self.origin[0] + ix * self.spacing[0]
        y = self.origin[1] + iy * self.spacing[1]
        distance = math.sqrt((point[0] - x)**2 + (point[1] - y)**2 + (point[2] - self.plane_height)**2)
        return site, distance

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': 'dipole-grid',
            'origin': [self.origin[0], self.origin[1]],
            'spacing': [self.spacing[0], self.spacing[1]],
            'counts': [int(self.counts[0]), int(self.counts[1])],
            'plane_height': self.plane_height,
            'mask': [''.join('1' if cell else '0' for cell in row) for row in self.mask],
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, DipoleGrid) and self.grid_id == other.grid_id

    def __hash__(self) -> int:
        return hash(self.grid_id)

    def __repr__(self) -> str:
        return 'DipoleGrid(counts={}, n_sites={}, n_components={}, plane_height={!r}, grid_id={})'.format(
            self.counts, self.n_sites, self.n_components, self.plane_height, self.grid_id)


def trapezoid_weights(spacing: Tuple[float, float], counts: Tuple[int, int]) -> np.ndarray:
    factors = []
    for d, n in zip(spacing, counts):
        factor = np.full(n, d, dtype=np.float64)
        if n > 1:
            factor[0] *= 0.5
            factor[-1] *= 0.5
        factors.append(factor)
    # rows iy, columns ix
    return np.outer(factors[1], factors[0]).ravel()


@attr.s(frozen=True, eq=False, repr=False)
class MeasurementGrid:
    """Rectangular sampling lattice at z = plane_height with quadrature weights.

    Points are numbered row-major (iy outer, ix inner).
    """

    origin: Tuple[float, float] = attr.ib()
    spacing: Tuple[float, float] = attr.ib()
    counts: Tuple[int, int] = attr.ib()
    plane_height: float = attr.ib()
    weights: np.ndarray = attr.ib(default=None)
    weights_kind: str = attr.ib(default='uniform')

    grid_id: str = attr.ib(init=False)

    def __attrs_post_init__(self) -> None:
        _check_lattice(self.spacing, self.counts, self.plane_height)
        n_points = int(self.counts[0]) * int(self.counts[1])
        if self.weights is None:
            if self.weights_kind == 'uniform':
                weights = np.ones(n_points, dtype=np.float64)
            elif self.weights_kind == 'trapezoid':
                weights = trapezoid_weights(self.spacing, self.counts)
            else:
                raise GeometryError('invalid geometry: unknown weights kind {}.'.format(self.weights_kind))
        else:
            weights = np.array(self.weights, dtype=np.float64).ravel()
            if weights.shape[0] != n_points:
                raise GeometryError('invalid geometry: {} weights given for {} points.'.format(
                    weights.shape[0], n_points))
        if not (np.all(np.isfinite(weights)) and np.all(weights > 0)):
            raise GeometryError('invalid geometry: weights must be positive and finite.')
        object.__setattr__(self, 'weights', _freeze(weights))
        object.__setattr__(self, 'grid_id', data_checksum(canonical_json(self.to_dict()).encode('utf-8'))[:16])

    @property
    def n_points(self) -> int:
        return int(self.counts[0]) * int(self.counts[1])

    @property
    def origin3(self) -> np.ndarray:
        return np.array([self.origin[0], self.origin[1], self.plane_height], dtype=np.float64)

    def _indices(self) -> Tuple[np.ndarray, np.ndarray]:
        nx, ny = self.counts
        iy, ix = np.divmod(np.arange(nx * ny, dtype=np.int64), nx)
        return ix, iy

    def offsets(self, rows: slice = slice(None)) -> np.ndarray:
        ix, iy = self._indices()
        ix, iy = ix[rows], iy[rows]
        offsets = np.zeros((ix.shape[0], 3), dtype=np.float64)
        offsets[:, 0] = ix * self.spacing[0]
        offsets[:, 1] = iy * self.spacing[1]
        return offsets

    def points(self) -> np.ndarray:
        ix, iy = self._indices()
        points = np.empty((ix.shape[0], 3), dtype=np.float64)
        points[:, 0] = self.origin[0] + ix * self.spacing[0]
        points[:, 1] = self.origin[1] + iy * self.spacing[1]
        points[:, 2] = self.plane_height
        return points

    def to_dict(self) -> Dict[str, Any]:
        document: Dict[str, Any] = {
            'type': 'measurement-grid',
            'origin': [self.origin[0], self.origin[1]],
            'spacing': [self.spacing[0], self.spacing[1]],
            'counts': [int(self.counts[0]), int(self.counts[1])],
            'plane_height': self.plane_height,
            'weights_kind': self.weights_kind,
        }
        if self.weights_kind == 'custom':
            document['weights'] = [float(w) for w in self.weights]
        return document

    def __eq__(self, other) -> bool:
        return isinstance(other, MeasurementGrid) and self.grid_id == other.grid_id

    def __hash__(self) -> int:
        return hash(self.grid_id)

    def __repr__(self) -> str:
        return 'MeasurementGrid(counts={}, plane_height={!r}, weights_kind={}, grid_id={})'.format(
            self.counts, self.plane_height, self.weights_kind, self.grid_id)


def build_dipole_grid(*,
                      origin: Sequence[float],
                      spacing: Union[float, Sequence[float]],
                      counts: Sequence[int],
                      plane_height: float,
                      mask: Optional[np.ndarray] = None) -> DipoleGrid:
    spacing_pair = _pair(spacing, 'spacing')
    counts_pair = (int(counts[0]), int(counts[1]))
    _check_lattice(spacing_pair, counts_pair, float(plane_height))
    origin_pair = _split_origin(origin, float(plane_height))
    if mask is None:
        mask = np.ones((counts_pair[1], counts_pair[0]), dtype=bool)
    grid = DipoleGrid(origin=origin_pair,
                      spacing=spacing_pair,
                      counts=counts_pair,
                      plane_height=float(plane_height),
                      mask=np.asarray(mask, dtype=bool))
    logger.debug('Built dipole grid with {} sites in {} components.'.format(grid.n_sites, grid.n_components))
    return grid


def build_measurement_grid(*,
                           origin: Sequence[float],
                           spacing: Union[float, Sequence[float]],
                           counts: Sequence[int],
                           plane_height: float,
                           weights: Union[str, np.ndarray] = 'uniform') -> MeasurementGrid:
    spacing_pair = _pair(spacing, 'spacing')
    counts_pair = (int(counts[0]), int(counts[1]))
    _check_lattice(spacing_pair, counts_pair, float(plane_height))
    origin_pair = _split_origin(origin, float(plane_height))
    if isinstance(weights, str):
        return MeasurementGrid(origin=origin_pair,
                               spacing=spacing_pair,
                               counts=counts_pair,
                               plane_height=float(plane_height),
                               weights_kind=weights)
    return MeasurementGrid(origin=origin_pair,
                           spacing=spacing_pair,
                           counts=counts_pair,
                           plane_height=float(plane_height),
                           weights=weights,
                           weights_kind='custom')


def separation(source: DipoleGrid, target: MeasurementGrid) -> float:
    """Minimum distance between any source site and any measurement point."""
    dz = target.plane_height - source.plane_height
    if dz == 0.0:
        raise SeparationError('invalid geometry: source and measurement planes coincide at z = {!r}.'.format(
            source.plane_height))

    # Nearest lattice point per site, independently per axis
    positions = source.positions()
    squared = np.zeros(source.n_sites, dtype=np.float64)
    for axis in (0, 1):
        index = np.clip(np.rint((positions[:, axis] - target.origin[axis]) / target.spacing[axis]), 0,
                        target.counts[axis] - 1)
        delta = positions[:, axis] - (target.origin[axis] + index * target.spacing[axis])
        squared += delta * delta
    closest = float(squared.min())
    if closest == 0.0:
        return abs(dz)
    return math.sqrt(dz * dz + closest)


def _read_pgm(path: str) -> np.ndarray:
    with open(path, 'rb') as f:
        data = f.read()
    magic = data[:2]
    if magic not in _PGM_MAGIC:
        raise InputDataError('Mask file {} is not a PGM image.'.format(path))

    # Header: magic, width, height, maxval separated by whitespace with optional comments
    header_tokens = []
    position = 2
    token_regex = re.compile(rb'\s*(?:#[^\n]*\n\s*)*(\S+)')
    while len(header_tokens) < 3:
        match = token_regex.match(data, position)
        if match is None:
            raise InputDataError('Mask file {} has a truncated header.'.format(path))
        header_tokens.append(int(match.group(1)))
        position = match.end()
    width, height, maxval = header_tokens

    if magic == b'P2':
        values = np.array([int(token) for token in re.sub(rb'#[^\n]*', b'', data[position:]).split()],
                          dtype=np.int64)
    else:
        dtype = np.dtype('u1') if maxval < 256 else np.dtype('>u2')
        raster = data[position + 1:]
        values = np.frombuffer(raster, dtype=dtype, count=width * height).astype(np.int64)
    if values.shape[0] != width * height:
        raise InputDataError('Mask file {} has {} pixels, expected {}.'.format(path, values.shape[0],
                                                                               width * height))
    return values.reshape(height, width) != 0


def read_mask(path: str) -> np.ndarray:
    """Boolean raster from a PGM (P2 or P5) or CSV file, first row is iy = 0."""
    if not os.path.isfile(path):
        raise InputDataError('Mask file {} does not exist.'.format(path))
    if path.lower().endswith('.pgm'):
        return _read_pgm(path)
    try:
        values = np.loadtxt(path, delimiter=',', ndmin=2)
    except ValueError as exception:
        raise InputDataError('Mask file {} is not a valid CSV raster.'.format(path)) from exception
    return values != 0


def regions_mask(counts: Sequence[int], regions: Sequence[Sequence[int]]) -> np.ndarray:
    """Union of half-open index rectangles [iy_start, iy_stop, ix_start, ix_stop]."""
    nx, ny = int(counts[0]), int(counts[1])
    mask = np.zeros((ny, nx), dtype=bool)
    for region in regions:
        iy_start, iy_stop, ix_start, ix_stop = (int(c) for c in region)
        if not (0 <= iy_start < iy_stop <= ny and 0 <= ix_start < ix_stop <= nx):
            raise GeometryError('invalid geometry: region {} is empty or outside the {}x{} lattice.'.format(
                list(region), nx, ny))
        mask[iy_start:iy_stop, ix_start:ix_stop] = True
    return mask


def _scaled_spec(spec: Dict[str, Any]) -> Tuple[list, Union[float, list], float]:
    factor = UNIT_FACTORS[spec.get('units', 'm')]
    origin = [float(c) * factor for c in spec.get('origin', [0.0, 0.0])]
    spacing = spec['spacing']
    if isinstance(spacing, (list, tuple)):
        if not all(isinstance(d, (int, float)) for d in spacing):
            raise GeometryError('invalid geometry: spacing entries must be numbers, got {}.'.format(spacing))
        spacing = [float(d) * factor for d in spacing]
    else:
        spacing = float(spacing) * factor
    return origin, spacing, float(spec['plane_height']) * factor


def dipole_grid_from_spec(spec: Dict[str, Any], base_dir: Optional[str] = None) -> DipoleGrid:
    origin, spacing, plane_height = _scaled_spec(spec)
    mask: Optional[np.ndarray] = None
    if sum(1 for key in ('mask_file', 'mask', 'regions') if spec.get(key)) > 1:
        raise GeometryError('invalid geometry: mask_file, mask and regions are mutually exclusive.')
    if spec.get('mask_file'):
        path = spec['mask_file']
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        mask = read_mask(path)
    elif spec.get('mask'):
        if len({len(row) for row in spec['mask']}) != 1:
            raise GeometryError('invalid geometry: mask rows have different lengths.')
        mask = np.array([[cell == '1' for cell in row] for row in spec['mask']], dtype=bool)
    elif spec.get('regions'):
        mask = regions_mask(spec['counts'], spec['regions'])
    return build_dipole_grid(origin=origin, spacing=spacing, counts=spec['counts'], plane_height=plane_height,
                             mask=mask)


def measurement_grid_from_spec(spec: Dict[str, Any]) -> MeasurementGrid:
    origin, spacing, plane_height = _scaled_spec(spec)
    return build_measurement_grid(origin=origin,
                                  spacing=spacing,
                                  counts=spec['counts'],
                                  plane_height=plane_height,
                                  weights=spec.get('weights', 'uniform'))
