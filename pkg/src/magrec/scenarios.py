#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""Synthetic ground truths and data.

Every generator is a pure function of its arguments and a seed. Random numbers come from independent
SplitMix64 streams spawned from the seed, one per purpose, so that e.g. changing the noise does not move
the dipoles.
"""
import math
import os
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import attr
import numpy as np

from magrec.config import Config, yaml_load
from magrec.exception import ConfigurationError, InputDataError, PackingError, SingularEvaluationError, UsageError
from magrec.fields import KAPPA_MODES, FieldData, ForwardModel, dipole_field_vectors, dipole_potential, forward, \
    kappa_for_mode
from magrec.geometry import DipoleGrid, Direction, dipole_grid_from_spec, measurement_grid_from_spec
from magrec.logging import logger
from magrec.measures import DiscreteMagnetization
from magrec.splitmix import SplitMix64

PLACEMENT_STREAM = 1
MOMENT_STREAM = 2
NOISE_STREAM = 3
AMPLITUDE_STREAM = 4

# Rejection sampling budget per requested dipole
PLACEMENT_ATTEMPTS = 1000

NOISE_MODES = ('none', 'sigma', 'ratio')
AMPLITUDE_KINDS = ('constant', 'random', 'smooth')

_PRESET_DIR = os.path.join(os.path.dirname(__file__), 'presets')
_PRESET_SUFFIX = '.yaml'


@attr.s(frozen=True, auto_attribs=True, repr=False)
class Scenario:
    name: str
    spec: Dict[str, Any]
    model: ForwardModel
    mu0: DiscreteMagnetization
    field: FieldData
    seed: int
    noisy_field: Optional[FieldData] = None
    noise_norm: float = 0.0
    lambdas: Tuple[float, ...] = ()

    @property
    def kappa_mode(self) -> str:
        for mode, scale in KAPPA_MODES.items():
            if self.model.scale == scale:
                return mode
        return 'custom'

    @property
    def data(self) -> FieldData:
        """The field a solver should see: noisy if noise was requested."""
        return self.noisy_field if self.noisy_field is not None else self.field

    def __repr__(self) -> str:
        return 'Scenario(name={}, seed={}, entries={}, noise_norm={!r})'.format(self.name, self.seed,
                                                                              self.mu0.n_entries, self.noise_norm)


def _rng(seed: int, stream: int) -> SplitMix64:
    return SplitMix64(seed).spawn(stream)


def sample_sparse(grid: DipoleGrid, n_dipoles: int, min_separation: float, moment_scale: float,
                  seed: int) -> DiscreteMagnetization:
    """Places n_dipoles on distinct sites with pairwise distance ≥ min_separation.

    Candidates are drawn upfront (PLACEMENT_ATTEMPTS per dipole) and accepted greedily in draw order.
    """
    if n_dipoles < 1:
        raise UsageError('Number of dipoles must be positive, got {}.'.format(n_dipoles))
    if min_separation < 0 or moment_scale < 0:
        raise UsageError('Minimum separation and moment scale must be non-negative.')
    if n_dipoles > grid.n_sites:
        raise PackingError('packing failed: {} dipoles requested but the grid has only {} sites.'.format(
            n_dipoles, grid.n_sites))

    candidates = _rng(seed, PLACEMENT_STREAM).integers(grid.n_sites, PLACEMENT_ATTEMPTS * n_dipoles)
    positions = grid.positions()
    squared_separation = min_separation * min_separation
    accepted: List[int] = []
    for candidate in candidates:
        candidate = int(candidate)
        if candidate in accepted:
            continue
        if accepted:
            delta = positions[accepted] - positions[candidate]
            squared = delta[:, 0] * delta[:, 0] + delta[:, 1] * delta[:, 1] + delta[:, 2] * delta[:, 2]
            if np.any(squared < squared_separation):
                continue
        accepted.append(candidate)
        if len(accepted) == n_dipoles:
            break
    else:
        raise PackingError('packing failed: placed {} of {} dipoles with separation {} after {} attempts.'.format(
            len(accepted), n_dipoles, min_separation, candidates.shape[0]))

    moment_rng = _rng(seed, MOMENT_STREAM)
    magnitudes = moment_scale * (0.5 + 0.5 * moment_rng.uniform(n_dipoles))
    moments = moment_rng.unit_vectors(n_dipoles) * magnitudes[:, None]
    return DiscreteMagnetization.from_entries(grid, accepted, moments)


def _amplitudes(grid: DipoleGrid, sites: np.ndarray, kind: str, scale: float, rng: SplitMix64) -> np.ndarray:
    if kind == 'constant':
        return np.full(sites.shape[0], scale, dtype=np.float64)
    elif kind == 'random':
        return scale * (0.5 + 0.5 * rng.uniform(sites.shape[0]))
    elif kind == 'smooth':
        # Separable sine bump over the bounding box, positive on every site
        ix, iy = grid.site_ix[sites], grid.site_iy[sites]
        width = ix.max() - ix.min() + 2
        height = iy.max() - iy.min() + 2
        return scale * np.sin(math.pi * (ix - ix.min() + 1) / width) * np.sin(math.pi * (iy - iy.min() + 1) / height)
    else:
        raise UsageError('Unknown amplitude kind {}, expected one of {}.'.format(kind, ', '.join(AMPLITUDE_KINDS)))


def sample_unidirectional(grid: DipoleGrid,
                          directions: Sequence[Sequence[float]],
                          amplitude: str = 'constant',
                          amplitude_scale: float = 1.0,
                          seed: int = 0) -> DiscreteMagnetization:
    """Every moment of component i is a non-negative multiple of directions[i]."""
    if len(directions) != grid.n_components:
        raise UsageError('Grid has {} components but {} directions were given.'.format(
            grid.n_components, len(directions)))
    if amplitude_scale < 0:
        raise UsageError('Amplitude scale must be non-negative, got {}.'.format(amplitude_scale))
    # Raises DirectionError for non-unit vectors
    unit_directions = [Direction(tuple(float(c) for c in direction)).as_array() for direction in directions]

    rng = _rng(seed, AMPLITUDE_STREAM)
    moments = np.zeros((grid.n_sites, 3), dtype=np.float64)
    for component_id, direction in enumerate(unit_directions):
        sites = grid.component_sites(component_id)
        amplitudes = _amplitudes(grid, sites, amplitude, amplitude_scale, rng)
        moments[sites] = amplitudes[:, None] * direction[None, :]
    return DiscreteMagnetization.from_dense(grid, moments)


def _scenario(name: str, model: ForwardModel, mu0: DiscreteMagnetization, seed: int,
              spec: Optional[Dict[str, Any]]) -> Scenario:
    field = forward(model, mu0)
    logger.debug('Generated scenario {} with {} dipoles, data norm {!r}.'.format(name, mu0.n_entries,
                                                                                  field.weighted_norm()))
    return Scenario(name=name, spec=spec if spec is not None else {}, model=model, mu0=mu0, field=field, seed=seed)


def gen_sparse(model: ForwardModel,
               n_dipoles: int,
               min_separation: float,
               moment_scale: float,
               seed: int,
               *,
               name: str = 'sparse',
               spec: Optional[Dict[str, Any]] = None) -> Scenario:
    mu0 = sample_sparse(model.source, n_dipoles, min_separation, moment_scale, seed)
    return _scenario(name, model, mu0, seed, spec)


def gen_unidirectional(model: ForwardModel,
                       directions: Sequence[Sequence[float]],
                       amplitude: str = 'constant',
                       amplitude_scale: float = 1.0,
                       seed: int = 0,
                       *,
                       name: str = 'unidirectional',
                       spec: Optional[Dict[str, Any]] = None) -> Scenario:
    mu0 = sample_unidirectional(model.source, directions, amplitude, amplitude_scale, seed)
    return _scenario(name, model, mu0, seed, spec)


def add_noise(f: FieldData,
              *,
              mode: str,
              sigma: float = 0.0,
              ratio: float = 0.0,
              lam: float = 0.0,
              seed: int = 0) -> Tuple[FieldData, float]:
    """Adds Gaussian noise e and returns (f + e, ‖e‖_ρ).

    ``sigma`` mode scales a standard normal draw by sigma. ``ratio`` mode normalizes the draw to
    ‖e‖_ρ = ratio·√λ.
    """
    if mode not in NOISE_MODES:
        raise UsageError('Unknown noise mode {}, expected one of {}.'.format(mode, ', '.join(NOISE_MODES)))
    if sigma < 0 or ratio < 0:
        raise UsageError('Noise level must be non-negative.')
    if mode == 'none' or (mode == 'sigma' and sigma == 0.0) or (mode == 'ratio' and ratio == 0.0):
        return f, 0.0

    draw = FieldData(grid=f.grid, values=_rng(seed, NOISE_STREAM).normal(f.grid.n_points))
    if mode == 'sigma':
        noise = draw.scaled(sigma)
    else:
        if not lam > 0:
            raise UsageError('Ratio noise needs a positive lambda, got {!r}.'.format(lam))
        draw_norm = draw.weighted_norm()
        if draw_norm == 0.0:
            raise InputDataError('Noise draw has zero weighted norm.')
        noise = draw.scaled(ratio * math.sqrt(lam) / draw_norm)
    return f + noise, noise.weighted_norm()


@attr.s(frozen=True, eq=False, repr=False)
class DipoleCloud:
    """Point dipoles standing in for a volumetric magnetization supported in the ball B(center, radius).

    Field and potential are only defined outside the closed ball.
    """

    positions: np.ndarray = attr.ib()
    moments: np.ndarray = attr.ib()
    center: np.ndarray = attr.ib()
    radius: float = attr.ib(converter=float)

    def _check_outside(self, x: Sequence[float]) -> None:
        delta = np.asarray(x, dtype=np.float64) - self.center
        if math.sqrt(math.fsum(delta * delta)) <= self.radius:
            raise SingularEvaluationError('singular evaluation: point {} lies inside the ball of radius {}.'.format(
                list(x), self.radius))

    def field(self, x: Sequence[float], scale: float = 1.0) -> np.ndarray:
        self._check_outside(x)
        return dipole_field_vectors(self.positions, self.moments, x, scale)

    def potential(self, x: Sequence[float]) -> float:
        self._check_outside(x)
        return dipole_potential(self.positions, self.moments, x)

    def net_moment(self) -> np.ndarray:
        return np.array([math.fsum(self.moments[:, axis]) for axis in range(3)], dtype=np.float64)

    def __repr__(self) -> str:
        return 'DipoleCloud(nodes={}, radius={!r})'.format(self.positions.shape[0], self.radius)


def _gauss_legendre(order: int, low: float, high: float) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (high - low)
    return low + half * (nodes + 1.0), half * weights


def gen_silent_pair(radius: float,
                    moment: Sequence[float],
                    quadrature_order: int,
                    center: Sequence[float] = (0.0, 0.0, 0.0)) -> Tuple[DipoleCloud, DipoleCloud]:
    """Uniformly magnetized ball and the point dipole with the same net moment at its center.

    The ball is discretized by a product Gauss-Legendre rule in (r, cos θ, φ) with ``quadrature_order`` nodes
    per axis. Quadrature weights are normalized so that both net moments agree up to rounding.
    """
    if not radius > 0:
        raise UsageError('Radius must be positive, got {!r}.'.format(radius))
    if quadrature_order < 1:
        raise UsageError('Quadrature order must be positive, got {}.'.format(quadrature_order))
    moment = np.asarray(moment, dtype=np.float64).reshape(3)
    center = np.asarray(center, dtype=np.float64).reshape(3)

    r, wr = _gauss_legendre(quadrature_order, 0.0, radius)
    cos_theta, wc = _gauss_legendre(quadrature_order, -1.0, 1.0)
    phi, wp = _gauss_legendre(quadrature_order, 0.0, 2.0 * math.pi)
    rr, cc, pp = np.meshgrid(r, cos_theta, phi, indexing='ij')
    weights = (wr[:, None, None] * rr * rr * wc[None, :, None] * wp[None, None, :]).ravel()
    sin_theta = np.sqrt(1.0 - cc * cc)
    offsets = np.stack([rr * sin_theta * np.cos(pp), rr * sin_theta * np.sin(pp), rr * cc], axis=-1).reshape(-1, 3)

    fractions = weights / math.fsum(weights)
    ball = DipoleCloud(positions=center[None, :] + offsets,
                       moments=fractions[:, None] * moment[None, :],
                       center=center,
                       radius=radius)
    dipole = DipoleCloud(positions=center[None, :].copy(), moments=moment[None, :].copy(), center=center, radius=0.0)
    return ball, dipole


def difference(first: DipoleCloud, second: DipoleCloud) -> DipoleCloud:
    """first − second as one cloud, supported in the larger of both balls."""
    if not np.array_equal(first.center, second.center):
        raise UsageError('Dipole clouds must share their center.')
    return DipoleCloud(positions=np.concatenate([first.positions, second.positions]),
                       moments=np.concatenate([first.moments, -second.moments]),
                       center=first.center,
                       radius=max(first.radius, second.radius))


def _cubic_gradient(center: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    # ∇φ for φ(x) = (x₁ − c₁)³
    def gradient(positions: np.ndarray) -> np.ndarray:
        values = np.zeros_like(positions)
        shifted = positions[:, 0] - center[0]
        values[:, 0] = 3.0 * shifted * shifted
        return values

    return gradient


def divergence_pairing(cloud: DipoleCloud, gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> float:
    """∫ μ·∇φ, the distributional pairing −⟨div μ, φ⟩. φ defaults to (x₁ − c₁)³.

    Divergence-free magnetizations pair to zero with every φ.
    """
    if gradient is None:
        gradient = _cubic_gradient(cloud.center)
    values = gradient(cloud.positions)
    return math.fsum((cloud.moments * values).ravel())


def preset_names() -> List[str]:
    return sorted(filename[:-len(_PRESET_SUFFIX)]
                  for filename in os.listdir(_PRESET_DIR)
                  if filename.endswith(_PRESET_SUFFIX))


def load_preset(name: str) -> Dict[str, Any]:
    path = os.path.join(_PRESET_DIR, name + _PRESET_SUFFIX)
    if not os.path.isfile(path):
        raise UsageError('Unknown preset {}, available are: {}.'.format(name, ', '.join(preset_names())))
    with open(path, 'r') as f:
        return yaml_load(f)


def load_scenario_spec(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise InputDataError('Scenario file {} does not exist.'.format(path))
    try:
        with open(path, 'r') as f:
            spec = yaml_load(f)
    except Exception as exception:
        raise ConfigurationError('Scenario file {} is invalid.'.format(path)) from exception
    if not isinstance(spec, dict):
        raise ConfigurationError('Scenario file {} must contain a mapping.'.format(path))
    return spec


def _center(spec: Dict[str, Any]) -> Dict[str, Any]:
    counts = spec['counts']
    spacing = spec['spacing'] if isinstance(spec['spacing'], list) else [spec['spacing']] * 2
    centered = dict(spec)
    centered['origin'] = [-0.5 * (counts[axis] - 1) * spacing[axis] for axis in (0, 1)]
    return centered


def build_model(source: DipoleGrid, measurement, direction: Sequence[float], config: Config,
                kappa_mode: Optional[str] = None) -> ForwardModel:
    """ForwardModel with the run configuration's kappa mode, dense budget, block size and thread count."""
    mode = kappa_mode if kappa_mode is not None else config.get('kappaMode', types=str)
    return ForwardModel(source,
                        measurement,
                        Direction(tuple(float(c) for c in direction)),
                        scale=kappa_for_mode(mode),
                        dense_budget=config.get('denseBudget', types=int),
                        block_entries=config.get('blockEntries', types=int),
                        threads=config.get('threads', types=int))


def scenario_from_spec(spec: Dict[str, Any], config: Config, base_dir: Optional[str] = None) -> Scenario:
    """Validates a scenario specification and generates it, including the requested noise."""
    spec = config.validate(module='magrec.scenario', config=spec)
    source_spec = config.validate(module='magrec.geometry', config=spec['source'])
    measurement_spec = config.validate(module='magrec.geometry', config=spec['measurement'])
    if spec['centered']:
        source_spec, measurement_spec = _center(source_spec), _center(measurement_spec)
    spec['source'], spec['measurement'] = source_spec, measurement_spec

    source = dipole_grid_from_spec(source_spec, base_dir=base_dir)
    measurement = measurement_grid_from_spec(measurement_spec)
    model = build_model(source, measurement, spec['direction'], config, kappa_mode=spec['kappaMode'])
    seed = spec['seed']

    if spec['kind'] == 'sparse':
        if 'sparse' not in spec:
            raise ConfigurationError('Scenario {} of kind sparse needs a sparse section.'.format(spec['name']))
        section = spec['sparse']
        scenario = gen_sparse(model,
                              section['nDipoles'],
                              section['minSeparation'],
                              section['momentScale'],
                              seed,
                              name=spec['name'],
                              spec=spec)
    else:
        if 'unidirectional' not in spec:
            raise ConfigurationError('Scenario {} of kind unidirectional needs a unidirectional section.'.format(
                spec['name']))
        section = spec['unidirectional']
        amplitude = section.get('amplitude', {})
        scenario = gen_unidirectional(model,
                                      section['directions'],
                                      amplitude.get('kind', 'constant'),
                                      amplitude.get('scale', 1.0),
                                      seed,
                                      name=spec['name'],
                                      spec=spec)

    noise = spec['noise']
    if noise.get('mode', 'none') != 'none':
        noisy_field, noise_norm = add_noise(scenario.field,
                                            mode=noise['mode'],
                                            sigma=noise.get('sigma', 0.0),
                                            ratio=noise.get('ratio', 0.0),
                                            lam=noise.get('lambda', 0.0),
                                            seed=seed)
        scenario = attr.evolve(scenario, noisy_field=noisy_field, noise_norm=noise_norm)
    return attr.evolve(scenario, lambdas=tuple(spec['lambdas']))


def scenario_from_preset(name: str, config: Config, seed: Optional[int] = None) -> Scenario:
    spec = load_preset(name)
    if seed is not None:
        spec['seed'] = seed
    return scenario_from_spec(spec, config)
