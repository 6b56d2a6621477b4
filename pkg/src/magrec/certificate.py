#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""First-order optimality certificates.

For a candidate μ and residual r = f − Aμ the dual field g_j = A*r(y_j) must satisfy

* collinearity on the support: |g_j − (λ/2)·m_j/|m_j|| ≤ tol·λ
* feasibility everywhere: |g_j| ≤ (λ/2)(1 + tol)

Everything reported here is recomputed from ``site_values``, never taken over from a solver.
"""
import math
from typing import Any, Dict, List

import attr
import numpy as np

from magrec.exception import GridMismatchError, UsageError
from magrec.fields import FieldData, ForwardModel, adjoint, check_field_grid, forward
from magrec.measures import DiscreteMagnetization, site_norms


@attr.s(frozen=True, eq=False, repr=False)
class Certificate:
    site_values: np.ndarray = attr.ib()
    lam: float = attr.ib(converter=float)
    tol: float = attr.ib(converter=float)
    support: np.ndarray = attr.ib()
    support_moments: np.ndarray = attr.ib()

    def __attrs_post_init__(self) -> None:
        for name in ('site_values', 'support_moments'):
            array = np.array(getattr(self, name), dtype=np.float64).reshape(-1, 3)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        support = np.array(self.support, dtype=np.int64).ravel()
        support.setflags(write=False)
        object.__setattr__(self, 'support', support)

    @property
    def n_sites(self) -> int:
        return int(self.site_values.shape[0])

    def norms(self) -> np.ndarray:
        return site_norms(self.site_values)

    def _off_support(self) -> np.ndarray:
        off_support = np.ones(self.n_sites, dtype=bool)
        off_support[self.support] = False
        return off_support

    @property
    def max_norm(self) -> float:
        return float(self.norms().max()) if self.n_sites else 0.0

    @property
    def max_off_support_norm(self) -> float:
        norms = self.norms()[self._off_support()]
        return float(norms.max()) if norms.size else 0.0

    def alignment_errors(self) -> np.ndarray:
        if self.support.size == 0:
            return np.empty(0, dtype=np.float64)
        moments = self.support_moments
        directions = moments / site_norms(moments)[:, None]
        return site_norms(self.site_values[self.support] - 0.5 * self.lam * directions)

    @property
    def max_alignment_error(self) -> float:
        errors = self.alignment_errors()
        return float(errors.max()) if errors.size else 0.0

    @property
    def degeneracy_set(self) -> np.ndarray:
        """Zero-moment sites where |g_j| is within tol·λ of λ/2."""
        close = np.abs(self.norms() - 0.5 * self.lam) <= self.tol * self.lam
        return np.flatnonzero(close & self._off_support())

    @property
    def collinearity_violations(self) -> np.ndarray:
        return self.support[self.alignment_errors() > self.tol * self.lam]

    @property
    def feasibility_violations(self) -> np.ndarray:
        return np.flatnonzero(self.norms() > 0.5 * self.lam * (1.0 + self.tol))

    @property
    def passed(self) -> bool:
        return self.collinearity_violations.size == 0 and self.feasibility_violations.size == 0

    @property
    def slack(self) -> float:
        """max_j |g_j| / (λ/2) − 1, non-positive when feasibility holds exactly."""
        return self.max_norm / (0.5 * self.lam) - 1.0

    def summary(self) -> Dict[str, Any]:
        return {
            'lambda': self.lam,
            'tol': self.tol,
            'passed': self.passed,
            'max_norm': self.max_norm,
            'max_off_support_norm': self.max_off_support_norm,
            'max_alignment_error': self.max_alignment_error,
            'slack': self.slack,
            'support_size': int(self.support.size),
            'degeneracy_set_size': int(self.degeneracy_set.size),
            'collinearity_violations': [int(site) for site in self.collinearity_violations],
            'feasibility_violations': int(self.feasibility_violations.size),
        }

    def __repr__(self) -> str:
        return 'Certificate(lam={!r}, passed={}, max_off_support_norm={!r}, max_alignment_error={!r})'.format(
            self.lam, self.passed, self.max_off_support_norm, self.max_alignment_error)


def dual_field(model: ForwardModel, f: FieldData, mu: DiscreteMagnetization) -> np.ndarray:
    """g = A*(f − Aμ) on every site."""
    check_field_grid(model, f)
    return adjoint(model, f - forward(model, mu))


def check_optimality(model: ForwardModel, f: FieldData, mu: DiscreteMagnetization, lam: float,
                     tol: float) -> Certificate:
    """Evaluates the certificate on the full grid, ``Certificate.passed`` holds the verdict."""
    check_field_grid(model, f)
    return certificate_from_residual(model, f - forward(model, mu), mu, lam, tol)


def certificate_from_residual(model: ForwardModel, residual: FieldData, mu: DiscreteMagnetization, lam: float,
                              tol: float) -> Certificate:
    """Same as check_optimality for a known residual f − Aμ."""
    if not tol > 0:
        raise UsageError('Certificate tolerance must be positive, got {!r}.'.format(tol))
    if not lam > 0:
        raise UsageError('lambda must be positive, got {!r}.'.format(lam))
    if mu.grid != model.source:
        raise GridMismatchError('Magnetization grid {} is not the model source grid {}.'.format(
            mu.grid.grid_id, model.source.grid_id))
    nonzero = np.any(mu.moments != 0.0, axis=1)
    return Certificate(site_values=adjoint(model, residual),
                       lam=lam,
                       tol=tol,
                       support=mu.sites[nonzero],
                       support_moments=mu.moments[nonzero])


@attr.s(frozen=True, auto_attribs=True)
class SupportPartition:
    interior: np.ndarray
    boundary: np.ndarray
    exterior: np.ndarray


def support_localization(certificate: Certificate) -> SupportPartition:
    """Partitions the sites by the sign of h = |g|² − λ²/4.

    The threshold is tol·λ² since h scales with λ². Sites of a verified minimizer's support always end up in
    the boundary set. For non-optimal inputs the partition is returned without any containment guarantee.
    """
    norms = certificate.norms()
    h = norms * norms - 0.25 * certificate.lam * certificate.lam
    threshold = certificate.tol * certificate.lam * certificate.lam
    return SupportPartition(interior=np.flatnonzero(h < -threshold),
                            boundary=np.flatnonzero(np.abs(h) <= threshold),
                            exterior=np.flatnonzero(h > threshold))


def equivalence_residual(model: ForwardModel,
                         mu: DiscreteMagnetization,
                         nu: DiscreteMagnetization,
                         floor: float = np.finfo(np.float64).tiny) -> float:
    """‖A(μ−ν)‖_ρ / max(‖Aμ‖_ρ, ‖Aν‖_ρ, floor)."""
    field_mu = forward(model, mu)
    field_nu = forward(model, nu)
    difference = (field_mu - field_nu).weighted_norm()
    if difference == 0.0:
        return 0.0
    return difference / max(field_mu.weighted_norm(), field_nu.weighted_norm(), floor)


def alignment_defect(certificate: Certificate, mu0: DiscreteMagnetization) -> float:
    """|μ₀|-weighted mean of |2g/λ − u₀| over the support of μ₀.

    Zero when the dual field interpolates the ground-truth direction on its support.
    """
    if mu0.grid.n_sites != certificate.n_sites:
        raise GridMismatchError('Certificate has {} sites, reference grid has {}.'.format(
            certificate.n_sites, mu0.grid.n_sites))
    norms = mu0.norms()
    keep = norms > 0
    if not keep.any():
        return 0.0
    directions = mu0.moments[keep] / norms[keep][:, None]
    deviations = site_norms(2.0 * certificate.site_values[mu0.sites[keep]] / certificate.lam - directions)
    return math.fsum(norms[keep] * deviations) / math.fsum(norms[keep])


def violating_sites(certificate: Certificate) -> List[int]:
    return sorted(set(int(site) for site in certificate.collinearity_violations) |
                  set(int(site) for site in certificate.feasibility_violations))


def certificate_slack(certificate: Certificate) -> float:
    return certificate.slack
