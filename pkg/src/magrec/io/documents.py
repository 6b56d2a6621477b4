#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""JSON documents for grids and certificates."""
from typing import Any, Dict

import numpy as np

from magrec.certificate import Certificate
from magrec.exception import InputDataError
from magrec.geometry import DipoleGrid, MeasurementGrid, build_dipole_grid, build_measurement_grid
from magrec.io.base import read_document, write_document

DIPOLE_GRID_TYPE = 'dipole-grid'
MEASUREMENT_GRID_TYPE = 'measurement-grid'
CERTIFICATE_TYPE = 'certificate'


def save_dipole_grid(grid: DipoleGrid, path: str) -> Dict[str, Any]:
    document = grid.to_dict()
    document['grid_id'] = grid.grid_id
    return write_document(path, document)


def _check_grid_id(path: str, document: Dict[str, Any], grid_id: str) -> None:
    if document.get('grid_id') != grid_id:
        raise InputDataError('Grid {} has id {}, its content hashes to {}.'.format(path, document.get('grid_id'),
                                                                                   grid_id))


def load_dipole_grid(path: str) -> DipoleGrid:
    document = read_document(path, type_=DIPOLE_GRID_TYPE)
    try:
        mask = np.array([[cell == '1' for cell in row] for row in document['mask']], dtype=bool)
        grid = build_dipole_grid(origin=document['origin'],
                                 spacing=document['spacing'],
                                 counts=document['counts'],
                                 plane_height=document['plane_height'],
                                 mask=mask)
    except (KeyError, TypeError) as exception:
        raise InputDataError('Grid document {} is incomplete.'.format(path)) from exception
    _check_grid_id(path, document, grid.grid_id)
    return grid


def save_measurement_grid(grid: MeasurementGrid, path: str) -> Dict[str, Any]:
    document = grid.to_dict()
    document['grid_id'] = grid.grid_id
    return write_document(path, document)


def load_measurement_grid(path: str) -> MeasurementGrid:
    document = read_document(path, type_=MEASUREMENT_GRID_TYPE)
    try:
        weights = document['weights_kind']
        if weights == 'custom':
            weights = np.array(document['weights'], dtype=np.float64)
        grid = build_measurement_grid(origin=document['origin'],
                                      spacing=document['spacing'],
                                      counts=document['counts'],
                                      plane_height=document['plane_height'],
                                      weights=weights)
    except (KeyError, TypeError) as exception:
        raise InputDataError('Grid document {} is incomplete.'.format(path)) from exception
    _check_grid_id(path, document, grid.grid_id)
    return grid


def save_certificate(certificate: Certificate, path: str, extra: Dict[str, Any] = None) -> Dict[str, Any]:
    document: Dict[str, Any] = {
        'type': CERTIFICATE_TYPE,
        'summary': certificate.summary(),
        'lambda': certificate.lam,
        'tol': certificate.tol,
        'support': [int(site) for site in certificate.support],
        'support_moments': [[float(c) for c in moment] for moment in certificate.support_moments],
        'site_values': [[float(c) for c in value] for value in certificate.site_values],
    }
    if extra:
        document.update(extra)
    return write_document(path, document)


def load_certificate(path: str) -> Certificate:
    document = read_document(path, type_=CERTIFICATE_TYPE)
    try:
        return Certificate(site_values=np.array(document['site_values'], dtype=np.float64).reshape(-1, 3),
                           lam=document['lambda'],
                           tol=document['tol'],
                           support=np.array(document['support'], dtype=np.int64),
                           support_moments=np.array(document['support_moments'], dtype=np.float64).reshape(-1, 3))
    except (KeyError, TypeError, ValueError) as exception:
        raise InputDataError('Certificate document {} is incomplete.'.format(path)) from exception
