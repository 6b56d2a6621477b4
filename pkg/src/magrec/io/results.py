#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""Binary solver results.

A result is a ``.npz`` archive written member by member with fixed timestamps and no compression, so that
equal results give byte-identical files. Scalars live in the ``.meta`` sidecar. The run time is not stored
here, it belongs to the run manifest.
"""
import io
import zipfile
from typing import Any, Dict, Optional

import numpy as np

from magrec.exception import InputDataError
from magrec.fields import FieldData, ForwardModel
from magrec.io.base import read_with_metadata, write_with_metadata
from magrec.measures import DiscreteMagnetization
from magrec.solver import SolveResult

RESULT_TYPE = 'solve-result'

_ZIP_DATE_TIME = (1980, 1, 1, 0, 0, 0)
_ARRAYS = ('sites', 'moments', 'objective_trace', 'residual')


def encode_arrays(arrays: Dict[str, np.ndarray]) -> bytes:
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, mode='w', compression=zipfile.ZIP_STORED) as archive:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(name + '.npy', date_time=_ZIP_DATE_TIME)
            info.compress_type = zipfile.ZIP_STORED
            info.create_system = 3
            info.external_attr = 0o600 << 16
            with archive.open(info, mode='w') as member:
                np.lib.format.write_array(member, np.ascontiguousarray(arrays[name]), allow_pickle=False)
    return buffer.getvalue()


def decode_arrays(data: bytes, path: str) -> Dict[str, np.ndarray]:
    try:
        with np.load(io.BytesIO(data), allow_pickle=False) as archive:
            return {name: archive[name] for name in archive.files}
    except (ValueError, OSError, zipfile.BadZipFile) as exception:
        raise InputDataError('Result {} is not a valid archive.'.format(path)) from exception


def save_result(result: SolveResult, path: str, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    arrays = {
        'sites': result.mu.sites,
        'moments': result.mu.moments,
        'objective_trace': result.objective_trace,
        'residual': result.residual.values,
    }
    metadata: Dict[str, Any] = dict(extra) if extra else {}
    metadata.update({
        'lambda': result.lam,
        'objective': result.objective,
        'iterations': result.iterations,
        'active_set_passes': result.active_set_passes,
        'converged': result.converged,
        'reason': result.reason,
        'lipschitz': result.lipschitz,
        'source_grid_id': result.mu.grid.grid_id,
        'measurement_grid_id': result.residual.grid.grid_id,
    })
    return write_with_metadata(path, encode_arrays(arrays), type_=RESULT_TYPE, rows=result.mu.n_entries, extra=metadata)


def load_result(path: str, model: ForwardModel) -> SolveResult:
    data, metadata = read_with_metadata(path, type_=RESULT_TYPE)
    if metadata.get('source_grid_id') != model.source.grid_id or \
            metadata.get('measurement_grid_id') != model.target.grid_id:
        raise InputDataError('Result {} was computed for different grids.'.format(path))
    arrays = decode_arrays(data, path)
    missing = [name for name in _ARRAYS if name not in arrays]
    if missing:
        raise InputDataError('Result {} misses arrays {}.'.format(path, ', '.join(missing)))
    return SolveResult(mu=DiscreteMagnetization(grid=model.source, sites=arrays['sites'], moments=arrays['moments']),
                       objective_trace=arrays['objective_trace'],
                       residual=FieldData(grid=model.target, values=arrays['residual']),
                       lam=float(metadata['lambda']),
                       objective=float(metadata['objective']),
                       iterations=int(metadata['iterations']),
                       active_set_passes=int(metadata['active_set_passes']),
                       converged=bool(metadata['converged']),
                       reason=str(metadata['reason']),
                       lipschitz=float(metadata['lipschitz']))
