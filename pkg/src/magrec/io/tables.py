#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""CSV interchange for fields and magnetizations.

Floats are written with 17 significant digits so that every finite double survives a round trip exactly.
Field coordinates are checked against the grid on load, magnetization rows are snapped to the nearest site.
"""
import csv
import io
import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from magrec.exception import InputDataError, NonFiniteError, SchemaError, SupportMismatchError
from magrec.fields import FieldData
from magrec.geometry import DipoleGrid, MeasurementGrid
from magrec.io.base import read_with_metadata, write_with_metadata
from magrec.logging import logger
from magrec.measures import DiscreteMagnetization

FIELD_TYPE = 'field'
MAGNETIZATION_TYPE = 'magnetization'

FIELD_COLUMNS = ['x', 'y', 'z', 'b']
MAGNETIZATION_COLUMNS = ['x', 'y', 'z', 'mx', 'my', 'mz']

_GRID_ID_KEY = 'grid_id'

# Relative to the smaller lattice spacing
SNAP_TOLERANCE = 1e-9


def format_float(value: float) -> str:
    return '{:.17g}'.format(value)


def _encode(header: Sequence[str], rows: List[List[str]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue().encode('utf-8')


def _check_header(path: str, header: Sequence[str], expected: Sequence[str]) -> None:
    if list(header) == list(expected):
        return
    missing = [column for column in expected if column not in header]
    unexpected = [column for column in header if column not in expected]
    report = ['expected columns {}'.format(','.join(expected)), 'got {}'.format(','.join(header))]
    if missing:
        report.append('missing: {}'.format(','.join(missing)))
    if unexpected:
        report.append('unexpected: {}'.format(','.join(unexpected)))
    if not missing and not unexpected:
        report.append('columns are out of order')
    raise SchemaError('Schema mismatch in {}: {}.'.format(path, '; '.join(report)))


def _decode(path: str, data: bytes, expected: Sequence[str], rows: int) -> List[List[str]]:
    try:
        reader = csv.reader(io.StringIO(data.decode('utf-8')))
        header = next(reader, None)
        records = list(reader)
    except (UnicodeDecodeError, csv.Error) as exception:
        raise InputDataError('File {} is not a valid CSV file.'.format(path)) from exception
    if header is None:
        raise SchemaError('Schema mismatch in {}: file has no header.'.format(path))
    _check_header(path, header, expected)
    if len(records) != rows:
        raise InputDataError('File {} has {} rows, expected {}.'.format(path, len(records), rows))
    for line, record in enumerate(records, start=2):
        if len(record) != len(expected):
            raise SchemaError('Schema mismatch in {}: line {} has {} columns, expected {}.'.format(
                path, line, len(record), len(expected)))
    return records


def _parse_floats(path: str, records: List[List[str]], columns: slice) -> np.ndarray:
    try:
        values = np.array([[float(cell) for cell in record[columns]] for record in records], dtype=np.float64)
    except ValueError as exception:
        raise InputDataError('File {} contains a malformed number.'.format(path)) from exception
    if not np.all(np.isfinite(values)):
        raise NonFiniteError('File {} contains non-finite values.'.format(path))
    return values.reshape(len(records), -1)


def _snap_tolerance(spacing: Sequence[float]) -> float:
    return SNAP_TOLERANCE * min(spacing)


def save_field(f: FieldData, path: str, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    points = f.grid.points()
    rows = [[format_float(c) for c in points[index]] + [format_float(f.values[index])]
            for index in range(f.grid.n_points)]
    metadata = dict(extra) if extra else {}
    metadata[_GRID_ID_KEY] = f.grid.grid_id
    return write_with_metadata(path, _encode(FIELD_COLUMNS, rows), type_=FIELD_TYPE, rows=len(rows), extra=metadata)


def load_field(path: str, grid: MeasurementGrid) -> FieldData:
    """Rows must follow the grid's point order, quadrature weights come from the grid."""
    data, metadata = read_with_metadata(path, type_=FIELD_TYPE)
    if metadata.get(_GRID_ID_KEY) != grid.grid_id:
        raise InputDataError('Field {} belongs to grid {}, expected {}.'.format(path, metadata.get(_GRID_ID_KEY),
                                                                               grid.grid_id))
    records = _decode(path, data, FIELD_COLUMNS, grid.n_points)
    numbers = _parse_floats(path, records, slice(0, 4))
    offsets = np.sqrt(np.sum((numbers[:, 0:3] - grid.points())**2, axis=1))
    if offsets.size and offsets.max() > _snap_tolerance(grid.spacing):
        line = int(np.argmax(offsets)) + 2
        raise InputDataError('Field {} line {} does not match point {} of grid {}.'.format(
            path, line, line - 2, grid.grid_id))
    logger.debug('Loaded field {} with {} points.'.format(path, grid.n_points))
    return FieldData(grid=grid, values=numbers[:, 3])


def save_magnetization(mu: DiscreteMagnetization, path: str, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    positions = mu.positions()
    rows = [[format_float(c) for c in positions[entry]] + [format_float(c) for c in mu.moments[entry]]
            for entry in range(mu.n_entries)]
    metadata = dict(extra) if extra else {}
    metadata[_GRID_ID_KEY] = mu.grid.grid_id
    return write_with_metadata(path,
                               _encode(MAGNETIZATION_COLUMNS, rows),
                               type_=MAGNETIZATION_TYPE,
                               rows=len(rows),
                               extra=metadata)


def load_magnetization(path: str, grid: DipoleGrid) -> DiscreteMagnetization:
    """Snaps every row to the nearest site of ``grid``.

    A row further than ``SNAP_TOLERANCE`` times the smaller lattice spacing from any masked site raises
    :class:`SupportMismatchError`.
    """
    data, metadata = read_with_metadata(path, type_=MAGNETIZATION_TYPE)
    records = _decode(path, data, MAGNETIZATION_COLUMNS, metadata.get('rows', 0))
    if not records:
        return DiscreteMagnetization.zeros(grid)
    numbers = _parse_floats(path, records, slice(0, 6))
    tolerance = _snap_tolerance(grid.spacing)
    sites = np.empty(len(records), dtype=np.int64)
    for entry, point in enumerate(numbers[:, 0:3]):
        site, distance = grid.nearest_site(point)
        if site < 0 or distance > tolerance:
            raise SupportMismatchError('support mismatch: line {} of {} at ({}) is not a site of grid {}.'.format(
                entry + 2, path, ', '.join(format_float(c) for c in point), grid.grid_id))
        sites[entry] = site
    if np.unique(sites).shape[0] != sites.shape[0]:
        raise SupportMismatchError('support mismatch: several rows of {} snap to the same site.'.format(path))
    logger.debug('Loaded magnetization {} with {} entries.'.format(path, len(records)))
    return DiscreteMagnetization.from_entries(grid, sites, numbers[:, 3:6])


def write_table(path: str, header: Sequence[str], rows: Sequence[Sequence[Any]], *, type_: str) -> Dict[str, Any]:
    """Generic numeric table, floats at full precision, None as an empty cell."""

    def cell(value: Any) -> str:
        if value is None:
            return ''
        if isinstance(value, bool):
            return 'true' if value else 'false'
        if isinstance(value, float):
            if not math.isfinite(value):
                raise NonFiniteError('Table {} would contain a non-finite value.'.format(path))
            return format_float(value)
        return str(value)

    encoded_rows = [[cell(value) for value in row] for row in rows]
    return write_with_metadata(path, _encode(header, encoded_rows), type_=type_, rows=len(encoded_rows))


def read_table(path: str, *, type_: str) -> List[Dict[str, str]]:
    data, metadata = read_with_metadata(path, type_=type_)
    reader = csv.DictReader(io.StringIO(data.decode('utf-8')))
    rows = list(reader)
    if len(rows) != metadata.get('rows', len(rows)):
        raise InputDataError('Table {} has {} rows, expected {}.'.format(path, len(rows), metadata['rows']))
    return rows
