#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""Grey scale PGM rasters of |m| for visual inspection. Nothing read back from here enters a metric."""
from typing import Any, Dict

import numpy as np
from scipy import ndimage

from magrec.io.base import write_with_metadata
from magrec.measures import DiscreteMagnetization

RASTER_TYPE = 'magnitude-raster'

# 3 x 3 cross
_SMOOTHING_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 0.0]], dtype=np.float64)
_MAXVAL = 255


def magnitude_raster(mu: DiscreteMagnetization, smooth: bool = True) -> np.ndarray:
    """|m| on the (ny, nx) source lattice, zero on empty and unmasked cells."""
    nx, ny = mu.grid.counts
    raster = np.zeros((ny, nx), dtype=np.float64)
    raster[mu.grid.site_iy[mu.sites], mu.grid.site_ix[mu.sites]] = mu.norms()
    if smooth:
        raster = ndimage.convolve(raster, _SMOOTHING_KERNEL, mode='constant', cval=0.0)
    return raster


def save_magnitude_raster(mu: DiscreteMagnetization, path: str, smooth: bool = True) -> Dict[str, Any]:
    raster = magnitude_raster(mu, smooth)
    peak = float(raster.max())
    if peak > 0:
        pixels = np.rint(raster / peak * _MAXVAL).astype(np.uint8)
    else:
        pixels = np.zeros(raster.shape, dtype=np.uint8)
    height, width = pixels.shape
    data = 'P5\n{} {}\n{}\n'.format(width, height, _MAXVAL).encode('ascii') + pixels.tobytes()
    return write_with_metadata(path, data, type_=RASTER_TYPE, extra={'peak': peak, 'smooth': smooth})
