#!/usr/bin/env python
# -*- encoding: utf-8 -*-
"""SplitMix64 random streams.

All scenario generators draw from this generator so that a seed fully determines their output on every
platform. Constants are the ones published with the original algorithm.
"""
import math

import numpy as np

from magrec.exception import UsageError
from magrec.repr import ReprMixIn

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB

_TWO_POW_MINUS_53 = 2.0**-53
_UNIT_VECTOR_BATCH = 64


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over='ignore'):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_2)
        return z ^ (z >> np.uint64(31))


class SplitMix64(ReprMixIn):

    def __init__(self, seed: int) -> None:
        if seed < 0:
            raise UsageError('Seed must be non-negative, got {}.'.format(seed))
        self._state = int(seed) & MASK64

    @property
    def state(self) -> int:
        return self._state

    def next_uint64(self, count: int) -> np.ndarray:
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over='ignore'):
            z = np.uint64(self._state) + steps * np.uint64(GAMMA)
        self._state = (self._state + count * GAMMA) & MASK64
        return _mix64(z)

    def uniform(self, count: int) -> np.ndarray:
        """Doubles in [0, 1) built from the top 53 bits of each output."""
        return (self.next_uint64(count) >> np.uint64(11)).astype(np.float64) * _TWO_POW_MINUS_53

    def integers(self, high: int, count: int) -> np.ndarray:
        if high < 1:
            raise UsageError('Upper bound must be positive, got {}.'.format(high))
        values = np.floor(self.uniform(count) * high).astype(np.int64)
        return np.minimum(values, high - 1)

    def normal(self, count: int) -> np.ndarray:
        # Box-Muller on pairs, first uniform shifted into (0, 1]
        pairs = (count + 1) // 2
        uniforms = self.uniform(2 * pairs).reshape(pairs, 2)
        radius = np.sqrt(-2.0 * np.log(1.0 - uniforms[:, 0]))
        angle = 2.0 * math.pi * uniforms[:, 1]
        values = np.empty((pairs, 2), dtype=np.float64)
        values[:, 0] = radius * np.cos(angle)
        values[:, 1] = radius * np.sin(angle)
        return values.ravel()[:count]

    def unit_vectors(self, count: int) -> np.ndarray:
        """Uniformly distributed directions by rejection from the cube.

        Only correctly rounded operations are involved, so the vectors are identical on every platform.
        """
        accepted = []
        missing = count
        while missing > 0:
            candidates = 2.0 * self.uniform(3 * _UNIT_VECTOR_BATCH).reshape(_UNIT_VECTOR_BATCH, 3) - 1.0
            squared = candidates[:, 0] * candidates[:, 0] + candidates[:, 1] * candidates[:, 1] + \
                candidates[:, 2] * candidates[:, 2]
            keep = candidates[(squared > 1e-12) & (squared <= 1.0)][:missing]
            keep_squared = squared[(squared > 1e-12) & (squared <= 1.0)][:missing]
            accepted.append(keep / np.sqrt(keep_squared)[:, None])
            missing -= keep.shape[0]
        if not accepted:
            return np.empty((0, 3), dtype=np.float64)
        return np.concatenate(accepted, axis=0)

    def spawn(self, stream: int) -> 'SplitMix64':
        """Independent child stream, the parent state is not advanced."""
        seed = int(_mix64(np.array([(self._state ^ ((stream * GAMMA) & MASK64)) & MASK64], dtype=np.uint64))[0])
        return SplitMix64(seed)
