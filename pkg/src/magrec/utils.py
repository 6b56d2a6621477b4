#!/usr/bin/env python
# -*- encoding: utf-8 -*-
import json
import math
from typing import Any, List, Union

import setproctitle
from Crypto.Hash import SHA256
from dateutil.relativedelta import relativedelta

from magrec.exception import UsageError
from magrec.logging import logger

_CHUNK_SIZE = 1024 * 1024


def data_checksum(data: bytes) -> str:
    return SHA256.new(data=data).hexdigest()


def file_checksum(path: str) -> str:
    hash = SHA256.new()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(_CHUNK_SIZE), b''):
            hash.update(chunk)
    return hash.hexdigest()


def canonical_json(document: Any) -> str:
    # Stable key ordering so that checksums over JSON documents are reproducible
    return json.dumps(document, sort_keys=True, separators=(',', ':'), ensure_ascii=False, allow_nan=False)


def geometric_schedule(start: float, stop: float, count: int) -> List[float]:
    """Strictly decreasing geometric sequence from ``start`` down to ``stop`` (both included)."""
    if count < 1:
        raise UsageError('A schedule needs at least one value.')
    if not (start > 0 and stop > 0):
        raise UsageError('Schedule bounds must be positive.')
    if count == 1:
        return [float(start)]
    if not start > stop:
        raise UsageError('Schedule must be decreasing, got start {} and stop {}.'.format(start, stop))
    ratio = math.log(stop / start) / (count - 1)
    schedule = [start * math.exp(ratio * i) for i in range(count)]
    schedule[-1] = float(stop)
    return schedule


def format_lambda(lam: float) -> str:
    return '{:.3e}'.format(lam)


class PrettyPrint:
    # Based on https://code.activestate.com/recipes/578113-human-readable-format-for-a-given-time-delta/
    @staticmethod
    def duration(duration: Union[int, float]) -> str:
        delta = relativedelta(seconds=int(round(duration)))
        attrs = ['years', 'months', 'days', 'hours', 'minutes', 'seconds']
        readable = []
        for attr in attrs:
            if getattr(delta, attr) or attr == attrs[-1]:
                readable.append('{:02}{}'.format(getattr(delta, attr), attr[:1]))
        return ' '.join(readable)


class ProgressReporting:

    def __init__(self, process_name: str) -> None:
        self._process_name = process_name
        self._old_proctitle = ''
        self.reset()

    def _setproctitle(self, proctitle: str = '') -> None:
        if proctitle:
            new_proctitle = '{} [{}]'.format(self._process_name, proctitle)
        else:
            new_proctitle = self._process_name

        if self._old_proctitle != new_proctitle:
            self._old_proctitle = new_proctitle
            setproctitle.setproctitle(new_proctitle)

    def reset(self) -> None:
        self._setproctitle()

    def task(self, task: str) -> None:
        logger.info(task)
        self._setproctitle(task)

    def task_with_lambda(self, task: str, *, lam: float, done: int, count: int) -> None:
        message = '{} {}/{} (lambda {})'.format(task, done, count, format_lambda(lam))
        logger.info(message)
        self._setproctitle(message)
