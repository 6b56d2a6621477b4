# -*- coding: utf-8 -*-
import os
from typing import List

# No public API
__all__: List[str] = []

_STATIC_VERSION = '0.3.0'


def get_version() -> str:
    version_override = os.getenv('MAGREC_VERSION_OVERRIDE', None)
    if version_override:
        return version_override
    return _STATIC_VERSION


__version__ = get_version()
