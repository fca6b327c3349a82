#!/usr/bin/env python3
"""
utils package - Shared helpers for the vortex laboratory

Exception hierarchy, deterministic thread-pool helpers and snapshot /
artifact I/O used across the experiment modules.
"""

# Errors first (no dependencies)
from .errors import VortexLabError, ConfigError

# field_io depends on axifield, which itself imports utils.errors, so it is
# imported as utils.field_io by the modules that need it.

__all__ = [
    'VortexLabError',
    'ConfigError',
]

__version__ = '1.0.0'
