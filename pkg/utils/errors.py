#!/usr/bin/env python3
"""
utils/errors.py - Exception hierarchy

All failures raised by the laboratory derive from VortexLabError so the
command line layer can turn them into structured error documents.
"""

from typing import Any, Dict, Optional


class VortexLabError(Exception):
    """Base class for every laboratory error"""

    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        """Structured form used in error JSON"""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": {key: _jsonable(value) for key, value in self.details.items()},
        }


class ConfigError(VortexLabError):
    """Invalid configuration key, type or constraint"""

    exit_code = 2

    def __init__(self, key: str, constraint: str):
        super().__init__(f"config key '{key}': {constraint}", key=key, constraint=constraint)
        self.key = key
        self.constraint = constraint


class GeometryError(VortexLabError):
    """Grid or initial datum violates a geometric precondition"""


class EmptySupportError(VortexLabError):
    """Thresholded support is empty, downstream kappa is undefined"""


class SingularEvaluationError(VortexLabError):
    """Kernel evaluated at coincident points without regularization"""


class NumericalConsistencyError(VortexLabError):
    """A quantity that must be positive or finite is not"""


class KappaDomainError(VortexLabError):
    """Support touches the axis or the symmetry plane"""


class SpectralDomainError(VortexLabError):
    """Spectral oracle precondition failed"""


class BlowupImminent(VortexLabError):
    """Exponential growth factor overflowed during a step"""


class CFLViolation(VortexLabError):
    """Advective Courant number above one"""

    def __init__(self, courant: float, limit: float = 1.0):
        super().__init__(f"Courant number {courant:.4g} exceeds {limit:g}",
                         courant=courant, limit=limit)
        self.courant = courant


class SnapshotFormatError(VortexLabError):
    """Snapshot payload or sidecar does not match its header"""


def _jsonable(value: Any) -> Optional[Any]:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)
