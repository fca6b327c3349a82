#!/usr/bin/env python3
"""
axifield.py - Meridian half-plane grids and fields

Grids, azimuthal vorticity fields on the upper half of the meridian plane,
the colliding ring-pair initial datum, the functional Q and the geometry
validators. Only the upper half-plane is stored; every field is understood
as its odd extension in z.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Any

import numpy as np
from scipy import integrate

from utils.errors import ConfigError, EmptySupportError, GeometryError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AxiGrid:
    """Cell-centred rectangle [r_min, r_max] x [z_min, z_max] of the meridian plane"""
    r_min: float
    r_max: float
    z_min: float
    z_max: float
    n_r: int
    n_z: int

    def __post_init__(self):
        if self.n_r < 2 or self.n_z < 2:
            raise GeometryError("grid needs n_r, n_z >= 2", n_r=self.n_r, n_z=self.n_z)
        if not (self.r_max > self.r_min and self.z_max > self.z_min):
            raise GeometryError("grid spacings must be positive",
                                r_min=self.r_min, r_max=self.r_max,
                                z_min=self.z_min, z_max=self.z_max)
        if self.r_min < 0 or self.z_min < 0:
            raise GeometryError("grid must lie in the quadrant r >= 0, z >= 0",
                                r_min=self.r_min, z_min=self.z_min)

    @property
    def dr(self) -> float:
        return (self.r_max - self.r_min) / self.n_r

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / self.n_z

    @property
    def cell_area(self) -> float:
        return self.dr * self.dz

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_r, self.n_z)

    @property
    def r(self) -> np.ndarray:
        """Cell-centre radii"""
        return self.r_min + (np.arange(self.n_r) + 0.5) * self.dr

    @property
    def z(self) -> np.ndarray:
        """Cell-centre heights"""
        return self.z_min + (np.arange(self.n_z) + 0.5) * self.dz

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """(R, Z) arrays of shape n_r x n_z"""
        return np.meshgrid(self.r, self.z, indexing="ij")

    def half_diagonal(self) -> float:
        """Default regularization length: half a cell diagonal"""
        return 0.5 * float(np.hypot(self.dr, self.dz))

    def carries_ivse_support(self) -> bool:
        """IVSE data needs the rectangle away from the axis and the plane"""
        return self.r_min > 0 and self.z_min > 0

    def refined(self, factor: int = 2) -> "AxiGrid":
        """Same rectangle with factor times more cells per axis"""
        return AxiGrid(self.r_min, self.r_max, self.z_min, self.z_max,
                       self.n_r * factor, self.n_z * factor)

    def to_dict(self) -> Dict[str, Any]:
        return {"r_min": self.r_min, "r_max": self.r_max, "z_min": self.z_min,
                "z_max": self.z_max, "n_r": self.n_r, "n_z": self.n_z}


@dataclass(frozen=True)
class AxiScalarField:
    """Samples of omega_theta (or any scalar) on an AxiGrid; read-only after construction"""
    grid: AxiGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.shape != self.grid.shape:
            raise GeometryError("field shape does not match grid",
                                shape=values.shape, grid_shape=self.grid.shape)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "AxiScalarField":
        return AxiScalarField(self.grid, values)

    def scaled(self, factor: float) -> "AxiScalarField":
        return AxiScalarField(self.grid, factor * self.values)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True)
class AxiVelocity:
    """Meridian velocity (u_r, u_z) collocated with the vorticity grid"""
    grid: AxiGrid
    u_r: np.ndarray
    u_z: np.ndarray

    def radial(self) -> AxiScalarField:
        return AxiScalarField(self.grid, self.u_r)

    def axial(self) -> AxiScalarField:
        return AxiScalarField(self.grid, self.u_z)


@dataclass
class SupportRegion:
    """Cells where |omega_theta| exceeds a threshold, plus their bounding box"""
    grid: AxiGrid
    indices: np.ndarray            # (k, 2) integer array of (i, j), lexicographic
    threshold: float
    bounding_box: Tuple[float, float, float, float]  # cell centres: r_lo, r_hi, z_lo, z_hi

    @property
    def cell_count(self) -> int:
        return int(self.indices.shape[0])

    def mask(self) -> np.ndarray:
        out = np.zeros(self.grid.shape, dtype=bool)
        out[self.indices[:, 0], self.indices[:, 1]] = True
        return out

    def points(self) -> np.ndarray:
        """(k, 2) array of cell-centre coordinates (r, z)"""
        return np.column_stack([self.grid.r[self.indices[:, 0]],
                                self.grid.z[self.indices[:, 1]]])

    def boundary_indices(self) -> np.ndarray:
        """Support cells with at least one 4-neighbour outside the support"""
        m = self.mask()
        padded = np.pad(m, 1, constant_values=False)
        interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] &
                    padded[1:-1, :-2] & padded[1:-1, 2:])
        edge = m & ~interior
        return np.argwhere(edge)

    def contains(self, r: float, z: float) -> bool:
        """True when (r, z) lies in a closed support cell"""
        g = self.grid
        i = int(np.floor((r - g.r_min) / g.dr))
        j = int(np.floor((z - g.z_min) / g.dz))
        # points on the far edge belong to the last cell
        if np.isclose(r, g.r_max):
            i = g.n_r - 1
        if np.isclose(z, g.z_max):
            j = g.n_z - 1
        if not (0 <= i < g.n_r and 0 <= j < g.n_z):
            return False
        return bool(self.mask()[i, j])

    def aspect_ratio(self) -> float:
        """Radial over axial extent of the bounding box (cell edges included)"""
        r_lo, r_hi, z_lo, z_hi = self.bounding_box
        width = r_hi - r_lo + self.grid.dr
        height = z_hi - z_lo + self.grid.dz
        return width / height

    def to_dict(self) -> Dict[str, Any]:
        return {"cells": self.cell_count, "threshold": self.threshold,
                "bounding_box": list(self.bounding_box)}


@dataclass
class GeometryReport:
    """Sign and boundary diagnostics of a stored half-plane field"""
    max_positive: float
    max_positive_index: Optional[Tuple[int, int]]
    positive_indices: List[Tuple[int, int]]
    boundary_max_abs: float
    support_box: Optional[Tuple[float, float, float, float]]
    finite: bool

    @property
    def sign_ok(self) -> bool:
        return self.max_positive <= 0.0

    @property
    def boundary_ok(self) -> bool:
        return self.boundary_max_abs == 0.0

    @property
    def passed(self) -> bool:
        return self.sign_ok and self.boundary_ok and self.finite

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_positive": self.max_positive,
            "max_positive_index": list(self.max_positive_index) if self.max_positive_index else None,
            "sign_violations": len(self.positive_indices),
            "boundary_max_abs": self.boundary_max_abs,
            "support_box": list(self.support_box) if self.support_box else None,
            "finite": self.finite,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class VortexRingPair:
    """Smooth compactly supported ring datum: amplitude * exp(-1/(1-q)) inside the ellipse"""
    center: Tuple[float, float]
    radii: Tuple[float, float]
    amplitude: float

    def quadratic_form(self, r: np.ndarray, z: np.ndarray) -> np.ndarray:
        r_c, z_c = self.center
        rho_r, rho_z = self.radii
        return ((r - r_c) / rho_r) ** 2 + ((z - z_c) / rho_z) ** 2

    def upper(self, r, z) -> np.ndarray:
        """Bump restricted to the upper half-plane"""
        q = self.quadratic_form(np.asarray(r, dtype=float), np.asarray(z, dtype=float))
        inside = q < 1.0
        safe = np.where(inside, 1.0 - q, 1.0)
        return np.where(inside, self.amplitude * np.exp(-1.0 / safe), 0.0)

    def __call__(self, r, z) -> np.ndarray:
        """Odd extension in z"""
        z = np.asarray(z, dtype=float)
        return np.sign(z) * self.upper(r, np.abs(z))

    def exact_Q(self) -> float:
        """-int int r^2 omega dr dz by adaptive quadrature over the ellipse"""
        if self.amplitude == 0.0:
            return 0.0
        r_c, z_c = self.center
        rho_r, rho_z = self.radii

        def z_half(r):
            x = 1.0 - ((r - r_c) / rho_r) ** 2
            return rho_z * np.sqrt(max(x, 0.0))

        value, _ = integrate.dblquad(
            lambda z, r: -r * r * float(self.upper(r, z)),
            r_c - rho_r, r_c + rho_r,
            lambda r: z_c - z_half(r), lambda r: z_c + z_half(r),
            epsabs=1e-13, epsrel=1e-11,
        )
        return value


def make_vortex_ring_pair(center: Tuple[float, float], radii: Tuple[float, float],
                          amplitude: float, grid: AxiGrid) -> AxiScalarField:
    """Sample the ring-pair bump on the grid after checking its geometry"""
    r_c, z_c = center
    rho_r, rho_z = radii
    if amplitude > 0:
        raise ConfigError("amplitude", "must be nonpositive (omega_theta <= 0 on the upper half-plane)")
    if rho_r <= 0 or rho_z <= 0:
        raise ConfigError("radius_r/radius_z", "must be positive")
    if r_c - rho_r <= 0:
        raise ConfigError("center_r - radius_r", "support must stay away from the axis r = 0")
    if z_c - rho_z <= 0:
        raise ConfigError("center_z - radius_z", "support must stay away from the plane z = 0")
    if r_c - rho_r <= grid.r_min or r_c + rho_r >= grid.r_max:
        raise ConfigError("center_r +- radius_r", f"ellipse must lie strictly inside [{grid.r_min}, {grid.r_max}]")
    if z_c - rho_z <= grid.z_min or z_c + rho_z >= grid.z_max:
        raise ConfigError("center_z +- radius_z", f"ellipse must lie strictly inside [{grid.z_min}, {grid.z_max}]")

    profile = VortexRingPair(center=(r_c, z_c), radii=(rho_r, rho_z), amplitude=amplitude)
    R, Z = grid.mesh()
    return AxiScalarField(grid, profile.upper(R, Z))


def functional_Q(field: AxiScalarField) -> float:
    """Q = -sum r_i^2 omega(r_i, z_j) dr dz (composite midpoint rule)"""
    g = field.grid
    weights = (g.r ** 2)[:, None] * g.cell_area
    return float(-np.sum(weights * field.values))


def validate_geometry(field: AxiScalarField) -> GeometryReport:
    """Sign, boundary-support and finiteness diagnostics"""
    v = field.values
    finite = bool(np.all(np.isfinite(v)))
    positive = np.argwhere(v > 0)
    positive_indices = [tuple(int(x) for x in idx) for idx in positive]
    if positive.size:
        flat = int(np.argmax(v))
        max_index = tuple(int(x) for x in np.unravel_index(flat, v.shape))
        max_positive = float(v[max_index])
    else:
        max_index = None
        max_positive = 0.0

    boundary = np.concatenate([v[0, :], v[-1, :], v[:, 0], v[:, -1]])
    boundary_max = float(np.max(np.abs(boundary))) if boundary.size else 0.0

    nonzero = np.argwhere(v != 0)
    box = _bounding_box(field.grid, nonzero) if nonzero.size else None

    report = GeometryReport(max_positive=max_positive, max_positive_index=max_index,
                            positive_indices=positive_indices, boundary_max_abs=boundary_max,
                            support_box=box, finite=finite)
    if not report.passed:
        logger.debug(f"Geometry check failed: {report.to_dict()}")
    return report


def support_region(field: AxiScalarField, threshold: float) -> SupportRegion:
    """Cells with |value| > threshold, in lexicographic (i, j) order"""
    if threshold < 0:
        raise ConfigError("threshold", "must be nonnegative")
    indices = np.argwhere(np.abs(field.values) > threshold)
    if indices.size == 0:
        raise EmptySupportError(f"support is empty at threshold {threshold:g}",
                                threshold=threshold, sup_norm=field.sup_norm())
    return SupportRegion(grid=field.grid, indices=indices, threshold=threshold,
                         bounding_box=_bounding_box(field.grid, indices))


def relative_support(field: AxiScalarField, relative: float) -> SupportRegion:
    """Support thresholded at a fraction of the current sup-norm"""
    return support_region(field, relative * field.sup_norm())


def _bounding_box(grid: AxiGrid, indices: np.ndarray) -> Tuple[float, float, float, float]:
    r = grid.r[indices[:, 0]]
    z = grid.z[indices[:, 1]]
    return (float(r.min()), float(r.max()), float(z.min()), float(z.max()))
