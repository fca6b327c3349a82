#!/usr/bin/env python3
"""
kappa.py - Lower-bound constant of the Riccati inequality

kappa(Omega) = (1/2pi) inf over pairs (r, z), (rb, zb) in Omega of
G = A_r(r, rb, z + zb) / (r rb^2), the positive image kernel that makes
dQ/dt >= kappa Q^2. G is symmetric in the pair and continuous on compact
supports away from r = 0 and z = 0, so a pair search on a lattice converges.

Search: boundary cells plus a strided interior lattice for each stride of the
schedule, exhaustive over ordered pairs, then coordinate descent from the
final argmin inside the support cells. The result is an estimate of the
infimum, not a certified bound.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from axifield import AxiScalarField, SupportRegion, support_region
from quadrature import PhiQuadRule, g_kernel
from utils.errors import KappaDomainError, NumericalConsistencyError
from utils.parallel import chunked_map

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
PAIR_BUDGET = 2_000_000
# Regions with a cell centre closer than this many cells to r = 0 or z = 0 are rejected
DOMAIN_CELLS = 1.0

Point = Tuple[float, float]


@dataclass
class KappaEstimate:
    """Estimated kappa with its minimizing pair and refinement history"""
    value: float
    argmin: Tuple[Point, Point]
    resolution: Tuple[float, float]
    history: List[Tuple[int, float]] = field(default_factory=list)
    safety: float = 1.0
    descent_gain: float = 0.0
    sample_sizes: List[int] = field(default_factory=list)

    @property
    def conservative(self) -> float:
        """value times the safety factor"""
        return self.value * self.safety

    def history_deltas(self) -> List[float]:
        values = [v for _, v in self.history]
        return [abs(b - a) for a, b in zip(values[:-1], values[1:])]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "conservative": self.conservative,
            "safety": self.safety,
            "argmin": [list(self.argmin[0]), list(self.argmin[1])],
            "resolution": list(self.resolution),
            "history": [{"stride": s, "value": v} for s, v in self.history],
            "descent_gain": self.descent_gain,
            "sample_sizes": list(self.sample_sizes),
        }


def sample_indices(region: SupportRegion, stride: int) -> np.ndarray:
    """Boundary cells plus interior cells on a stride lattice, lexicographic"""
    mask = np.zeros(region.grid.shape, dtype=bool)
    boundary = region.boundary_indices()
    mask[boundary[:, 0], boundary[:, 1]] = True
    idx = region.indices
    on_lattice = (idx[:, 0] % stride == 0) & (idx[:, 1] % stride == 0)
    mask[idx[on_lattice, 0], idx[on_lattice, 1]] = True
    return np.argwhere(mask)


def pair_minimum(points: np.ndarray, rule: PhiQuadRule) -> Tuple[float, int, int]:
    """min over ordered pairs of G, ties broken by the smallest (p, q) index"""
    r = points[:, 0]
    z = points[:, 1]
    m = points.shape[0]
    chunk = max(1, PAIR_BUDGET // (m * rule.size))

    def work(start: int, stop: int):
        g = g_kernel(r[start:stop, None], z[start:stop, None], r[None, :], z[None, :], rule)
        flat = int(np.argmin(g))
        p, q = divmod(flat, m)
        return float(g[p, q]), start + p, q, bool(np.all(np.isfinite(g)) and np.all(g > 0))

    best: Optional[Tuple[float, int, int]] = None
    for value, p, q, healthy in chunked_map(work, m, chunk):
        if not healthy:
            raise NumericalConsistencyError("G kernel not positive and finite on the sample")
        # chunks arrive in row order, so strict < keeps the lexicographic tie-break
        if best is None or value < best[0]:
            best = (value, p, q)
    return best


def _descend(region: SupportRegion, rule: PhiQuadRule, start: np.ndarray, start_value: float,
             levels: int = 6, max_moves: int = 200) -> Tuple[np.ndarray, float]:
    """Coordinate descent on (r, z, rb, zb) with halving steps, both points kept in the support"""
    g = region.grid
    x = start.astype(float).copy()
    best = start_value
    steps = np.array([g.dr, g.dz, g.dr, g.dz]) * 0.5

    def inside(y: np.ndarray) -> bool:
        return region.contains(y[0], y[1]) and region.contains(y[2], y[3])

    def evaluate(y: np.ndarray) -> float:
        return float(g_kernel(y[0], y[1], y[2], y[3], rule))

    for _ in range(levels):
        moves = 0
        improved = True
        while improved and moves < max_moves:
            improved = False
            for axis in range(4):
                for sign in (-1.0, 1.0):
                    y = x.copy()
                    y[axis] += sign * steps[axis]
                    if not inside(y):
                        continue
                    value = evaluate(y)
                    if value < best:
                        x, best = y, value
                        improved = True
                        moves += 1
        steps *= 0.5
    return x, best


def estimate_kappa(region: SupportRegion, rule: PhiQuadRule,
                   schedule: Sequence[int] = (8, 4, 2, 1), safety: float = 1.0,
                   descend: bool = True) -> KappaEstimate:
    """Estimate kappa on a support region over a coarse-to-fine stride schedule"""
    if region.cell_count == 0:
        raise KappaDomainError("kappa needs a nonempty region")
    g = region.grid
    r_lo, _, z_lo, _ = region.bounding_box
    if r_lo < DOMAIN_CELLS * g.dr or z_lo < DOMAIN_CELLS * g.dz:
        raise KappaDomainError("kappa degenerates: region touches the axis or the plane z = 0",
                               r_lo=r_lo, z_lo=z_lo)

    history: List[Tuple[int, float]] = []
    sizes: List[int] = []
    best_pair = None
    best_value = np.inf
    for stride in schedule:
        idx = sample_indices(region, int(stride))
        points = np.column_stack([g.r[idx[:, 0]], g.z[idx[:, 1]]])
        value, p, q = pair_minimum(points, rule)
        history.append((int(stride), value / TWO_PI))
        sizes.append(int(points.shape[0]))
        if value < best_value:
            best_value = value
            best_pair = np.concatenate([points[p], points[q]])
        logger.debug(f"kappa stride {stride}: {points.shape[0]} samples, kappa={value / TWO_PI:.10g}")

    lattice_value = best_value
    if descend:
        best_pair, best_value = _descend(region, rule, best_pair, best_value)

    estimate = KappaEstimate(
        value=best_value / TWO_PI,
        argmin=((float(best_pair[0]), float(best_pair[1])), (float(best_pair[2]), float(best_pair[3]))),
        resolution=(g.dr, g.dz),
        history=history,
        safety=safety,
        descent_gain=(lattice_value - best_value) / TWO_PI,
        sample_sizes=sizes,
    )
    if estimate.value <= 0:
        raise NumericalConsistencyError("kappa estimate is not positive", value=estimate.value)
    logger.info(f"kappa = {estimate.value:.10g} (conservative {estimate.conservative:.10g}) "
                f"at {estimate.argmin}")
    return estimate


def kappa_of_field(scalar: AxiScalarField, threshold: float, rule: PhiQuadRule,
                   schedule: Sequence[int] = (8, 4, 2, 1), safety: float = 1.0,
                   descend: bool = True) -> KappaEstimate:
    """estimate_kappa on the support of a field at an absolute threshold"""
    return estimate_kappa(support_region(scalar, threshold), rule, schedule, safety, descend)
