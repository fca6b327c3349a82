#!/usr/bin/env python3
"""
biot_savart_axi.py - Meridian velocity from azimuthal vorticity

Direct summation of the odd-symmetrized ring kernels over the source cells
of an upper half-plane field. Two evaluation paths compute the same sum:

  * direct: kernels evaluated per (target, source) pair, parallel over
    fixed target chunks, reduced with numpy's pairwise summation along the
    contiguous source axis;
  * KernelTable: the kernels depend on z only through z - zb (Toeplitz) and
    z + zb (Hankel image), so for a uniform grid they are tabulated once per
    (r_i, rb_k) pair and applied by zero-padded FFT convolution in z. Used by
    the time steppers, where the same grid is evaluated thousands of times.
"""

import logging
import time
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.fft

from axifield import AxiGrid, AxiScalarField, AxiVelocity
from config import AppConstants
from quadrature import PhiQuadRule, ring_axial, ring_radial
from utils.errors import GeometryError, SingularEvaluationError
from utils.parallel import chunked_map, get_thread_count

logger = logging.getLogger(__name__)

# elements of the (targets x sources x nodes) work array per chunk
CHUNK_BUDGET = 2_000_000
AXIAL_FORMS = ("plain", "statement")


def default_delta(grid: AxiGrid) -> float:
    """Half a cell diagonal"""
    return grid.half_diagonal()


def _resolve_delta(grid: AxiGrid, delta: Optional[float]) -> float:
    if delta is None:
        return default_delta(grid)
    if delta < 0:
        raise GeometryError("regularization delta must be nonnegative", delta=delta)
    return float(delta)


def _sources(scalar: AxiScalarField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Radii, heights and weights omega dA / 2pi of the nonzero cells, lexicographic"""
    g = scalar.grid
    idx = np.argwhere(scalar.values != 0)
    rs = g.r[idx[:, 0]]
    zs = g.z[idx[:, 1]]
    ws = scalar.values[idx[:, 0], idx[:, 1]] * g.cell_area / (2.0 * np.pi)
    return rs, zs, ws


def evaluate_velocity_at(scalar: AxiScalarField, r_targets: np.ndarray, z_targets: np.ndarray,
                         rule: PhiQuadRule, delta: Optional[float] = None,
                         radial: bool = True, axial: bool = True,
                         axial_form: str = "plain") -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """u_r and u_z at arbitrary targets (z < 0 allowed) by direct summation"""
    if axial_form not in AXIAL_FORMS:
        raise GeometryError(f"axial_form must be one of {AXIAL_FORMS}", axial_form=axial_form)
    delta = _resolve_delta(scalar.grid, delta)
    r_t = np.asarray(r_targets, dtype=float).ravel()
    z_t = np.asarray(z_targets, dtype=float).ravel()
    if np.any(r_t <= 0):
        raise GeometryError("targets must satisfy r > 0")

    rs, zs, ws = _sources(scalar)
    n_t = r_t.size
    u_r = np.zeros(n_t) if radial else None
    u_z = np.zeros(n_t) if axial else None
    if rs.size == 0 or n_t == 0:
        return u_r, u_z

    chunk = max(1, CHUNK_BUDGET // (rs.size * rule.size))

    def work(start: int, stop: int):
        R = r_t[start:stop, None]
        Z = z_t[start:stop, None]
        zm = Z - zs
        zp = Z + zs
        out_r = out_z = None
        if radial:
            k = ring_radial(R, rs, zm, rule, delta) - ring_radial(R, rs, zp, rule, delta)
            out_r = np.sum(k * ws, axis=1)
        if axial:
            if axial_form == "plain":
                k = ring_axial(R, rs, zm, rule, delta) - ring_axial(R, rs, zp, rule, delta)
            else:
                k = zm * ring_axial(R, rs, zm, rule, delta) - zp * ring_axial(R, rs, zp, rule, delta)
            out_z = np.sum(k * ws, axis=1)
        return start, stop, out_r, out_z

    for start, stop, out_r, out_z in chunked_map(work, n_t, chunk):
        if radial:
            u_r[start:stop] = out_r
        if axial:
            u_z[start:stop] = out_z

    for name, values in (("u_r", u_r), ("u_z", u_z)):
        if values is not None and not np.all(np.isfinite(values)):
            raise SingularEvaluationError(f"{name} not finite; coincident points need delta > 0",
                                          delta=delta)
    return u_r, u_z


def compute_u_r(scalar: AxiScalarField, rule: PhiQuadRule,
                delta: Optional[float] = None) -> AxiScalarField:
    """u_r on the field's own grid by direct summation"""
    g = scalar.grid
    if g.r_min <= 0:
        raise GeometryError("compute_u_r needs r_min > 0")
    R, Z = g.mesh()
    u_r, _ = evaluate_velocity_at(scalar, R.ravel(), Z.ravel(), rule, delta, radial=True, axial=False)
    return AxiScalarField(g, u_r.reshape(g.shape))


def compute_velocity(scalar: AxiScalarField, rule: PhiQuadRule,
                     delta: Optional[float] = None, axial_form: str = "plain") -> AxiVelocity:
    """(u_r, u_z) on the field's own grid by direct summation"""
    g = scalar.grid
    if g.r_min <= 0:
        raise GeometryError("compute_velocity needs r_min > 0")
    R, Z = g.mesh()
    u_r, u_z = evaluate_velocity_at(scalar, R.ravel(), Z.ravel(), rule, delta,
                                    axial_form=axial_form)
    return AxiVelocity(g, u_r.reshape(g.shape), u_z.reshape(g.shape))


def stretching_rate(scalar: AxiScalarField, u_r: AxiScalarField) -> AxiScalarField:
    """Pointwise (u_r / r) omega_theta"""
    if scalar.grid != u_r.grid:
        raise GeometryError("stretching_rate needs a shared grid")
    g = scalar.grid
    if g.r_min <= 0:
        raise GeometryError("stretching_rate needs r_min > 0")
    return AxiScalarField(g, (u_r.values / g.r[:, None]) * scalar.values)


class KernelTable:
    """Tabulated ring kernels of a uniform grid, applied by FFT convolution in z"""

    def __init__(self, grid: AxiGrid, rule: PhiQuadRule, delta: Optional[float] = None,
                 axial: bool = True):
        self.grid = grid
        self.rule = rule
        self.delta = _resolve_delta(grid, delta)
        self.axial = axial

        n = grid.n_z
        self.fft_length = scipy.fft.next_fast_len(3 * n - 2, real=True)
        offsets = np.arange(2 * n - 1)
        self._toeplitz_zeta = (offsets - (n - 1)) * grid.dz
        self._hankel_zeta = 2.0 * grid.z_min + (offsets + 1) * grid.dz

        started = time.perf_counter()
        self._radial = self._tabulate(ring_radial)
        self._axial = self._tabulate(ring_axial) if axial else None
        logger.debug(f"Kernel table {grid.n_r}x{grid.n_z} assembled in "
                     f"{time.perf_counter() - started:.2f}s (fft length {self.fft_length})")

    def _tabulate(self, ring) -> Tuple[np.ndarray, np.ndarray]:
        g = self.grid
        r = g.r
        L = self.fft_length
        shape = (g.n_r, g.n_r, L // 2 + 1)
        toeplitz_hat = np.empty(shape, dtype=np.complex128)
        hankel_hat = np.empty(shape, dtype=np.complex128)

        def work(start: int, stop: int):
            R = r[start:stop, None, None]
            Rb = r[None, :, None]
            t = ring(R, Rb, self._toeplitz_zeta[None, None, :], self.rule, self.delta)
            h = ring(R, Rb, self._hankel_zeta[None, None, :], self.rule, self.delta)
            return start, stop, scipy.fft.rfft(t, n=L, axis=-1), scipy.fft.rfft(h, n=L, axis=-1)

        for start, stop, t_hat, h_hat in chunked_map(work, g.n_r, chunk=4):
            toeplitz_hat[start:stop] = t_hat
            hankel_hat[start:stop] = h_hat
        return toeplitz_hat, hankel_hat

    def _apply(self, tables: Tuple[np.ndarray, np.ndarray], values: np.ndarray) -> np.ndarray:
        g = self.grid
        n = g.n_z
        L = self.fft_length
        toeplitz_hat, hankel_hat = tables
        w_hat = scipy.fft.rfft(values, n=L, axis=-1, workers=get_thread_count())
        w_rev_hat = scipy.fft.rfft(values[:, ::-1], n=L, axis=-1, workers=get_thread_count())
        acc = (np.einsum("ikf,kf->if", toeplitz_hat, w_hat)
               - np.einsum("ikf,kf->if", hankel_hat, w_rev_hat))
        conv = scipy.fft.irfft(acc, n=L, axis=-1, workers=get_thread_count())
        return conv[:, n - 1:2 * n - 1] * (g.cell_area / (2.0 * np.pi))

    def u_r(self, values: np.ndarray) -> np.ndarray:
        """u_r on the grid for omega samples of shape n_r x n_z"""
        return self._apply(self._radial, np.asarray(values, dtype=float))

    def u_z(self, values: np.ndarray) -> np.ndarray:
        if self._axial is None:
            raise GeometryError("KernelTable built without the axial kernel")
        return self._apply(self._axial, np.asarray(values, dtype=float))

    def velocity(self, scalar: AxiScalarField) -> AxiVelocity:
        return AxiVelocity(self.grid, self.u_r(scalar.values), self.u_z(scalar.values))

    def memory_bytes(self) -> int:
        tables = [self._radial] + ([self._axial] if self._axial is not None else [])
        return sum(t.nbytes + h.nbytes for t, h in tables)


class MeridianBiotSavart:
    """Velocity solver bound to one grid; 'table' for stepping, 'direct' for reference"""

    def __init__(self, grid: AxiGrid, rule: PhiQuadRule, delta: Optional[float] = None,
                 method: str = "table", axial: bool = True):
        if method not in ("table", "direct"):
            raise GeometryError("method must be 'table' or 'direct'", method=method)
        self.grid = grid
        self.rule = rule
        self.delta = _resolve_delta(grid, delta)
        self.method = method
        self.axial = axial
        self._table = KernelTable(grid, rule, self.delta, axial=axial) if method == "table" else None

    def u_r(self, scalar: AxiScalarField) -> AxiScalarField:
        if self._table is not None:
            return AxiScalarField(self.grid, self._table.u_r(scalar.values))
        return compute_u_r(scalar, self.rule, self.delta)

    def velocity(self, scalar: AxiScalarField) -> AxiVelocity:
        if not self.axial:
            raise GeometryError("solver built without the axial kernel")
        if self._table is not None:
            return self._table.velocity(scalar)
        return compute_velocity(scalar, self.rule, self.delta)


def divergence_residual(velocity: AxiVelocity) -> float:
    """max |d_r(r u_r)/r + d_z u_z| over interior cells, centred differences"""
    g = velocity.grid
    r = g.r[:, None]
    flux = r * velocity.u_r
    d_r = (flux[2:, 1:-1] - flux[:-2, 1:-1]) / (2.0 * g.dr) / r[1:-1]
    d_z = (velocity.u_z[1:-1, 2:] - velocity.u_z[1:-1, :-2]) / (2.0 * g.dz)
    return float(np.max(np.abs(d_r + d_z)))


@dataclass
class MirrorCheck:
    """u_r evenness and u_z oddness residuals at mirror points"""
    radial_even_residual: float
    axial_odd_residual: float
    points: int

    def to_dict(self) -> Dict[str, float]:
        return {"radial_even_residual": self.radial_even_residual,
                "axial_odd_residual": self.axial_odd_residual, "points": self.points}


def mirror_check(scalar: AxiScalarField, points: Sequence[Tuple[float, float]],
                 rule: PhiQuadRule, delta: Optional[float] = None) -> MirrorCheck:
    """Evaluate at (r, z) and (r, -z); u_r must agree, u_z must flip sign"""
    pts = np.asarray(points, dtype=float)
    r = np.concatenate([pts[:, 0], pts[:, 0]])
    z = np.concatenate([pts[:, 1], -pts[:, 1]])
    u_r, u_z = evaluate_velocity_at(scalar, r, z, rule, delta)
    k = pts.shape[0]
    return MirrorCheck(
        radial_even_residual=float(np.max(np.abs(u_r[:k] - u_r[k:]))),
        axial_odd_residual=float(np.max(np.abs(u_z[:k] + u_z[k:]))),
        points=k,
    )


def delta_sensitivity(scalar: AxiScalarField, rule: PhiQuadRule,
                      delta0: Optional[float] = None) -> Dict[str, Any]:
    """Relative max-norm change of u_r for delta in {delta0/2, delta0, 2 delta0}"""
    delta0 = _resolve_delta(scalar.grid, delta0)
    reference = compute_u_r(scalar, rule, delta0).values
    scale = float(np.max(np.abs(reference))) or 1.0
    report = {"delta0": delta0}
    for label, factor in (("half", 0.5), ("double", 2.0)):
        other = compute_u_r(scalar, rule, factor * delta0).values
        report[f"relative_change_{label}"] = float(np.max(np.abs(other - reference)) / scale)
    worst = max(report["relative_change_half"], report["relative_change_double"])
    report["within_tolerance"] = worst <= AppConstants.DELTA_SENSITIVITY_TOL
    if not report["within_tolerance"]:
        logger.warning(f"u_r is sensitive to the regularization length: {report}")
    return report
