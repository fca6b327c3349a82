#!/usr/bin/env python3
"""
spectral_oracle.py - Periodic pseudo-spectral reference for the 3D objects

A cube [-L/2, L/2)^3 with n points per axis stands in for R^3. Coefficients
are scipy.fft.fftn of the lattice samples, frequencies xi = k / L with k the
integer wavenumber, so that

    ||f||_{H^s}^2 = (L^3 / n^6) sum_k (1 + 4 pi^2 |xi|^2)^s |f_hat(k)|^2

approximates the whole-space integral with weight (1 + 4 pi^2 |xi|^2)^s.
Derivatives and projections use xi with the Nyquist component zeroed so
that real fields stay real; the Sobolev weight uses the true |xi|.

Identities checked here against the axisymmetric modules: Helmholtz split,
vorticity isometry, Biot-Savart, the symmetric bilinear stretching operator
B with 2/3-rule dealiasing, and a Picard solve of the integral equation
w(t) = w0 + int_0^t B(w, w) dtau.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.fft
from scipy.interpolate import RegularGridInterpolator

from axifield import AxiGrid, AxiScalarField, VortexRingPair, make_vortex_ring_pair
from biot_savart_axi import MeridianBiotSavart, evaluate_velocity_at
from config import RunConfig
from quadrature import PhiQuadRule, make_rule
from utils.errors import SpectralDomainError
from utils.parallel import get_thread_count

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
MEAN_TOLERANCE = 1e-12
MIN_DEALIASED_N = 8

Profile = Union[VortexRingPair, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _fftn(values: np.ndarray) -> np.ndarray:
    return scipy.fft.fftn(values, axes=(-3, -2, -1), workers=get_thread_count())


def _ifftn(values: np.ndarray) -> np.ndarray:
    return scipy.fft.ifftn(values, axes=(-3, -2, -1), workers=get_thread_count())


def lattice(length: float, n: int) -> np.ndarray:
    """Node coordinates -L/2 + i L/n"""
    return -0.5 * length + np.arange(n) * (length / n)


@lru_cache(maxsize=16)
def _frequencies(n: int, length: float) -> Tuple[Tuple[np.ndarray, ...], Tuple[np.ndarray, ...],
                                                  np.ndarray, np.ndarray, np.ndarray]:
    """(xi, xi with Nyquist zeroed) as broadcast triples, |xi|^2, |xi_d|^2, integer |k|_inf"""
    k = np.fft.fftfreq(n, d=1.0 / n)
    kd = k.copy()
    kd[n // 2] = 0.0
    shapes = ((n, 1, 1), (1, n, 1), (1, 1, n))
    xi = tuple((k / length).reshape(s) for s in shapes)
    xi_d = tuple((kd / length).reshape(s) for s in shapes)
    xi2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    xi_d2 = xi_d[0] ** 2 + xi_d[1] ** 2 + xi_d[2] ** 2
    kabs = np.maximum(np.maximum(np.abs(k).reshape(shapes[0]), np.abs(k).reshape(shapes[1])),
                      np.abs(k).reshape(shapes[2]))
    for a in xi + xi_d + (xi2, xi_d2, kabs):
        a.setflags(write=False)
    return xi, xi_d, xi2, xi_d2, kabs


def sobolev_weight(n: int, length: float, s: float) -> np.ndarray:
    """(1 + 4 pi^2 |xi|^2)^s on the lattice"""
    _, _, xi2, _, _ = _frequencies(n, length)
    return (1.0 + 4.0 * np.pi ** 2 * xi2) ** s


def dealias_mask(n: int, length: float) -> np.ndarray:
    """2/3 rule: keep |k_j| < n/3 in every direction"""
    _, _, _, _, kabs = _frequencies(n, length)
    return kabs < n / 3.0


@dataclass(frozen=True)
class SpectralVectorField:
    """Three-component field on the periodic cube, held by its fftn coefficients"""
    length: float
    n: int
    coeffs: np.ndarray
    divergence_free: bool = False

    def __post_init__(self):
        if self.length <= 0:
            raise SpectralDomainError("box length must be positive", length=self.length)
        if self.n < 4 or self.n % 2:
            raise SpectralDomainError("resolution must be an even integer >= 4", n=self.n)
        if self.coeffs.shape != (3, self.n, self.n, self.n):
            raise SpectralDomainError("coefficient array has the wrong shape",
                                      shape=self.coeffs.shape, n=self.n)

    @classmethod
    def from_physical(cls, length: float, components: np.ndarray,
                      divergence_free: bool = False) -> "SpectralVectorField":
        components = np.asarray(components, dtype=float)
        return cls(length, components.shape[-1], _fftn(components), divergence_free)

    @classmethod
    def zeros(cls, length: float, n: int) -> "SpectralVectorField":
        return cls(length, n, np.zeros((3, n, n, n), dtype=complex), True)

    def physical(self) -> np.ndarray:
        return _ifftn(self.coeffs).real

    def with_coeffs(self, coeffs: np.ndarray, divergence_free: bool = False) -> "SpectralVectorField":
        return SpectralVectorField(self.length, self.n, coeffs, divergence_free)

    def _same_box(self, other: "SpectralVectorField") -> None:
        if self.n != other.n or self.length != other.length:
            raise SpectralDomainError("fields live on different boxes")

    def __add__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        self._same_box(other)
        return self.with_coeffs(self.coeffs + other.coeffs,
                                self.divergence_free and other.divergence_free)

    def __sub__(self, other: "SpectralVectorField") -> "SpectralVectorField":
        self._same_box(other)
        return self.with_coeffs(self.coeffs - other.coeffs,
                                self.divergence_free and other.divergence_free)

    def scaled(self, factor: float) -> "SpectralVectorField":
        return self.with_coeffs(factor * self.coeffs, self.divergence_free)

    def mean(self) -> np.ndarray:
        return self.coeffs[:, 0, 0, 0].real / self.n ** 3

    def divergence_residual(self) -> float:
        """||xi . v_hat|| / || |xi| v_hat||, zero for the zero field"""
        _, xi_d, _, xi_d2, _ = _frequencies(self.n, self.length)
        div = xi_d[0] * self.coeffs[0] + xi_d[1] * self.coeffs[1] + xi_d[2] * self.coeffs[2]
        scale = np.sqrt(np.sum(xi_d2 * np.sum(np.abs(self.coeffs) ** 2, axis=0)))
        if scale == 0:
            return 0.0
        return float(np.sqrt(np.sum(np.abs(div) ** 2)) / scale)


def helmholtz_project(v: SpectralVectorField) -> SpectralVectorField:
    """v_hat - xi (xi . v_hat) / |xi|^2 per frequency; modes with xi = 0 untouched"""
    _, xi_d, _, xi_d2, _ = _frequencies(v.n, v.length)
    c = v.coeffs
    dot = xi_d[0] * c[0] + xi_d[1] * c[1] + xi_d[2] * c[2]
    safe = np.where(xi_d2 > 0, xi_d2, 1.0)
    factor = np.where(xi_d2 > 0, dot / safe, 0.0)
    projected = np.stack([c[i] - xi_d[i] * factor for i in range(3)])
    return v.with_coeffs(projected, divergence_free=True)


def hs_inner(v: SpectralVectorField, w: SpectralVectorField, s: float) -> float:
    """Real H^s inner product"""
    v._same_box(w)
    weight = sobolev_weight(v.n, v.length, s)
    total = np.sum(weight * np.sum(v.coeffs * np.conj(w.coeffs), axis=0)).real
    return float(total * v.length ** 3 / v.n ** 6)


def hs_norm(v: SpectralVectorField, s: float) -> float:
    weight = sobolev_weight(v.n, v.length, s)
    total = np.sum(weight * np.sum(np.abs(v.coeffs) ** 2, axis=0))
    return float(np.sqrt(total * v.length ** 3 / v.n ** 6))


def gradient_hs_norm(u: SpectralVectorField, s: float) -> float:
    """H^s norm of the full gradient tensor, sum_ij ||d_i u_j||^2"""
    _, _, _, xi_d2, _ = _frequencies(u.n, u.length)
    weight = sobolev_weight(u.n, u.length, s) * (4.0 * np.pi ** 2 * xi_d2)
    total = np.sum(weight * np.sum(np.abs(u.coeffs) ** 2, axis=0))
    return float(np.sqrt(total * u.length ** 3 / u.n ** 6))


def scalar_hs_norm(values: np.ndarray, length: float, s: float) -> float:
    n = values.shape[-1]
    coeffs = _fftn(values)
    total = np.sum(sobolev_weight(n, length, s) * np.abs(coeffs) ** 2)
    return float(np.sqrt(total * length ** 3 / n ** 6))


def biot_savart_3d(omega: SpectralVectorField) -> SpectralVectorField:
    """u_hat = 2 pi i xi x omega_hat / (4 pi^2 |xi|^2)"""
    scale = float(np.max(np.abs(omega.coeffs)))
    if scale > 0 and np.max(np.abs(omega.coeffs[:, 0, 0, 0])) > MEAN_TOLERANCE * scale:
        raise SpectralDomainError("vorticity must have zero mean",
                                  mean=omega.mean().tolist())
    _, xi_d, _, xi_d2, _ = _frequencies(omega.n, omega.length)
    c = omega.coeffs
    cross = np.stack([xi_d[1] * c[2] - xi_d[2] * c[1],
                      xi_d[2] * c[0] - xi_d[0] * c[2],
                      xi_d[0] * c[1] - xi_d[1] * c[0]])
    safe = np.where(xi_d2 > 0, xi_d2, 1.0)
    factor = np.where(xi_d2 > 0, 1j / (TWO_PI * safe), 0.0)
    return omega.with_coeffs(factor * cross, divergence_free=True)


def _advection(a_phys: np.ndarray, u: SpectralVectorField, mask: np.ndarray) -> np.ndarray:
    """Coefficients of (a . grad) u with the product truncated by mask"""
    _, xi_d, _, _, _ = _frequencies(u.n, u.length)
    out = np.empty_like(u.coeffs)
    for i in range(3):
        grads = _ifftn(np.stack([TWO_PI * 1j * xi_d[j] * u.coeffs[i] for j in range(3)])).real
        product = np.sum(a_phys * grads, axis=0)
        out[i] = _fftn(product) * mask
    return out


def bilinear_B(omega: SpectralVectorField, omega_t: SpectralVectorField) -> SpectralVectorField:
    """1/2 P((omega . grad) u_t + (omega_t . grad) u), 2/3-rule dealiased"""
    omega._same_box(omega_t)
    if omega.n < MIN_DEALIASED_N:
        raise SpectralDomainError("resolution too small after dealiasing", n=omega.n)
    mask = dealias_mask(omega.n, omega.length)
    w = omega.with_coeffs(omega.coeffs * mask, omega.divergence_free)
    w_t = omega_t.with_coeffs(omega_t.coeffs * mask, omega_t.divergence_free)
    u = biot_savart_3d(w)
    u_t = biot_savart_3d(w_t)
    first = _advection(w.physical(), u_t, mask)
    second = _advection(w_t.physical(), u, mask)
    return helmholtz_project(omega.with_coeffs(0.5 * (first + second)))


def smooth_random_field(length: float, n: int, rng: np.random.Generator,
                        decay: float = 3.0) -> np.ndarray:
    """Real random lattice data with spectrum damped by (1 + |k|^2)^(-decay/2); Nyquist and mean removed"""
    raw = _fftn(rng.standard_normal((n, n, n)))
    k = np.fft.fftfreq(n, d=1.0 / n)
    K2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
    damped = raw * (1.0 + K2) ** (-decay / 2.0)
    damped[n // 2, :, :] = 0.0
    damped[:, n // 2, :] = 0.0
    damped[:, :, n // 2] = 0.0
    damped[0, 0, 0] = 0.0
    return _ifftn(damped).real


def random_field(length: float, n: int, rng: np.random.Generator,
                 decay: float = 3.0) -> SpectralVectorField:
    """Smooth random vector field, not divergence-free"""
    components = np.stack([smooth_random_field(length, n, rng, decay) for _ in range(3)])
    return SpectralVectorField.from_physical(length, components)


def random_divergence_free(length: float, n: int, rng: np.random.Generator,
                           decay: float = 3.0) -> SpectralVectorField:
    return helmholtz_project(random_field(length, n, rng, decay))


def single_mode_vorticity(length: float, n: int, amplitude: float = 1.0,
                          mode: int = 1) -> SpectralVectorField:
    """amplitude (sin ky, sin kz, sin kx) with k = 2 pi mode / L"""
    x = lattice(length, n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    k = TWO_PI * mode / length
    components = amplitude * np.stack([np.sin(k * Y), np.sin(k * Z), np.sin(k * X)])
    return SpectralVectorField.from_physical(length, components, divergence_free=True)


def single_mode_velocity(length: float, n: int, amplitude: float = 1.0,
                         mode: int = 1) -> np.ndarray:
    """Closed-form Biot-Savart of single_mode_vorticity: -(amplitude/k)(cos kz, cos kx, cos ky)"""
    x = lattice(length, n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    k = TWO_PI * mode / length
    return -(amplitude / k) * np.stack([np.cos(k * Z), np.cos(k * X), np.cos(k * Y)])


@dataclass
class EmbeddedField:
    """Embedded axisymmetric vorticity plus the lattice divergence before projection"""
    omega: SpectralVectorField
    raw_divergence: float


def _profile_extent(source: Union[Profile, AxiScalarField]) -> Optional[Tuple[float, float]]:
    """(r_max, |z|_max) of the support, when known"""
    if isinstance(source, VortexRingPair):
        return (source.center[0] + source.radii[0], source.center[1] + source.radii[1])
    if isinstance(source, AxiScalarField):
        idx = np.argwhere(source.values != 0)
        if idx.size == 0:
            return (0.0, 0.0)
        g = source.grid
        return (float(g.r[idx[:, 0]].max() + 0.5 * g.dr), float(g.z[idx[:, 1]].max() + 0.5 * g.dz))
    return None


def _field_profile(scalar: AxiScalarField) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Odd extension of a stored upper half-plane field, bilinear inside the grid and zero outside"""
    g = scalar.grid
    interp = RegularGridInterpolator((g.r, g.z), scalar.values, method="linear",
                                     bounds_error=False, fill_value=0.0)

    def profile(r: np.ndarray, z: np.ndarray) -> np.ndarray:
        points = np.stack([r.ravel(), np.abs(z).ravel()], axis=-1)
        return (np.sign(z).ravel() * interp(points)).reshape(r.shape)

    return profile


def embed_axisymmetric(source: Union[Profile, AxiScalarField], length: float,
                       n: int) -> EmbeddedField:
    """Sample omega_theta(r, z) e_theta on the lattice (odd in z), then project"""
    extent = _profile_extent(source)
    if extent is not None and max(extent) > 0.25 * length:
        raise SpectralDomainError("support violates the L/4 margin of the periodic box",
                                  r_extent=extent[0], z_extent=extent[1], length=length)
    profile = _field_profile(source) if isinstance(source, AxiScalarField) else source

    x = lattice(length, n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    R = np.hypot(X, Y)
    safe = np.where(R > 0, R, 1.0)
    w = np.where(R > 0, profile(R, Z), 0.0)
    components = np.stack([-w * Y / safe, w * X / safe, np.zeros_like(w)])
    raw = SpectralVectorField.from_physical(length, components)
    residual = raw.divergence_residual()
    logger.debug(f"embedded field lattice divergence {residual:.3e}")
    return EmbeddedField(omega=helmholtz_project(raw), raw_divergence=residual)


def axisymmetric_l2_norm(scalar: AxiScalarField) -> float:
    """L2 norm of omega_theta e_theta over R^3 from the stored half: (4 pi sum w^2 r dA)^(1/2)"""
    g = scalar.grid
    return float(np.sqrt(4.0 * np.pi * np.sum(scalar.values ** 2 * g.r[:, None]) * g.cell_area))


@dataclass
class MeridianSamples:
    """Lattice samples on the half-plane y = 0, x > 0"""
    r: np.ndarray
    z: np.ndarray
    values: np.ndarray

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.z, indexing="ij")

    def restricted(self, r_max: float, z_max: float) -> "MeridianSamples":
        keep_r = self.r <= r_max
        keep_z = np.abs(self.z) <= z_max
        return MeridianSamples(self.r[keep_r], self.z[keep_z], self.values[np.ix_(keep_r, keep_z)])


COMPONENTS = {"r": 0, "theta": 1, "z": 2}


def meridian_pullback(v: SpectralVectorField, component: str = "theta") -> MeridianSamples:
    """On y = 0, x > 0 the cylindrical basis is (e_x, e_y, e_z)"""
    if component not in COMPONENTS:
        raise SpectralDomainError(f"component must be one of {list(COMPONENTS)}")
    phys = v.physical()[COMPONENTS[component]]
    x = lattice(v.length, v.n)
    j0 = v.n // 2
    positive = np.arange(v.n) > j0
    return MeridianSamples(r=x[positive], z=x.copy(), values=phys[positive, j0, :])


def relative_l2(approx: np.ndarray, reference: np.ndarray) -> float:
    scale = float(np.linalg.norm(reference))
    diff = float(np.linalg.norm(np.asarray(approx) - np.asarray(reference)))
    return diff / scale if scale > 0 else diff


def axi_velocity_samples(meridian: AxiScalarField, samples: MeridianSamples,
                         rule: Optional[PhiQuadRule] = None, delta: Optional[float] = None,
                         axial_form: str = "plain") -> Tuple[np.ndarray, np.ndarray]:
    """Direct-path (u_r, u_z) at the sample points"""
    R, Z = samples.mesh()
    rule = rule or make_rule()
    u_r, u_z = evaluate_velocity_at(meridian, R.ravel(), Z.ravel(), rule, delta,
                                    axial_form=axial_form)
    return u_r.reshape(R.shape), u_z.reshape(R.shape)


def interpolate_meridian(scalar: AxiScalarField, r: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Cubic interpolation of a z-even field at (r, |z|), zero outside the cell-centre box"""
    g = scalar.grid
    interp = RegularGridInterpolator((g.r, g.z), scalar.values, method="cubic",
                                     bounds_error=False, fill_value=0.0)
    points = np.stack([r.ravel(), np.abs(z).ravel()], axis=-1)
    return interp(points).reshape(r.shape)


def axi_stretching_samples(meridian: AxiScalarField, samples: MeridianSamples,
                           rule: Optional[PhiQuadRule] = None, delta: Optional[float] = None,
                           profile: Optional[Profile] = None) -> np.ndarray:
    """(u_r / r) omega_theta at the sample points

    u_r is summed at the cell centres of the meridian grid and interpolated to
    the lattice; omega_theta comes from profile when given, else from the grid.
    """
    solver = MeridianBiotSavart(meridian.grid, rule or make_rule(), delta, method="table",
                                axial=False)
    u_r = solver.u_r(meridian)
    R, Z = samples.mesh()
    omega = profile(R, Z) if profile is not None else _field_profile(meridian)(R, Z)
    return interpolate_meridian(u_r, R, Z) / R * omega


@dataclass
class BilinearConstant:
    """Measured ratios ||B(w, v)|| / (||w|| ||v||) over random pairs"""
    s: float
    ratios: List[float]

    @property
    def value(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    @property
    def spread(self) -> float:
        """max / min ratio; a stable constant keeps this moderate"""
        if not self.ratios or min(self.ratios) == 0:
            return float("inf")
        return max(self.ratios) / min(self.ratios)

    def to_dict(self) -> Dict[str, Any]:
        return {"s": self.s, "C_hat": self.value, "spread": self.spread, "ratios": self.ratios}


def measure_bilinear_constant(length: float, n: int, s: float, pairs: int,
                              rng: np.random.Generator) -> BilinearConstant:
    ratios = []
    for _ in range(pairs):
        w = random_divergence_free(length, n, rng)
        v = random_divergence_free(length, n, rng)
        ratios.append(hs_norm(bilinear_B(w, v), s) / (hs_norm(w, s) * hs_norm(v, s)))
    return BilinearConstant(s=s, ratios=ratios)


def hilbert_algebra_ratio(length: float, n: int, s: float, pairs: int,
                          rng: np.random.Generator) -> List[float]:
    """||f g||_{H^s} / (||f||_{H^s} ||g||_{H^s}) for random smooth scalar pairs"""
    ratios = []
    for _ in range(pairs):
        f = smooth_random_field(length, n, rng)
        g = smooth_random_field(length, n, rng)
        ratios.append(scalar_hs_norm(f * g, length, s) /
                      (scalar_hs_norm(f, length, s) * scalar_hs_norm(g, length, s)))
    return ratios


@dataclass
class PicardResult:
    """Iterate distances of the Picard map and the final trajectory norms"""
    T: float
    s: float
    distances: List[float] = field(default_factory=list)
    converged: bool = False
    non_contraction: bool = False
    contraction_bound: Optional[float] = None
    initial_norm: float = 0.0
    norm_history: List[Tuple[float, float]] = field(default_factory=list)
    solution: Optional[SpectralVectorField] = None

    @property
    def iterations(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> List[float]:
        d = self.distances
        return [b / a for a, b in zip(d[:-1], d[1:]) if a > 0]

    @property
    def final_norm(self) -> float:
        return self.norm_history[-1][1] if self.norm_history else 0.0

    @property
    def norm_bound_ok(self) -> bool:
        return self.final_norm < 2.0 * self.initial_norm or self.initial_norm == 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "T": self.T, "s": self.s, "iterations": self.iterations,
            "distances": self.distances, "ratios": self.ratios,
            "converged": self.converged, "non_contraction": self.non_contraction,
            "contraction_bound": self.contraction_bound,
            "initial_norm": self.initial_norm, "final_norm": self.final_norm,
            "norm_bound_ok": self.norm_bound_ok,
            "norm_history": [list(p) for p in self.norm_history],
        }


def picard_solve(omega0: SpectralVectorField, s: float, T: float, max_iter: int = 30,
                 tol: float = 1e-10, substeps: int = 64,
                 c_hat: Optional[float] = None) -> PicardResult:
    """Iterate w <- omega0 + int_0^t B(w, w) dtau on a uniform time grid (trapezoid in tau)"""
    if T <= 0:
        raise SpectralDomainError("Picard horizon must be positive", T=T)
    times = np.linspace(0.0, T, substeps + 1)
    h = T / substeps
    norm0 = hs_norm(omega0, s)
    result = PicardResult(T=T, s=s, initial_norm=norm0)
    if c_hat is not None:
        result.contraction_bound = 4.0 * c_hat * norm0 * T
        if result.contraction_bound >= 1.0:
            logger.warning(f"Picard horizon outside the empirical smallness condition "
                           f"(4 C ||w0|| T = {result.contraction_bound:.3g})")

    iterate = [omega0.coeffs] * (substeps + 1)
    growing = 0
    for k in range(max_iter):
        forcing = [bilinear_B(omega0.with_coeffs(c, True), omega0.with_coeffs(c, True)).coeffs
                   for c in iterate]
        updated = [omega0.coeffs]
        running = np.zeros_like(omega0.coeffs)
        for m in range(1, substeps + 1):
            running = running + 0.5 * h * (forcing[m - 1] + forcing[m])
            updated.append(omega0.coeffs + running)

        distance = max(hs_norm(omega0.with_coeffs(a - b), s) for a, b in zip(updated, iterate))
        result.distances.append(distance)
        iterate = updated
        if len(result.distances) > 1 and result.distances[-2] > 0:
            growing = growing + 1 if distance >= result.distances[-2] else 0
            if growing >= 3 and not result.non_contraction:
                result.non_contraction = True
                logger.warning(f"Picard iterates stopped contracting at iteration {k + 1}")
        if distance <= tol * max(1.0, norm0):
            result.converged = True
            break

    result.norm_history = [(float(t), hs_norm(omega0.with_coeffs(c), s))
                           for t, c in zip(times, iterate)]
    result.solution = omega0.with_coeffs(iterate[-1], True)
    logger.info(f"Picard: {result.iterations} iterations, converged={result.converged}, "
                f"final H^s norm {result.final_norm:.6g} (initial {norm0:.6g})")
    return result


@dataclass
class BoxStudy:
    """u_r mismatch against the direct axisymmetric sum for growing boxes at fixed spacing"""
    lengths: List[float]
    errors: List[float]

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors[:-1], self.errors[1:]))

    def to_dict(self) -> Dict[str, Any]:
        return {"lengths": self.lengths, "errors": self.errors, "decreasing": self.decreasing}


def box_doubling_study(profile: VortexRingPair, meridian: AxiScalarField, length: float,
                       n: int, doublings: int = 1, rule: Optional[PhiQuadRule] = None,
                       delta: Optional[float] = None) -> BoxStudy:
    """Same lattice spacing, box doubled; errors measured on the base box core"""
    lengths, errors = [], []
    for level in range(doublings + 1):
        factor = 2 ** level
        embedded = embed_axisymmetric(profile, length * factor, n * factor)
        u = biot_savart_3d(embedded.omega)
        samples = meridian_pullback(u, "r").restricted(0.25 * length, 0.25 * length)
        reference, _ = axi_velocity_samples(meridian, samples, rule, delta)
        lengths.append(length * factor)
        errors.append(relative_l2(samples.values, reference))
        logger.info(f"box {length * factor:g} (n={n * factor}): u_r mismatch {errors[-1]:.3e}")
    return BoxStudy(lengths=lengths, errors=errors)


@dataclass
class SpectralCheck:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "passed": self.passed, "detail": self.detail}


@dataclass
class IdentitySuiteReport:
    checks: List[SpectralCheck] = field(default_factory=list)
    conventions: Dict[str, str] = field(default_factory=dict)

    def add(self, name: str, value: float, tolerance: float, passed: Optional[bool] = None,
            **detail: Any) -> SpectralCheck:
        check = SpectralCheck(name, float(value), tolerance,
                              bool(value <= tolerance) if passed is None else bool(passed), detail)
        self.checks.append(check)
        level = logging.INFO if check.passed else logging.WARNING
        logger.log(level, f"{name}: {value:.3e} (tolerance {tolerance:g}) "
                          f"{'pass' if check.passed else 'FAIL'}")
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks],
                "conventions": self.conventions}


SOBOLEV_ORDERS = (0.0, 1.0, 1.7, 2.5)


def run_identity_suite(config: RunConfig) -> IdentitySuiteReport:
    """Every spectral identity plus the cross-checks against the axisymmetric modules"""
    rng = np.random.default_rng(config.seed)
    report = IdentitySuiteReport(conventions={
        "box": "[-L/2, L/2)^3, x_i = -L/2 + i L/n",
        "frequency": "xi = k / L, k integer (numpy fftfreq order)",
        "hs_norm": "(L^3/n^6) sum (1 + 4 pi^2 |xi|^2)^s |fftn|^2",
        "derivatives": "2 pi i xi with the Nyquist component zeroed",
    })
    s = config.sobolev_s
    small_n = config.random_n
    small_L = TWO_PI

    # Isometry ||omega||_{H^s} = ||grad u||_{H^s}
    worst = 0.0
    for _ in range(config.random_pairs):
        omega = random_divergence_free(small_L, small_n, rng)
        u = biot_savart_3d(omega)
        for order in SOBOLEV_ORDERS:
            a, b = hs_norm(omega, order), gradient_hs_norm(u, order)
            worst = max(worst, abs(a - b) / a)
    report.add("vorticity_isometry", worst, 1e-12, fields=config.random_pairs)

    # Helmholtz split
    idem = ortho = pyth = 0.0
    for _ in range(config.random_pairs):
        v = random_field(small_L, small_n, rng)
        p = helmholtz_project(v)
        q = v - p
        pp = helmholtz_project(p)
        idem = max(idem, hs_norm(pp - p, s) / hs_norm(p, s))
        for order in SOBOLEV_ORDERS:
            np_, nq, nv = hs_norm(p, order), hs_norm(q, order), hs_norm(v, order)
            ortho = max(ortho, abs(hs_inner(p, q, order)) / (np_ * nq))
            pyth = max(pyth, abs(nv ** 2 - np_ ** 2 - nq ** 2) / nv ** 2)
    report.add("helmholtz_idempotent", idem, 1e-12)
    report.add("helmholtz_orthogonal", ortho, 1e-12)
    report.add("helmholtz_pythagoras", pyth, 1e-12)

    # Single-mode Biot-Savart
    omega = single_mode_vorticity(small_L, small_n)
    exact = single_mode_velocity(small_L, small_n)
    u = biot_savart_3d(omega).physical()
    report.add("single_mode_biot_savart", float(np.max(np.abs(u - exact)) / np.max(np.abs(exact))), 1e-13)

    # Bilinear operator
    w = random_divergence_free(small_L, small_n, rng)
    v = random_divergence_free(small_L, small_n, rng)
    b_wv = bilinear_B(w, v)
    b_vw = bilinear_B(v, w)
    report.add("bilinear_symmetric", hs_norm(b_wv - b_vw, s) / hs_norm(b_wv, s), 1e-13)
    report.add("bilinear_divergence_free", b_wv.divergence_residual(), 1e-12)
    constant = measure_bilinear_constant(small_L, small_n, s, config.random_pairs, rng)
    report.add("bilinear_constant_spread", constant.spread, 10.0, C_hat=constant.value)
    algebra = hilbert_algebra_ratio(small_L, small_n, s, config.random_pairs, rng)
    report.add("hilbert_algebra_ratio_max", max(algebra), 1e6, ratios=algebra)

    # Picard on small single-mode data under the empirical smallness condition
    omega0 = single_mode_vorticity(small_L, config.picard_n, amplitude=0.05)
    norm0 = hs_norm(omega0, s)
    T = config.picard_T if config.picard_T is not None else 0.5 / (4.0 * constant.value * norm0)
    picard = picard_solve(omega0, s, T, config.picard_max_iter, config.picard_tol,
                          config.picard_substeps, constant.value)
    ratios = picard.ratios
    max_ratio = max(ratios) if ratios else 0.0
    report.add("picard_contraction_ratio", max_ratio, 1.0,
               passed=(max_ratio < 1.0 and not picard.non_contraction and picard.norm_bound_ok),
               **picard.to_dict())

    # Axisymmetric embedding and the cross-module checks
    grid = AxiGrid(config.r_min, config.r_max, config.z_min, config.z_max, config.n_r, config.n_z)
    profile = VortexRingPair((config.center_r, config.center_z), (config.radius_r, config.radius_z),
                             config.amplitude)
    meridian = make_vortex_ring_pair(profile.center, profile.radii, profile.amplitude, grid)
    L, n = config.spectral_box, config.spectral_n
    rule = make_rule(config.rule_order, config.rule_levels)
    embedded = embed_axisymmetric(profile, L, n)
    report.add("embedding_divergence", embedded.omega.divergence_residual(), 1e-10,
               raw_lattice_divergence=embedded.raw_divergence)
    l2_axi = axisymmetric_l2_norm(meridian)
    report.add("embedding_l2_norm", abs(hs_norm(embedded.omega, 0.0) - l2_axi) / l2_axi, 0.01)

    u = biot_savart_3d(embedded.omega)
    core = 0.25 * L
    u_r_spec = meridian_pullback(u, "r").restricted(core, core)
    u_z_spec = meridian_pullback(u, "z").restricted(core, core)
    u_r_axi, u_z_axi = axi_velocity_samples(meridian, u_r_spec, rule, config.delta)
    _, u_z_statement = axi_velocity_samples(meridian, u_r_spec, rule, config.delta,
                                            axial_form="statement")
    report.add("axi_u_r_match", relative_l2(u_r_spec.values, u_r_axi), 0.02)
    uz_error = relative_l2(u_z_spec.values, u_z_axi)
    uz_statement_error = relative_l2(u_z_spec.values, u_z_statement)
    report.add("axi_u_z_match", uz_error, 0.02)
    report.add("axi_u_z_statement_form_rejected", uz_error, 0.02,
               passed=uz_statement_error > 10.0 * max(uz_error, 0.02) or uz_statement_error > 0.5,
               statement_error=uz_statement_error)

    stretching = meridian_pullback(bilinear_B(embedded.omega, embedded.omega), "theta").restricted(core, core)
    rate_axi = axi_stretching_samples(meridian, stretching, rule, config.delta, profile)
    report.add("axi_stretching_match", relative_l2(stretching.values, rate_axi), 0.02)

    study = box_doubling_study(profile, meridian, L, max(n // 2, 8), rule=rule, delta=config.delta)
    report.add("box_doubling_error_decreases", study.errors[-1], study.errors[0],
               passed=study.decreasing, **study.to_dict())
    return report
