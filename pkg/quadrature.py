#!/usr/bin/env python3
"""
quadrature.py - Ring kernels and the desingularized s-integral

The azimuthal integrals of the axisymmetric Biot-Savart law are written in
the angle phi with s = cos(phi), which removes the (1 - s^2)^(-1/2) endpoint
singularity exactly. A PhiQuadRule is a Gauss-Legendre rule on (0, pi/2),
optionally composite on panels graded geometrically toward phi = 0 where
near-coincident kernels concentrate.

Ring kernels (delta is the blob regularization length):

    A_r(r, rb, zeta) = int_0^pi rb zeta cos(phi) / D^(3/2) dphi
    A_z(r, rb, zeta) = int_0^pi rb (rb - r cos(phi)) / D^(3/2) dphi
    D = zeta^2 + r^2 + rb^2 - 2 r rb cos(phi) + delta^2

The odd-symmetrized kernels subtract the image source at -zb:
    Kr_odd = A_r(z - zb) - A_r(z + zb),   Kz_full = A_z(z - zb) - A_z(z + zb)
and u = (1/2pi) sum K * omega(rb, zb) drb dzb over the upper half-plane.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from utils.errors import NumericalConsistencyError, SingularEvaluationError, GeometryError

logger = logging.getLogger(__name__)

HALF_PI = 0.5 * np.pi


@dataclass(frozen=True)
class PhiQuadRule:
    """Gauss-Legendre nodes and weights on (0, pi/2)"""
    order: int
    levels: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def cosines(self) -> np.ndarray:
        return np.cos(self.nodes)

    @property
    def size(self) -> int:
        return int(self.nodes.size)


def make_rule(order: int = 32, levels: int = 0) -> PhiQuadRule:
    """Gauss-Legendre rule of the given order on each of levels+1 graded panels"""
    if order < 1:
        raise GeometryError("rule order must be at least 1", order=order)
    if levels < 0:
        raise GeometryError("rule levels must be nonnegative", levels=levels)

    # panel edges 0, pi/2^(levels+1), ..., pi/4, pi/2
    edges = [0.0] + [HALF_PI / 2.0 ** k for k in range(levels, -1, -1)]
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * x)
        weights.append(0.5 * (b - a) * w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return PhiQuadRule(order=order, levels=levels, nodes=nodes, weights=weights)


@dataclass(frozen=True)
class KernelArgs:
    """Target (r, z) and source (r_bar, z_bar) of a ring-kernel evaluation"""
    r: float
    z: float
    r_bar: float
    z_bar: float

    def mirrored(self) -> "KernelArgs":
        """Target reflected through the plane z = 0"""
        return KernelArgs(self.r, -self.z, self.r_bar, self.z_bar)

    def swapped(self) -> "KernelArgs":
        return KernelArgs(self.r_bar, self.z_bar, self.r, self.z)


def s_integral(f: Callable[[np.ndarray], np.ndarray], rule: PhiQuadRule) -> float:
    """int_0^1 s (1-s^2)^(-1/2) f(s) ds = int_0^(pi/2) cos(phi) f(cos(phi)) dphi"""
    c = rule.cosines
    values = np.asarray(f(c), dtype=float) * np.ones_like(c)
    _check_finite(values)
    return float((c * values) @ rule.weights)


def phi_integral(f: Callable[[np.ndarray], np.ndarray], rule: PhiQuadRule) -> float:
    """int_0^(pi/2) f(cos(phi)) dphi, the weightless companion of s_integral"""
    c = rule.cosines
    values = np.asarray(f(c), dtype=float) * np.ones_like(c)
    _check_finite(values)
    return float(values @ rule.weights)


def composite_phi_reference(g: Callable[[np.ndarray], np.ndarray], points: int = 10 ** 6,
                            a: float = 0.0, b: float = HALF_PI) -> float:
    """Brute-force composite midpoint rule in phi, used as an independent reference"""
    h = (b - a) / points
    phi = a + (np.arange(points) + 0.5) * h
    return float(np.sum(g(phi)) * h)


def ring_radial(r, r_bar, zeta, rule: PhiQuadRule, delta: float = 0.0) -> np.ndarray:
    """A_r over broadcast arrays; the phi integral over (0, pi) folded onto (0, pi/2)"""
    r, r_bar, zeta = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r, r_bar, zeta)))
    c = rule.cosines
    base = (zeta * zeta + r * r + r_bar * r_bar + delta * delta)[..., None]
    cross = (2.0 * r * r_bar)[..., None] * c
    bracket = (base - cross) ** -1.5 - (base + cross) ** -1.5
    return (r_bar * zeta) * ((bracket * c) @ rule.weights)


def ring_axial(r, r_bar, zeta, rule: PhiQuadRule, delta: float = 0.0) -> np.ndarray:
    """A_z over broadcast arrays"""
    r, r_bar, zeta = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r, r_bar, zeta)))
    c = rule.cosines
    base = (zeta * zeta + r * r + r_bar * r_bar + delta * delta)[..., None]
    cross = (2.0 * r * r_bar)[..., None] * c
    rc = r[..., None] * c
    rb = r_bar[..., None]
    integrand = (rb - rc) * (base - cross) ** -1.5 + (rb + rc) * (base + cross) ** -1.5
    return r_bar * (integrand @ rule.weights)


def kernel_Kr_odd(args: KernelArgs, rule: PhiQuadRule, delta: float = 0.0) -> float:
    """Odd-symmetrized u_r kernel: the four-term bracket integrated in s"""
    _check_args(args, delta)
    direct = ring_radial(args.r, args.r_bar, args.z - args.z_bar, rule, delta)
    image = ring_radial(args.r, args.r_bar, args.z + args.z_bar, rule, delta)
    return _finite_scalar(direct - image, "Kr_odd", args)


def kernel_Kz_full(args: KernelArgs, rule: PhiQuadRule, delta: float = 0.0) -> float:
    """u_z kernel with numerator rb (rb - r cos(phi)), image subtracted"""
    _check_args(args, delta)
    direct = ring_axial(args.r, args.r_bar, args.z - args.z_bar, rule, delta)
    image = ring_axial(args.r, args.r_bar, args.z + args.z_bar, rule, delta)
    return _finite_scalar(direct - image, "Kz_full", args)


def kernel_Kz_statement(args: KernelArgs, rule: PhiQuadRule, delta: float = 0.0) -> float:
    """u_z kernel as printed with an extra (z - zb) factor; negative control only"""
    _check_args(args, delta)
    zm = args.z - args.z_bar
    zp = args.z + args.z_bar
    direct = zm * ring_axial(args.r, args.r_bar, zm, rule, delta)
    image = zp * ring_axial(args.r, args.r_bar, zp, rule, delta)
    return _finite_scalar(direct - image, "Kz_statement", args)


def g_kernel(r, z, r_bar, z_bar, rule: PhiQuadRule) -> np.ndarray:
    """Vectorized int_0^1 g(r, z, rb, zb, s) ds over broadcast arrays"""
    r, z, r_bar, z_bar = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r, z, r_bar, z_bar)))
    zeta = z + z_bar
    return ring_radial(r, r_bar, zeta, rule) / (r * r_bar * r_bar)


def kernel_G(args: KernelArgs, rule: PhiQuadRule) -> float:
    """Positive kernel of the lower-bound constant, (z+zb) s (1-s^2)^(-1/2) / (r rb) [...]"""
    if min(args.r, args.r_bar, args.z, args.z_bar) <= 0:
        raise GeometryError("kernel_G needs r, rb, z, zb > 0", r=args.r, z=args.z,
                            r_bar=args.r_bar, z_bar=args.z_bar)
    value = float(g_kernel(args.r, args.z, args.r_bar, args.z_bar, rule))
    if not np.isfinite(value) or value <= 0.0:
        raise NumericalConsistencyError("kernel_G must be strictly positive", value=value,
                                        r=args.r, z=args.z, r_bar=args.r_bar, z_bar=args.z_bar)
    return value


def _check_args(args: KernelArgs, delta: float) -> None:
    if args.r <= 0 or args.r_bar <= 0:
        raise GeometryError("kernel evaluation needs r, rb > 0 (axis excluded)",
                            r=args.r, r_bar=args.r_bar)
    if delta == 0.0 and args.r == args.r_bar and args.z == args.z_bar:
        raise SingularEvaluationError("coincident target and source without regularization",
                                      r=args.r, z=args.z)


def _check_finite(values: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NumericalConsistencyError(f"non-finite integrand at node {int(bad[0])}",
                                        node=int(bad[0]))


def _finite_scalar(value, name: str, args: KernelArgs) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise SingularEvaluationError(f"{name} is not finite", r=args.r, z=args.z,
                                      r_bar=args.r_bar, z_bar=args.z_bar)
    return value
