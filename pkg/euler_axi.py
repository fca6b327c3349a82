#!/usr/bin/env python3
"""
euler_axi.py - Axisymmetric Euler solver

Flux-form upwind transport of the azimuthal vorticity and the comparison with
the stretching runs.
"""

import dataclasses
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from axifield import (AxiGrid, AxiScalarField, AxiVelocity, functional_Q, make_vortex_ring_pair,
                      relative_support)
from biot_savart_axi import MeridianBiotSavart
from config import AppConstants, RunConfig
from dynamics import run_ivse
from kappa import estimate_kappa
from quadrature import make_rule
from utils.errors import (CFLViolation, EmptySupportError, GeometryError, KappaDomainError,
                          NumericalConsistencyError)
from utils.field_io import CsvLog, write_json

logger = logging.getLogger(__name__)

EULER_COLUMNS = ["step", "t", "Q", "sup_norm", "dt", "lower_curve", "violation",
                 "kappa", "kappa_integral", "energy", "grid_energy", "aspect_ratio",
                 "circulation"]

SIGN_TOLERANCE = 1e-12
MAX_REJECTIONS = 6
ENERGY_TOL = 0.02
CIRCULATION_TOL = 0.005
TRANSPORTED_RATIO_TOL = 0.01


def minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 0.5 * (np.sign(a) + np.sign(b)) * np.minimum(np.abs(a), np.abs(b))


def van_leer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    product = a * b
    total = a + b
    safe = np.where(product > 0, total, 1.0)
    return np.where(product > 0, 2.0 * product / safe, 0.0)


LIMITERS: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "minmod": minmod,
    "vanleer": van_leer,
}


@dataclass
class AnisoReport:
    """Time series of an Euler run and the kappa-integral bound"""
    times: List[float] = field(default_factory=list)
    Q_values: List[float] = field(default_factory=list)
    dt_history: List[float] = field(default_factory=list)
    sup_norm_history: List[float] = field(default_factory=list)
    kappa_times: List[float] = field(default_factory=list)
    kappa_values: List[float] = field(default_factory=list)
    kappa_integral: List[float] = field(default_factory=list)
    bound: float = float("inf")
    energy_values: List[float] = field(default_factory=list)
    grid_energy_values: List[float] = field(default_factory=list)
    circulation_values: List[float] = field(default_factory=list)
    transported_ratio_max: List[float] = field(default_factory=list)
    support_boxes: List[Tuple[float, float, float, float]] = field(default_factory=list)
    aspect_ratios: List[float] = field(default_factory=list)
    sign_violations: int = 0
    rejected_steps: int = 0
    termination: str = "not_started"

    @staticmethod
    def _drift(series: List[float]) -> float:
        if not series or series[0] == 0:
            return 0.0
        return float(max(abs(v - series[0]) for v in series) / abs(series[0]))

    @property
    def energy_drift(self) -> float:
        return self._drift(self.energy_values)

    @property
    def circulation_drift(self) -> float:
        return self._drift(self.circulation_values)

    @property
    def transported_ratio_drift(self) -> float:
        """Relative growth of max |omega / r|; nonpositive for a monotone scheme"""
        if not self.transported_ratio_max or self.transported_ratio_max[0] == 0:
            return 0.0
        first = self.transported_ratio_max[0]
        return float((max(self.transported_ratio_max) - first) / first)

    @property
    def kappa_bound_ok(self) -> bool:
        if not self.kappa_integral:
            return True
        return self.kappa_integral[-1] <= self.bound * 1.05

    @property
    def kappa_nonincreasing(self) -> bool:
        """Each kappa sample stays within 1% of the running minimum"""
        running = np.inf
        for value in self.kappa_values:
            if value > running * 1.01:
                return False
            running = min(running, value)
        return True

    @property
    def passed(self) -> bool:
        return (self.energy_drift <= ENERGY_TOL and self.circulation_drift <= CIRCULATION_TOL
                and self.transported_ratio_drift <= TRANSPORTED_RATIO_TOL
                and self.kappa_bound_ok and self.kappa_nonincreasing and self.sign_violations == 0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "times": self.times,
            "Q_values": self.Q_values,
            "dt_history": self.dt_history,
            "sup_norm_history": self.sup_norm_history,
            "kappa_times": self.kappa_times,
            "kappa_values": self.kappa_values,
            "kappa_integral": self.kappa_integral,
            "bound": self.bound,
            "energy_values": self.energy_values,
            "grid_energy_values": self.grid_energy_values,
            "circulation_values": self.circulation_values,
            "support_boxes": [list(b) for b in self.support_boxes],
            "aspect_ratios": self.aspect_ratios,
            "energy_drift": self.energy_drift,
            "circulation_drift": self.circulation_drift,
            "transported_ratio_drift": self.transported_ratio_drift,
            "kappa_bound_ok": self.kappa_bound_ok,
            "kappa_nonincreasing": self.kappa_nonincreasing,
            "sign_violations": self.sign_violations,
            "rejected_steps": self.rejected_steps,
            "termination": self.termination,
            "passed": self.passed,
        }


def face_states(values: np.ndarray, axis: int, odd_low: bool,
                limiter: str = "minmod") -> Tuple[np.ndarray, np.ndarray]:
    """Left and right reconstructed states on the n+1 faces along axis"""
    w = np.moveaxis(values, axis, 0)
    low = -w[:1] if odd_low else np.zeros_like(w[:1])
    high = np.zeros_like(w[:1])
    padded = np.concatenate([low, w, high], axis=0)

    limit = LIMITERS[limiter]
    slopes = limit(padded[1:-1] - padded[:-2], padded[2:] - padded[1:-1])
    plus = w + 0.5 * slopes    # state at the cell's upper face
    minus = w - 0.5 * slopes   # state at the cell's lower face

    left = np.concatenate([low, plus], axis=0)
    right = np.concatenate([minus, high], axis=0)
    return np.moveaxis(left, 0, axis), np.moveaxis(right, 0, axis)


def face_velocity(velocity: AxiVelocity) -> Tuple[np.ndarray, np.ndarray]:
    """u_r on radial faces and u_z on axial faces; the box walls carry no normal velocity

    The axis and z = 0 are closed by symmetry. The outer faces r_max and z_max
    are closed as rigid walls, so the stored circulation is conserved exactly.
    """
    g = velocity.grid
    u_r = velocity.u_r
    u_z = velocity.u_z

    radial = np.empty((g.n_r + 1, g.n_z))
    radial[1:-1] = 0.5 * (u_r[1:] + u_r[:-1])
    radial[0] = 0.0 if g.r_min == 0 else u_r[0]
    radial[-1] = 0.0

    axial = np.empty((g.n_r, g.n_z + 1))
    axial[:, 1:-1] = 0.5 * (u_z[:, 1:] + u_z[:, :-1])
    axial[:, 0] = 0.0 if g.z_min == 0 else u_z[:, 0]
    axial[:, -1] = 0.0
    return radial, axial


def courant_number(velocity: AxiVelocity, dt: float) -> float:
    """dt * max(|u_r| / dr + |u_z| / dz) over face velocities"""
    radial, axial = face_velocity(velocity)
    g = velocity.grid
    rate_r = np.maximum(np.abs(radial[:-1]), np.abs(radial[1:])) / g.dr
    rate_z = np.maximum(np.abs(axial[:, :-1]), np.abs(axial[:, 1:])) / g.dz
    return float(dt * np.max(rate_r + rate_z))


def stable_dt(velocity: AxiVelocity, cfl: float) -> float:
    rate = courant_number(velocity, 1.0)
    return cfl / rate if rate > 0 else np.inf


def euler_rhs(scalar: AxiScalarField, velocity: AxiVelocity, limiter: str = "minmod",
              dt: Optional[float] = None) -> AxiScalarField:
    """-[d_r(u_r omega) + d_z(u_z omega)] by upwinded limited fluxes"""
    if velocity.grid != scalar.grid:
        raise GeometryError("velocity and vorticity must share a grid")
    if limiter not in LIMITERS:
        raise GeometryError(f"unknown limiter '{limiter}'", choices=list(LIMITERS))
    if dt is not None:
        courant = courant_number(velocity, dt)
        if courant > 1.0:
            raise CFLViolation(courant)

    g = scalar.grid
    w = scalar.values
    radial, axial = face_velocity(velocity)
    left_r, right_r = face_states(w, 0, odd_low=g.r_min == 0, limiter=limiter)
    left_z, right_z = face_states(w, 1, odd_low=g.z_min == 0, limiter=limiter)

    flux_r = radial * np.where(radial > 0, left_r, right_r)
    flux_z = axial * np.where(axial > 0, left_z, right_z)
    rhs = -((flux_r[1:] - flux_r[:-1]) / g.dr + (flux_z[:, 1:] - flux_z[:, :-1]) / g.dz)
    return scalar.with_values(rhs)


def euler_step(scalar: AxiScalarField, dt: float, solver: Optional[MeridianBiotSavart] = None,
               velocity: Optional[AxiVelocity] = None, limiter: str = "minmod",
               prescribed: bool = False) -> AxiScalarField:
    """One SSP-RK3 step; the velocity is recomputed per stage unless prescribed"""
    if solver is None and velocity is None:
        raise GeometryError("euler_step needs a solver or a velocity")

    def stage_velocity(stage: AxiScalarField, first: bool) -> AxiVelocity:
        if prescribed or (first and velocity is not None):
            return velocity
        return solver.velocity(stage)

    w0 = scalar
    k = euler_rhs(w0, stage_velocity(w0, True), limiter, dt).values
    w1 = scalar.with_values(w0.values + dt * k)
    k = euler_rhs(w1, stage_velocity(w1, False), limiter, dt).values
    w2 = scalar.with_values(0.75 * w0.values + 0.25 * (w1.values + dt * k))
    k = euler_rhs(w2, stage_velocity(w2, False), limiter, dt).values
    return scalar.with_values(w0.values / 3.0 + (2.0 / 3.0) * (w2.values + dt * k))


def circulation(scalar: AxiScalarField) -> float:
    """sum omega dr dz over the stored half-plane"""
    return float(np.sum(scalar.values) * scalar.grid.cell_area)


def grid_energy(velocity: AxiVelocity) -> float:
    """Kinetic energy 1/2 int |u|^2 dV of both halves restricted to the grid"""
    g = velocity.grid
    speed2 = velocity.u_r ** 2 + velocity.u_z ** 2
    return float(2.0 * np.pi * np.sum(speed2 * g.r[:, None]) * g.cell_area)


def lamb_energy(scalar: AxiScalarField, velocity: AxiVelocity) -> float:
    """Kinetic energy as int u . (x cross omega) dV, supported on the vorticity only"""
    g = scalar.grid
    R, Z = g.mesh()
    integrand = scalar.values * (R * velocity.u_z - Z * velocity.u_r) * R
    return float(4.0 * np.pi * np.sum(integrand) * g.cell_area)


def transported_ratio_max(scalar: AxiScalarField) -> float:
    """max |omega_theta / r|"""
    return float(np.max(np.abs(scalar.values / scalar.grid.r[:, None])))


def dQdt_ivse(scalar: AxiScalarField, velocity: AxiVelocity) -> float:
    """-sum r u_r omega dA, the IVSE rate of Q"""
    g = scalar.grid
    return float(-np.sum(g.r[:, None] * velocity.u_r * scalar.values) * g.cell_area)


def dQdt_euler(scalar: AxiScalarField, velocity: AxiVelocity, limiter: str = "minmod") -> float:
    """-sum r^2 euler_rhs dA, the Euler rate of Q"""
    g = scalar.grid
    rhs = euler_rhs(scalar, velocity, limiter).values
    return float(-np.sum((g.r ** 2)[:, None] * rhs) * g.cell_area)


def euler_grid(config: RunConfig) -> AxiGrid:
    return AxiGrid(0.0, config.euler_r_max, 0.0, config.euler_z_max,
                   config.euler_n_r, config.euler_n_z)


def initial_euler_field(config: RunConfig, grid: Optional[AxiGrid] = None) -> AxiScalarField:
    grid = grid or euler_grid(config)
    return make_vortex_ring_pair((config.center_r, config.center_z),
                                 (config.radius_r, config.radius_z), config.amplitude, grid)


def run_euler(config: RunConfig, output_dir: Optional[str] = None,
              initial: Optional[AxiScalarField] = None, limiter: str = "minmod") -> AnisoReport:
    """Integrate to the horizon; kappa(t) every euler_kappa_every steps"""
    output_dir = output_dir or config.output_dir
    scalar = initial if initial is not None else initial_euler_field(config)
    grid = scalar.grid
    report = AnisoReport()
    Q0 = functional_Q(scalar)
    report.bound = 0.5 / Q0 if Q0 > 0 else float("inf")

    csv_path = os.path.join(output_dir, AppConstants.STEPS_CSV)
    with CsvLog(csv_path, EULER_COLUMNS) as csv_log:
        if scalar.is_zero():
            report.times.append(0.0)
            report.Q_values.append(0.0)
            report.sup_norm_history.append(0.0)
            report.energy_values.append(0.0)
            report.grid_energy_values.append(0.0)
            report.circulation_values.append(0.0)
            report.termination = "zero_datum"
            csv_log.write({"step": 0, "t": 0.0, "Q": 0.0, "sup_norm": 0.0, "dt": 0.0})
            write_json(os.path.join(output_dir, AppConstants.REPORT_JSON), report.to_dict())
            return report

        rule = make_rule(config.rule_order, config.rule_levels)
        started = time.perf_counter()
        solver = MeridianBiotSavart(grid, rule, config.delta, method="table", axial=True)
        logger.info(f"Euler velocity table ready in {time.perf_counter() - started:.1f}s")

        def record_kappa(t: float, current: AxiScalarField) -> Optional[float]:
            try:
                region = relative_support(current, config.euler_threshold)
                estimate = estimate_kappa(region, rule, config.kappa_schedule)
            except EmptySupportError:
                return None
            except KappaDomainError as e:
                logger.warning(f"kappa skipped at t={t:.4f}: {e.message}")
                return None
            if report.kappa_times:
                previous = report.kappa_integral[-1]
                span = t - report.kappa_times[-1]
                report.kappa_integral.append(previous + 0.5 * span * (report.kappa_values[-1] + estimate.value))
            else:
                report.kappa_integral.append(0.0)
            report.kappa_times.append(t)
            report.kappa_values.append(estimate.value)
            report.support_boxes.append(region.bounding_box)
            report.aspect_ratios.append(region.aspect_ratio())
            return estimate.value

        t = 0.0
        step = 0
        velocity = solver.velocity(scalar)
        while True:
            Q = functional_Q(scalar)
            sup = scalar.sup_norm()
            energy = lamb_energy(scalar, velocity)
            kinetic = grid_energy(velocity)
            circ = circulation(scalar)
            report.times.append(t)
            report.Q_values.append(Q)
            report.sup_norm_history.append(sup)
            report.energy_values.append(energy)
            report.grid_energy_values.append(kinetic)
            report.circulation_values.append(circ)
            report.transported_ratio_max.append(transported_ratio_max(scalar))
            if np.any(scalar.values > SIGN_TOLERANCE * sup):
                report.sign_violations += 1

            done = t >= config.horizon
            kappa_value = None
            if step % config.euler_kappa_every == 0 or done:
                kappa_value = record_kappa(t, scalar)
            row = {"step": step, "t": t, "Q": Q, "sup_norm": sup,
                   "dt": report.dt_history[-1] if report.dt_history else 0.0,
                   "energy": energy, "grid_energy": kinetic, "circulation": circ}
            if kappa_value is not None:
                row.update({"kappa": kappa_value, "kappa_integral": report.kappa_integral[-1],
                            "aspect_ratio": report.aspect_ratios[-1]})
            if step % config.csv_every == 0 or done:
                csv_log.write(row)
            if done:
                report.termination = "horizon"
                break
            if step >= config.max_steps:
                report.termination = "max_steps"
                break

            dt = min(stable_dt(velocity, config.euler_cfl), config.horizon - t)
            for attempt in range(MAX_REJECTIONS):
                try:
                    scalar = euler_step(scalar, dt, solver, velocity, limiter)
                    break
                except CFLViolation as e:
                    report.rejected_steps += 1
                    logger.warning(f"Step {step + 1} rejected ({e.message}); halving dt")
                    dt *= 0.5
            else:
                raise NumericalConsistencyError(f"step {step + 1} rejected {MAX_REJECTIONS} times",
                                                step=step + 1)
            if not scalar.is_finite():
                raise NumericalConsistencyError(f"non-finite vorticity at step {step + 1}",
                                                step=step + 1)
            step += 1
            t = t + dt
            if config.horizon - t < 1e-12 * config.horizon:
                t = config.horizon
            report.dt_history.append(dt)
            velocity = solver.velocity(scalar)
            if step % 20 == 0:
                logger.info(f"euler step {step}: t={t:.4f} Q={Q:.10g}")

    logger.info(f"Euler finished at t={t:.4f} after {step} steps; energy drift "
                f"{report.energy_drift:.3e}, kappa integral {report.kappa_integral[-1] if report.kappa_integral else 0:.6g} "
                f"vs bound {report.bound:.6g}")
    write_json(os.path.join(output_dir, AppConstants.REPORT_JSON), report.to_dict())
    return report


@dataclass
class ComparisonReport:
    """IVSE against Euler from identical initial data"""
    dQdt_ivse: float
    dQdt_euler: float
    ivse_times: List[float]
    ivse_Q: List[float]
    ivse_termination: str
    euler_times: List[float]
    euler_Q: List[float]
    ivse_kappa: float
    euler_kappa: List[float]
    euler_aspect_ratios: List[float]
    ivse_aspect_ratio: float

    @property
    def factor(self) -> float:
        return self.dQdt_euler / self.dQdt_ivse if self.dQdt_ivse else float("nan")

    @property
    def factor_ok(self) -> bool:
        return 1.98 <= self.factor <= 2.02

    def depletion_from(self, t_start: float = 1.0) -> bool:
        """IVSE Q above Euler Q at every Euler sample from t_start on"""
        ivse_t = np.asarray(self.ivse_times)
        ivse_q = np.asarray(self.ivse_Q)
        blew_up = self.ivse_termination in ("sup_norm_cap", "blowup_imminent")
        for t, q in zip(self.euler_times, self.euler_Q):
            if t < t_start:
                continue
            if t > ivse_t[-1]:
                if not blew_up:
                    return False
                continue
            if np.interp(t, ivse_t, ivse_q) <= q:
                return False
        return True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dQdt_ivse": self.dQdt_ivse,
            "dQdt_euler": self.dQdt_euler,
            "factor": self.factor,
            "factor_ok": self.factor_ok,
            "depletion_from_t1": self.depletion_from(1.0),
            "ivse_times": self.ivse_times,
            "ivse_Q": self.ivse_Q,
            "ivse_termination": self.ivse_termination,
            "euler_times": self.euler_times,
            "euler_Q": self.euler_Q,
            "ivse_kappa": self.ivse_kappa,
            "euler_kappa": self.euler_kappa,
            "ivse_aspect_ratio": self.ivse_aspect_ratio,
            "euler_aspect_ratios": self.euler_aspect_ratios,
        }


def factor_at_start(scalar: AxiScalarField, solver: MeridianBiotSavart,
                    limiter: str = "minmod") -> Tuple[float, float]:
    """(dQ/dt IVSE, dQ/dt Euler) of one field with one velocity"""
    velocity = solver.velocity(scalar)
    return dQdt_ivse(scalar, velocity), dQdt_euler(scalar, velocity, limiter)


def compare_ivse_vs_euler(config: RunConfig, output_dir: Optional[str] = None) -> ComparisonReport:
    """t = 0 factor check on the Euler grid, then both runs to the horizon"""
    output_dir = output_dir or config.output_dir
    euler_field = initial_euler_field(config)
    rule = make_rule(config.rule_order, config.rule_levels)
    solver = MeridianBiotSavart(euler_field.grid, rule, config.delta, method="table", axial=True)
    rate_ivse, rate_euler = factor_at_start(euler_field, solver)
    logger.info(f"dQ/dt at t=0: IVSE {rate_ivse:.10g}, Euler {rate_euler:.10g}, "
                f"ratio {rate_euler / rate_ivse if rate_ivse else float('nan'):.6f}")

    ivse_config = dataclasses.replace(config, t_max=config.horizon)
    ivse = run_ivse(ivse_config, os.path.join(output_dir, "ivse"))
    euler = run_euler(config, os.path.join(output_dir, "euler"), initial=euler_field)

    initial_region = relative_support(euler_field, config.euler_threshold)
    comparison = ComparisonReport(
        dQdt_ivse=rate_ivse,
        dQdt_euler=rate_euler,
        ivse_times=ivse.times,
        ivse_Q=ivse.Q_values,
        ivse_termination=ivse.termination,
        euler_times=euler.times,
        euler_Q=euler.Q_values,
        ivse_kappa=ivse.kappa,
        euler_kappa=euler.kappa_values,
        euler_aspect_ratios=euler.aspect_ratios,
        ivse_aspect_ratio=initial_region.aspect_ratio(),
    )
    write_json(os.path.join(output_dir, AppConstants.REPORT_JSON), comparison.to_dict())
    return comparison
