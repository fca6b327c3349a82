#!/usr/bin/env python3
"""
dynamics.py - Vortex stretching runs

Exponential and RK4 steppers, the dQ/dt identity and the blowup bookkeeping.
"""

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from axifield import (AxiGrid, AxiScalarField, functional_Q, make_vortex_ring_pair,
                      validate_geometry)
from biot_savart_axi import MeridianBiotSavart, compute_u_r, mirror_check, stretching_rate
from config import AppConstants, RunConfig
from kappa import KappaEstimate, kappa_of_field
from quadrature import PhiQuadRule, g_kernel, make_rule
from utils.errors import (BlowupImminent, GeometryError, NumericalConsistencyError,
                          SnapshotFormatError)
from utils.field_io import CsvLog, read_snapshot, write_json, write_snapshot
from utils.parallel import chunked_map

logger = logging.getLogger(__name__)

STEP_COLUMNS = ["step", "t", "Q", "sup_norm", "dt", "lower_curve", "violation"]

# exp() overflows just above 709
MAX_EXPONENT = 700.0
RATE_FLOOR = 1e-300
EVENNESS_TOL = 1e-12


@dataclass
class BlowupReport:
    """Q(t) trace of an IVSE run confronted with the Riccati bound"""
    times: List[float] = field(default_factory=list)
    Q_values: List[float] = field(default_factory=list)
    kappa: float = 0.0
    kappa_conservative: float = 0.0
    Q0: float = 0.0
    predicted_T_upper: float = float("inf")
    predicted_T_upper_conservative: float = float("inf")
    lower_curve_violations: int = 0
    observed_blowup_time_estimate: Optional[float] = None
    dt_history: List[float] = field(default_factory=list)
    sup_norm_history: List[float] = field(default_factory=list)
    termination: str = "not_started"
    sign_violations: int = 0
    support_changes: int = 0
    evenness_residual: Optional[float] = None
    kappa_estimate: Optional[Dict[str, Any]] = None

    @property
    def steps(self) -> int:
        return len(self.dt_history)

    @property
    def q_strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.Q_values[:-1], self.Q_values[1:]))

    @property
    def bound_respected(self) -> bool:
        """Extrapolated blowup time not later than 1/(kappa_conservative Q0)"""
        if self.observed_blowup_time_estimate is None:
            return True
        return self.observed_blowup_time_estimate <= self.predicted_T_upper_conservative

    @property
    def evenness_ok(self) -> bool:
        """u_r mirror residual within EVENNESS_TOL of max(1, final sup norm)"""
        if self.evenness_residual is None:
            return True
        scale = max(1.0, self.sup_norm_history[-1]) if self.sup_norm_history else 1.0
        return self.evenness_residual <= EVENNESS_TOL * scale

    @property
    def passed(self) -> bool:
        return (self.lower_curve_violations == 0 and self.sign_violations == 0
                and self.support_changes == 0 and self.bound_respected
                and self.q_strictly_increasing and self.evenness_ok)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "times": self.times,
            "Q_values": self.Q_values,
            "kappa": self.kappa,
            "kappa_conservative": self.kappa_conservative,
            "Q0": self.Q0,
            "predicted_T_upper": self.predicted_T_upper,
            "predicted_T_upper_conservative": self.predicted_T_upper_conservative,
            "lower_curve_violations": self.lower_curve_violations,
            "observed_blowup_time_estimate": self.observed_blowup_time_estimate,
            "dt_history": self.dt_history,
            "sup_norm_history": self.sup_norm_history,
            "steps": self.steps,
            "termination": self.termination,
            "sign_violations": self.sign_violations,
            "support_changes": self.support_changes,
            "evenness_residual": self.evenness_residual,
            "evenness_ok": self.evenness_ok,
            "q_strictly_increasing": self.q_strictly_increasing,
            "bound_respected": self.bound_respected,
            "kappa_estimate": self.kappa_estimate,
            "passed": self.passed,
        }


@dataclass
class DQdtReport:
    """Both sides of the dQ/dt identity at one instant"""
    lhs: float
    rhs: float
    relative_residual: float
    Q: float
    kappa_Q2: Optional[float] = None
    tolerance: float = 1e-6

    @property
    def lower_bound_ok(self) -> Optional[bool]:
        if self.kappa_Q2 is None:
            return None
        return self.rhs >= self.kappa_Q2 * (1.0 - self.tolerance)

    def to_dict(self) -> Dict[str, Any]:
        return {"lhs": self.lhs, "rhs": self.rhs, "relative_residual": self.relative_residual,
                "Q": self.Q, "kappa_Q2": self.kappa_Q2, "lower_bound_ok": self.lower_bound_ok}


def _u_r(scalar: AxiScalarField, rule: PhiQuadRule, delta: Optional[float],
         solver: Optional[MeridianBiotSavart]) -> AxiScalarField:
    if solver is not None:
        return solver.u_r(scalar)
    return compute_u_r(scalar, rule, delta)


def ivse_rhs(scalar: AxiScalarField, rule: PhiQuadRule, delta: Optional[float] = None,
             solver: Optional[MeridianBiotSavart] = None) -> AxiScalarField:
    """(u_r / r) omega_theta; vanishes wherever omega_theta does"""
    return stretching_rate(scalar, _u_r(scalar, rule, delta, solver))


def growth_rate(scalar: AxiScalarField, u_r: AxiScalarField) -> np.ndarray:
    """u_r / r on the grid"""
    return u_r.values / scalar.grid.r[:, None]


def _exponential_update(scalar: AxiScalarField, rate: np.ndarray, dt: float) -> AxiScalarField:
    exponent = dt * rate
    # only cells carrying vorticity matter; elsewhere the product is zero anyway
    active = exponent[scalar.values != 0]
    if active.size and np.max(np.abs(active)) > MAX_EXPONENT:
        raise BlowupImminent("exponential growth factor out of range",
                             max_exponent=float(np.max(np.abs(active))), dt=dt)
    return scalar.with_values(scalar.values * np.exp(np.clip(exponent, -MAX_EXPONENT, MAX_EXPONENT)))


def step_exponential(scalar: AxiScalarField, dt: float, rule: PhiQuadRule,
                     delta: Optional[float] = None,
                     solver: Optional[MeridianBiotSavart] = None) -> AxiScalarField:
    """omega <- omega exp(dt u_r / r) with u_r frozen at the start of the step"""
    if dt < 0:
        raise GeometryError("time step must be nonnegative", dt=dt)
    if dt == 0:
        return scalar
    u_r = _u_r(scalar, rule, delta, solver)
    return _exponential_update(scalar, growth_rate(scalar, u_r), dt)


def step_rk4(scalar: AxiScalarField, dt: float, rule: PhiQuadRule,
             delta: Optional[float] = None,
             solver: Optional[MeridianBiotSavart] = None) -> AxiScalarField:
    """Classical four-stage step; sign is not preserved exactly"""
    if dt < 0:
        raise GeometryError("time step must be nonnegative", dt=dt)
    if dt == 0:
        return scalar

    def rhs(values: np.ndarray) -> np.ndarray:
        return ivse_rhs(scalar.with_values(values), rule, delta, solver).values

    w = scalar.values
    k1 = rhs(w)
    k2 = rhs(w + 0.5 * dt * k1)
    k3 = rhs(w + 0.5 * dt * k2)
    k4 = rhs(w + dt * k3)
    return scalar.with_values(w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def verify_dQdt(scalar: AxiScalarField, rule: PhiQuadRule, delta: Optional[float] = None,
                kappa: Optional[float] = None,
                solver: Optional[MeridianBiotSavart] = None) -> DQdtReport:
    """-sum r u_r omega dA against the symmetrized double sum of the image kernel G"""
    g = scalar.grid
    Q = functional_Q(scalar)
    if scalar.is_zero():
        return DQdtReport(lhs=0.0, rhs=0.0, relative_residual=0.0, Q=Q,
                          kappa_Q2=None if kappa is None else 0.0)

    u_r = _u_r(scalar, rule, delta, solver)
    lhs = float(-np.sum(g.r[:, None] * u_r.values * scalar.values) * g.cell_area)

    idx = np.argwhere(scalar.values != 0)
    r = g.r[idx[:, 0]]
    z = g.z[idx[:, 1]]
    weights = r * r * scalar.values[idx[:, 0], idx[:, 1]] * g.cell_area
    m = r.size
    chunk = max(1, 2_000_000 // (m * rule.size))

    def work(start: int, stop: int) -> float:
        block = g_kernel(r[start:stop, None], z[start:stop, None], r[None, :], z[None, :], rule)
        return float(np.sum(weights[start:stop] * np.sum(block * weights, axis=1)))

    rhs = sum(chunked_map(work, m, chunk)) / (2.0 * np.pi)
    scale = max(abs(lhs), abs(rhs))
    residual = abs(lhs - rhs) / scale if scale > 0 else 0.0
    report = DQdtReport(lhs=lhs, rhs=rhs, relative_residual=residual, Q=Q,
                        kappa_Q2=None if kappa is None else kappa * Q * Q)
    logger.info(f"dQ/dt: lhs={lhs:.10g} rhs={rhs:.10g} residual={residual:.3e}")
    return report


def lower_curve(Q0: float, kappa: float, t: float) -> float:
    """Q0 / (1 - kappa Q0 t), infinite once the denominator reaches zero"""
    denominator = 1.0 - kappa * Q0 * t
    if denominator <= 0:
        return float("inf")
    return Q0 / denominator


def estimate_blowup_time(times: Sequence[float], sup_norms: Sequence[float],
                         decade: float = 10.0) -> Optional[float]:
    """Zero of the linear fit of 1/sup_norm over the last decade of growth"""
    t = np.asarray(times, dtype=float)
    s = np.asarray(sup_norms, dtype=float)
    if t.size < 3 or not np.all(s > 0):
        return None
    below = np.flatnonzero(s < s[-1] / decade)
    start = int(below[-1]) + 1 if below.size else 0
    tail = slice(start, t.size)
    if t.size - start < 3:
        return None
    slope, intercept = np.polyfit(t[tail], 1.0 / s[tail], 1)
    if slope >= 0:
        return None
    return float(-intercept / slope)


def load_snapshot(path: str) -> AxiScalarField:
    """Snapshot written by a previous run, validated as an IVSE datum"""
    snapshot = read_snapshot(path)
    report = validate_geometry(snapshot.field)
    if not report.finite:
        raise SnapshotFormatError("snapshot holds non-finite values", path=path)
    if not report.sign_ok:
        raise GeometryError("snapshot violates the sign condition", path=path,
                            max_positive=report.max_positive)
    return snapshot.field


def initial_field(config: RunConfig, grid: Optional[AxiGrid] = None) -> AxiScalarField:
    """Ring pair from the config, or a snapshot when initial_snapshot is set"""
    if config.initial_snapshot:
        return load_snapshot(config.initial_snapshot)
    if grid is None:
        grid = AxiGrid(config.r_min, config.r_max, config.z_min, config.z_max,
                       config.n_r, config.n_z)
    return make_vortex_ring_pair((config.center_r, config.center_z),
                                 (config.radius_r, config.radius_z), config.amplitude, grid)


def mirror_points(scalar: AxiScalarField, count: int = 8) -> List[Tuple[float, float]]:
    """Deterministic mirror points spread over the grid interior"""
    g = scalar.grid
    rs = np.linspace(g.r_min, g.r_max, count + 2)[1:-1]
    zs = np.linspace(g.z_min, g.z_max, count + 2)[1:-1]
    return [(float(r), float(z)) for r, z in zip(rs, zs[::-1])]


def run_ivse(config: RunConfig, output_dir: Optional[str] = None,
             kappa_estimate: Optional[KappaEstimate] = None,
             initial: Optional[AxiScalarField] = None) -> BlowupReport:
    """Integrate until the sup-norm cap, t_max or max_steps; write CSV and report"""
    output_dir = output_dir or config.output_dir
    scalar = initial if initial is not None else initial_field(config)
    grid = scalar.grid

    geometry = validate_geometry(scalar)
    if not geometry.finite:
        raise NumericalConsistencyError("initial datum is not finite")
    if not geometry.sign_ok:
        raise GeometryError("initial datum violates the sign condition",
                            max_positive=geometry.max_positive,
                            index=geometry.max_positive_index)

    report = BlowupReport()
    Q0 = functional_Q(scalar)
    sup0 = scalar.sup_norm()
    report.Q0 = Q0
    report.times.append(0.0)
    report.Q_values.append(Q0)
    report.sup_norm_history.append(sup0)

    csv_path = os.path.join(output_dir, AppConstants.STEPS_CSV)
    with CsvLog(csv_path, STEP_COLUMNS) as csv_log:
        csv_log.write({"step": 0, "t": 0.0, "Q": Q0, "sup_norm": sup0, "dt": 0.0,
                       "lower_curve": Q0, "violation": False})

        if scalar.is_zero():
            report.termination = "zero_datum"
            logger.info("Zero initial datum: Q stays 0, nothing to integrate")
            write_json(os.path.join(output_dir, AppConstants.REPORT_JSON), report.to_dict())
            return report

        rule = make_rule(config.rule_order, config.rule_levels)
        if kappa_estimate is None:
            kappa_estimate = kappa_of_field(scalar, config.ivse_threshold * sup0, rule,
                                            config.kappa_schedule, config.kappa_safety)
        kappa = kappa_estimate.value
        kappa_c = kappa_estimate.conservative
        report.kappa = kappa
        report.kappa_conservative = kappa_c
        report.kappa_estimate = kappa_estimate.to_dict()
        report.predicted_T_upper = 1.0 / (kappa * Q0)
        report.predicted_T_upper_conservative = 1.0 / (kappa_c * Q0)
        logger.info(f"Q0={Q0:.10g} kappa={kappa:.6g} T_upper={report.predicted_T_upper:.6g}")

        started = time.perf_counter()
        solver = MeridianBiotSavart(grid, rule, config.delta, method="table", axial=False)
        logger.info(f"Velocity table ready in {time.perf_counter() - started:.1f}s")

        points = mirror_points(scalar)
        support0 = scalar.values != 0
        t = 0.0
        step = 0
        report.termination = "max_steps"
        try:
            while step < config.max_steps:
                u_r = solver.u_r(scalar)
                rate = growth_rate(scalar, u_r)
                active = np.abs(rate[support0]) if np.any(support0) else np.zeros(1)
                dt = config.cfl_factor / max(float(np.max(active)), RATE_FLOOR)
                dt = min(dt, config.t_max - t)

                if config.stepper == "rk4":
                    scalar = step_rk4(scalar, dt, rule, solver=solver)
                else:
                    scalar = _exponential_update(scalar, rate, dt)
                step += 1
                t += dt

                if not scalar.is_finite():
                    raise NumericalConsistencyError(f"non-finite vorticity at step {step}", step=step)
                Q = functional_Q(scalar)
                sup = scalar.sup_norm()
                floor = lower_curve(Q0, kappa, t)
                violation = Q < floor * (1.0 - config.lower_curve_tol)
                if violation:
                    report.lower_curve_violations += 1
                    logger.warning(f"Lower curve violated at step {step}: Q={Q:.10g} < {floor:.10g}")
                if np.any(scalar.values > 0):
                    report.sign_violations += 1
                if not np.array_equal(scalar.values != 0, support0):
                    report.support_changes += 1

                report.times.append(t)
                report.Q_values.append(Q)
                report.dt_history.append(dt)
                report.sup_norm_history.append(sup)
                if step % config.csv_every == 0:
                    csv_log.write({"step": step, "t": t, "Q": Q, "sup_norm": sup, "dt": dt,
                                   "lower_curve": floor, "violation": violation})
                if config.snapshot_every and step % config.snapshot_every == 0:
                    write_snapshot(os.path.join(output_dir, AppConstants.SNAPSHOT_DIR,
                                                f"step_{step:06d}.bin"),
                                   scalar, {"step": step, "t": t, "Q": Q})
                if step % 100 == 0:
                    logger.info(f"step {step}: t={t:.6g} Q={Q:.10g} sup={sup:.6g}")

                if sup >= config.sup_norm_cap * sup0:
                    report.termination = "sup_norm_cap"
                    break
                if t >= config.t_max:
                    report.termination = "t_max"
                    break
        except BlowupImminent as e:
            report.termination = "blowup_imminent"
            logger.info(f"Run ended at step {step}: {e.message}")

    report.observed_blowup_time_estimate = estimate_blowup_time(report.times,
                                                                report.sup_norm_history)
    mirror = mirror_check(scalar, points, rule, solver.delta)
    report.evenness_residual = mirror.radial_even_residual
    logger.info(f"IVSE finished ({report.termination}) after {step} steps, "
                f"T_obs={report.observed_blowup_time_estimate}, "
                f"T_upper={report.predicted_T_upper_conservative:.6g}")
    write_json(os.path.join(output_dir, AppConstants.REPORT_JSON), report.to_dict())
    return report
