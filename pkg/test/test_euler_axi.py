#!/usr/bin/env python3
"""
Tests for the flux-form axisymmetric Euler solver and its diagnostics
"""

import json
import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from axifield import AxiGrid, AxiVelocity, functional_Q, make_vortex_ring_pair
from biot_savart_axi import MeridianBiotSavart
from config import AppConstants, parse_config
from euler_axi import (EULER_COLUMNS, AnisoReport, ComparisonReport, circulation,
                       compare_ivse_vs_euler, courant_number, dQdt_euler, dQdt_ivse,
                       euler_grid, euler_rhs, euler_step, face_states, face_velocity,
                       factor_at_start, initial_euler_field, lamb_energy, minmod, run_euler,
                       stable_dt, transported_ratio_max, van_leer)
from quadrature import make_rule
from utils.errors import CFLViolation, GeometryError
from utils.field_io import read_csv_columns

RULE = make_rule(8)


def axis_field(n_r=24, n_z=16):
    grid = AxiGrid(0.0, 3.0, 0.0, 2.0, n_r, n_z)
    return make_vortex_ring_pair((1.5, 1.0), (0.5, 0.5), -1.0, grid)


def uniform_velocity(grid, u_r=0.0, u_z=0.0):
    return AxiVelocity(grid, np.full(grid.shape, u_r), np.full(grid.shape, u_z))


def test_limiters():
    a = np.array([1.0, -1.0, 2.0, 0.0, 3.0])
    b = np.array([2.0, 1.0, 0.5, 1.0, 3.0])
    assert np.array_equal(minmod(a, b), [1.0, 0.0, 0.5, 0.0, 3.0])
    assert np.allclose(van_leer(a, b), [4.0 / 3.0, 0.0, 0.8, 0.0, 3.0])


def test_face_states_reproduce_linear_data_inside():
    values = np.tile(np.arange(8, dtype=float), (3, 1))
    left, right = face_states(values, 1, odd_low=False)
    assert left.shape == right.shape == (3, 9)
    # interior faces see the exact linear profile from both sides
    assert np.allclose(left[:, 2:7], np.arange(1.5, 6.5))
    assert np.allclose(right[:, 2:7], np.arange(1.5, 6.5))
    # the low ghost of an odd reflection is -w[0]
    low_left, _ = face_states(np.full((4, 2), 2.0), 0, odd_low=True)
    assert np.all(low_left[0] == -2.0)


def test_face_velocity_vanishes_on_every_wall():
    field = axis_field()
    velocity = uniform_velocity(field.grid, 1.0, -1.0)
    radial, axial = face_velocity(velocity)
    assert radial.shape == (25, 16) and axial.shape == (24, 17)
    assert np.all(radial[0] == 0.0) and np.all(radial[-1] == 0.0)
    assert np.all(radial[1:-1] == 1.0)
    assert np.all(axial[:, 0] == 0.0) and np.all(axial[:, -1] == 0.0)
    assert np.all(axial[:, 1:-1] == -1.0)


def test_rhs_conserves_circulation():
    field = axis_field()
    velocity = MeridianBiotSavart(field.grid, RULE).velocity(field)
    rhs = euler_rhs(field, velocity).values
    assert abs(np.sum(rhs)) <= 1e-12 * np.sum(np.abs(rhs))


def test_cfl_guard_and_limiter_check():
    field = axis_field()
    velocity = uniform_velocity(field.grid, 0.0, 1.0)
    dt = stable_dt(velocity, 0.5)
    assert courant_number(velocity, dt) == pytest.approx(0.5)
    with pytest.raises(CFLViolation):
        euler_rhs(field, velocity, dt=3.0 * dt)
    with pytest.raises(GeometryError):
        euler_rhs(field, velocity, limiter="superbee")
    with pytest.raises(GeometryError):
        euler_step(field, dt)


def test_uniform_translation_moves_the_centroid():
    grid = AxiGrid(0.0, 3.0, 0.0, 6.0, 32, 144)
    field = make_vortex_ring_pair((1.5, 1.0), (0.5, 0.5), -1.0, grid)
    velocity = uniform_velocity(grid, 0.0, 0.5)
    dt = stable_dt(velocity, 0.4)
    steps = 100
    scalar = field
    for _ in range(steps):
        scalar = euler_step(scalar, dt, velocity=velocity, prescribed=True)

    def centroid(s):
        weights = s.values.sum(axis=0)
        return float(np.sum(grid.z * weights) / np.sum(weights))

    shift = centroid(scalar) - centroid(field)
    assert shift == pytest.approx(0.5 * steps * dt, rel=0.01)
    assert circulation(scalar) == pytest.approx(circulation(field), rel=1e-11)
    assert np.all(scalar.values <= 1e-12 * field.sup_norm())


def test_self_induced_steps_keep_sign_and_circulation():
    field = axis_field()
    solver = MeridianBiotSavart(field.grid, RULE)
    scalar = field
    for limiter in ("minmod", "vanleer"):
        scalar = field
        for _ in range(3):
            velocity = solver.velocity(scalar)
            scalar = euler_step(scalar, stable_dt(velocity, 0.4), solver, velocity, limiter)
        assert np.all(scalar.values <= 1e-12 * field.sup_norm())
        assert circulation(scalar) == pytest.approx(circulation(field), rel=1e-12)
        assert transported_ratio_max(scalar) <= transported_ratio_max(field) * 1.1


def test_euler_rate_of_Q_is_twice_the_stretching_rate():
    grid = AxiGrid(0.0, 3.0, 0.0, 2.0, 128, 96)
    field = make_vortex_ring_pair((1.5, 1.0), (0.5, 0.5), -1.0, grid)
    solver = MeridianBiotSavart(grid, RULE)
    rate_ivse, rate_euler = factor_at_start(field, solver)
    assert rate_ivse > 0
    assert 1.98 <= rate_euler / rate_ivse <= 2.02

    velocity = solver.velocity(field)
    assert dQdt_ivse(field, velocity) == rate_ivse
    assert dQdt_euler(field, velocity) == rate_euler


def test_run_euler(tmp_path):
    config = parse_config('{"mode": "euler"}', [
        "euler_n_r=32", "euler_n_z=16", "euler_r_max=4.0", "euler_z_max=2.0", "rule_order=8",
        "horizon=4.0", "euler_kappa_every=2", "kappa_schedule=[4, 2, 1]",
        f"output_dir={json.dumps(str(tmp_path))}"])
    grid = euler_grid(config)
    assert (grid.r_min, grid.z_min, grid.n_r, grid.n_z) == (0.0, 0.0, 32, 16)

    report = run_euler(config)
    assert report.termination == "horizon"
    assert report.times[-1] == 4.0
    assert report.sign_violations == 0
    assert report.circulation_drift <= 1e-10
    assert report.kappa_integral[0] == 0.0
    assert len(report.kappa_values) == len(report.kappa_times) == len(report.kappa_integral)
    assert report.kappa_times[-1] == 4.0
    assert all(k > 0 for k in report.kappa_values)
    assert report.bound == pytest.approx(0.5 / functional_Q(initial_euler_field(config)))

    columns = read_csv_columns(str(tmp_path / AppConstants.STEPS_CSV))
    assert list(columns) == EULER_COLUMNS
    assert columns["t"][-1] == 4.0
    with open(tmp_path / AppConstants.REPORT_JSON, "r", encoding="utf-8") as f:
        assert json.load(f)["termination"] == "horizon"


def test_run_euler_zero_datum(tmp_path):
    config = parse_config('{"mode": "euler"}', ["euler_n_r=16", "euler_n_z=8",
                                                f"output_dir={json.dumps(str(tmp_path))}"])
    zero = initial_euler_field(config).scaled(0.0)
    report = run_euler(config, initial=zero)
    assert report.termination == "zero_datum"
    assert report.energy_drift == 0.0


def test_run_euler_conserves_energy(tmp_path):
    config = parse_config('{"mode": "euler"}', [
        "euler_n_r=64", "euler_n_z=32", "euler_r_max=4.0", "euler_z_max=2.0", "rule_order=8",
        "horizon=1.0", "euler_kappa_every=100", "kappa_schedule=[4, 2, 1]",
        f"output_dir={json.dumps(str(tmp_path))}"])
    report = run_euler(config)
    assert report.termination == "horizon"
    assert report.energy_values[0] > 0
    assert report.energy_drift <= 0.02
    assert report.circulation_drift <= 1e-10

    field = initial_euler_field(config)
    solver = MeridianBiotSavart(field.grid, make_rule(8), method="table", axial=True)
    assert report.energy_values[0] == pytest.approx(lamb_energy(field, solver.velocity(field)),
                                                    rel=1e-12)


def test_aniso_report_gates_every_condition():
    healthy = AnisoReport(
        times=[0.0, 1.0], energy_values=[1.0, 0.99], circulation_values=[-2.0, -2.0],
        transported_ratio_max=[3.0, 2.99], kappa_times=[0.0, 1.0], kappa_values=[0.2, 0.19],
        kappa_integral=[0.0, 0.195], bound=0.5)
    assert healthy.passed

    rising_kappa = AnisoReport(**{**healthy.__dict__, "kappa_values": [0.2, 0.25]})
    assert not rising_kappa.kappa_nonincreasing
    assert not rising_kappa.passed

    growing_ratio = AnisoReport(**{**healthy.__dict__, "transported_ratio_max": [3.0, 3.1]})
    assert growing_ratio.transported_ratio_drift == pytest.approx(0.1 / 3.0)
    assert not growing_ratio.passed

    leaking = AnisoReport(**{**healthy.__dict__, "circulation_values": [-2.0, -1.9]})
    assert not leaking.passed
    assert healthy.to_dict()["passed"] is True


def test_compare_writes_both_runs_and_the_factor(tmp_path):
    config = parse_config('{"mode": "compare"}', [
        "n_r=16", "n_z=16", "rule_order=8", "kappa_schedule=[4, 2, 1]",
        "euler_n_r=48", "euler_n_z=24", "euler_r_max=4.0", "euler_z_max=2.0",
        "horizon=0.5", "euler_kappa_every=100", "max_steps=200"])
    report = compare_ivse_vs_euler(config, str(tmp_path))

    assert report.dQdt_ivse > 0
    assert report.factor == pytest.approx(2.0, rel=0.05)
    assert report.euler_times[0] == 0.0 and report.euler_times[-1] == 0.5
    assert report.ivse_times[0] == 0.0
    assert report.ivse_Q[0] > 0 and report.euler_Q[0] > 0
    assert report.ivse_kappa > 0 and report.euler_kappa
    for sub in ("ivse", "euler"):
        assert os.path.exists(tmp_path / sub / AppConstants.STEPS_CSV)
        assert os.path.exists(tmp_path / sub / AppConstants.REPORT_JSON)
    with open(tmp_path / AppConstants.REPORT_JSON, "r", encoding="utf-8") as f:
        written = json.load(f)
    assert written["factor"] == pytest.approx(report.factor)
    assert written["depletion_from_t1"] == report.depletion_from(1.0)



def test_comparison_report_depletion():
    report = ComparisonReport(
        dQdt_ivse=1.0, dQdt_euler=2.0,
        ivse_times=[0.0, 1.0, 2.0], ivse_Q=[1.0, 1.5, 3.0], ivse_termination="sup_norm_cap",
        euler_times=[0.0, 1.0, 2.0, 3.0], euler_Q=[1.0, 1.2, 1.3, 1.35],
        ivse_kappa=0.1, euler_kappa=[0.1, 0.08], euler_aspect_ratios=[1.0, 1.4],
        ivse_aspect_ratio=1.0)
    assert report.factor == 2.0
    assert report.factor_ok
    assert report.depletion_from(1.0)

    stalled = ComparisonReport(**{**report.__dict__, "ivse_termination": "t_max"})
    assert not stalled.depletion_from(1.0)
    overtaken = ComparisonReport(**{**report.__dict__, "euler_Q": [1.0, 1.6, 1.3, 1.35]})
    assert not overtaken.depletion_from(1.0)
    assert report.to_dict()["depletion_from_t1"] is True


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
