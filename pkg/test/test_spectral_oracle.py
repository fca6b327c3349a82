#!/usr/bin/env python3
"""
Tests for the periodic pseudo-spectral oracle and its cross-checks
"""

import json
import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from axifield import AxiGrid, AxiScalarField, VortexRingPair, make_vortex_ring_pair
from biot_savart_axi import evaluate_velocity_at
from config import parse_config
from spectral_oracle import (MeridianSamples, SpectralVectorField, axi_stretching_samples,
                             axi_velocity_samples, axisymmetric_l2_norm, interpolate_meridian,
                             bilinear_B, biot_savart_3d, box_doubling_study, dealias_mask,
                             embed_axisymmetric, gradient_hs_norm, helmholtz_project,
                             hilbert_algebra_ratio, hs_inner, hs_norm, lattice,
                             measure_bilinear_constant, meridian_pullback, picard_solve,
                             random_divergence_free, random_field, relative_l2, run_identity_suite,
                             single_mode_velocity, single_mode_vorticity, sobolev_weight)
from quadrature import make_rule
from utils.errors import SpectralDomainError

L = 2.0 * np.pi
N = 16


def rng():
    return np.random.default_rng(7)


def test_lattice_and_weights():
    x = lattice(4.0, 8)
    assert x[0] == -2.0 and x[4] == 0.0
    assert np.allclose(np.diff(x), 0.5)
    assert np.all(sobolev_weight(N, L, 0.0) == 1.0)
    weight = sobolev_weight(N, L, 1.0)
    assert weight[1, 0, 0] == pytest.approx(1.0 + 4.0 * np.pi ** 2 / L ** 2)
    mask = dealias_mask(N, L)
    assert mask[0, 0, 0] and mask[5, 0, 0] and not mask[6, 0, 0]


def test_field_validation():
    with pytest.raises(SpectralDomainError):
        SpectralVectorField(L, 15, np.zeros((3, 15, 15, 15), dtype=complex))
    with pytest.raises(SpectralDomainError):
        SpectralVectorField(L, N, np.zeros((3, N, N, 2), dtype=complex))
    with pytest.raises(SpectralDomainError):
        SpectralVectorField(-1.0, N, np.zeros((3, N, N, N), dtype=complex))
    a = SpectralVectorField.zeros(L, N)
    b = SpectralVectorField.zeros(2.0 * L, N)
    with pytest.raises(SpectralDomainError):
        a + b


def test_l2_norm_is_parseval():
    v = random_field(L, N, rng())
    phys = v.physical()
    expected = np.sqrt(np.sum(phys ** 2) * (L / N) ** 3)
    assert hs_norm(v, 0.0) == pytest.approx(expected, rel=1e-12)


def test_helmholtz_projection():
    v = random_field(L, N, rng())
    p = helmholtz_project(v)
    q = v - p
    assert p.divergence_free
    assert p.divergence_residual() < 1e-13
    assert hs_norm(helmholtz_project(p) - p, 1.7) <= 1e-13 * hs_norm(p, 1.7)
    for s in (0.0, 1.0, 2.5):
        assert abs(hs_inner(p, q, s)) <= 1e-12 * hs_norm(p, s) * hs_norm(q, s)
        assert hs_norm(v, s) ** 2 == pytest.approx(hs_norm(p, s) ** 2 + hs_norm(q, s) ** 2, rel=1e-12)


def test_biot_savart_isometry():
    omega = random_divergence_free(L, N, rng())
    u = biot_savart_3d(omega)
    assert u.divergence_residual() < 1e-13
    for s in (0.0, 1.0, 1.7):
        assert gradient_hs_norm(u, s) == pytest.approx(hs_norm(omega, s), rel=1e-12)


def test_single_mode_closed_form():
    omega = single_mode_vorticity(L, N, amplitude=2.0)
    u = biot_savart_3d(omega).physical()
    exact = single_mode_velocity(L, N, amplitude=2.0)
    assert np.max(np.abs(u - exact)) <= 1e-12 * np.max(np.abs(exact))


def test_biot_savart_rejects_nonzero_mean():
    constant = SpectralVectorField.from_physical(L, np.ones((3, N, N, N)))
    with pytest.raises(SpectralDomainError):
        biot_savart_3d(constant)


def test_bilinear_operator():
    generator = rng()
    w = random_divergence_free(L, N, generator)
    v = random_divergence_free(L, N, generator)
    b_wv = bilinear_B(w, v)
    b_vw = bilinear_B(v, w)
    assert hs_norm(b_wv - b_vw, 1.7) <= 1e-12 * hs_norm(b_wv, 1.7)
    assert b_wv.divergence_residual() < 1e-12
    small = SpectralVectorField.zeros(L, 6)
    with pytest.raises(SpectralDomainError):
        bilinear_B(small, small)


def test_constant_estimates_are_finite():
    constant = measure_bilinear_constant(L, 8, 1.7, 3, rng())
    assert len(constant.ratios) == 3
    assert all(np.isfinite(r) and r > 0 for r in constant.ratios)
    assert constant.spread >= 1.0
    ratios = hilbert_algebra_ratio(L, 8, 1.7, 3, rng())
    assert all(np.isfinite(r) and r > 0 for r in ratios)


def test_picard_converges_for_small_data():
    omega0 = single_mode_vorticity(L, 8, amplitude=0.05)
    result = picard_solve(omega0, 1.7, T=0.1, max_iter=30, tol=1e-10, substeps=8)
    assert result.converged
    assert not result.non_contraction
    assert all(r < 1.0 for r in result.ratios)
    assert result.norm_bound_ok
    assert result.norm_history[0][1] == pytest.approx(result.initial_norm)
    assert result.solution.divergence_residual() < 1e-12
    with pytest.raises(SpectralDomainError):
        picard_solve(omega0, 1.7, T=0.0)


def small_ring():
    profile = VortexRingPair((1.2, 0.8), (0.4, 0.4), -1.0)
    grid = AxiGrid(0.6, 1.8, 0.3, 1.3, 40, 40)
    meridian = make_vortex_ring_pair(profile.center, profile.radii, profile.amplitude, grid)
    return profile, meridian


def test_axi_samples_use_the_given_rule_and_delta():
    _, meridian = small_ring()
    samples = MeridianSamples(r=np.array([1.0, 1.25]), z=np.array([-0.7, 0.45, 0.9]),
                              values=np.zeros((2, 3)))
    rule = make_rule(12, 1)
    u_r, u_z = axi_velocity_samples(meridian, samples, rule, 0.05)
    R, Z = samples.mesh()
    ref_r, ref_z = evaluate_velocity_at(meridian, R.ravel(), Z.ravel(), rule, 0.05)
    assert np.array_equal(u_r, ref_r.reshape(R.shape))
    assert np.array_equal(u_z, ref_z.reshape(R.shape))
    wider, _ = axi_velocity_samples(meridian, samples, rule, 0.2)
    assert not np.allclose(wider, u_r, rtol=1e-6, atol=0.0)


def test_meridian_interpolation_is_exact_for_cubics():
    grid = AxiGrid(1.0, 2.0, 0.5, 1.5, 12, 10)
    R, Z = grid.mesh()
    field = AxiScalarField(grid, R ** 3 - 2.0 * R * Z ** 2 + Z)
    r = np.array([[1.3, 1.51], [1.77, 1.2]])
    z = np.array([[0.8, -1.1], [1.01, 2.5]])
    values = interpolate_meridian(field, r, z)
    expected = r ** 3 - 2.0 * r * z ** 2 + np.abs(z)
    assert np.allclose(values[:, 0], expected[:, 0], rtol=1e-12)
    assert values[0, 1] == pytest.approx(expected[0, 1], rel=1e-12)
    assert values[1, 1] == 0.0


def test_stretching_samples_vanish_off_the_support():
    profile, meridian = small_ring()
    samples = MeridianSamples(r=np.array([0.3, 1.2, 2.5]), z=np.array([-0.8, 0.0, 0.8]),
                              values=np.zeros((3, 3)))
    rate = axi_stretching_samples(meridian, samples, make_rule(16), profile=profile)
    assert rate[0].tolist() == [0.0, 0.0, 0.0] and rate[2].tolist() == [0.0, 0.0, 0.0]
    # odd omega_theta, even u_r: the rate flips with z
    assert rate[1, 0] == pytest.approx(-rate[1, 2], rel=1e-12)
    assert rate[1, 1] == 0.0
    assert rate[1, 2] != 0.0


def test_embedding_margin_enforced():
    profile, _ = small_ring()
    with pytest.raises(SpectralDomainError):
        embed_axisymmetric(profile, 4.0, 16)


def test_embedded_ring_matches_axisymmetric_modules():
    profile, meridian = small_ring()
    length, n = 6.4, 64
    embedded = embed_axisymmetric(profile, length, n)
    assert embedded.omega.divergence_residual() < 1e-12
    assert hs_norm(embedded.omega, 0.0) == pytest.approx(axisymmetric_l2_norm(meridian), rel=0.05)

    u = biot_savart_3d(embedded.omega)
    core = 0.25 * length
    u_r = meridian_pullback(u, "r").restricted(core, core)
    u_z = meridian_pullback(u, "z").restricted(core, core)
    axi_r, axi_z = axi_velocity_samples(meridian, u_r)
    _, statement_z = axi_velocity_samples(meridian, u_r, axial_form="statement")

    radial_error = relative_l2(u_r.values, axi_r)
    axial_error = relative_l2(u_z.values, axi_z)
    assert radial_error < 0.25
    assert axial_error < 0.25
    assert relative_l2(u_z.values, statement_z) > 2.0 * axial_error


def test_embedding_from_grid_field():
    _, meridian = small_ring()
    embedded = embed_axisymmetric(meridian, 8.0, 32)
    assert embedded.raw_divergence >= 0
    assert embedded.omega.divergence_residual() < 1e-12
    with pytest.raises(SpectralDomainError):
        meridian_pullback(embedded.omega, "phi")


def test_box_doubling_study_shapes():
    profile, meridian = small_ring()
    study = box_doubling_study(profile, meridian, 6.4, 16, doublings=1)
    assert study.lengths == [6.4, 12.8]
    assert all(np.isfinite(e) for e in study.errors)
    assert set(study.to_dict()) == {"lengths", "errors", "decreasing"}


def test_identity_suite_runs_on_a_small_configuration(tmp_path):
    config = parse_config('{"mode": "oracle"}', [
        "n_r=24", "n_z=24", "spectral_n=16", "random_n=8", "picard_n=8", "random_pairs=2",
        "picard_substeps=8", "picard_max_iter=10", f"output_dir={json.dumps(str(tmp_path))}"])
    report = run_identity_suite(config)
    names = [c.name for c in report.checks]
    for expected in ("vorticity_isometry", "helmholtz_idempotent", "helmholtz_orthogonal",
                     "helmholtz_pythagoras", "single_mode_biot_savart", "bilinear_symmetric",
                     "bilinear_divergence_free", "picard_contraction_ratio", "embedding_divergence",
                     "embedding_l2_norm", "axi_u_r_match", "axi_u_z_match",
                     "axi_u_z_statement_form_rejected", "axi_stretching_match",
                     "box_doubling_error_decreases"):
        assert expected in names
    by_name = {c.name: c for c in report.checks}
    for exact in ("vorticity_isometry", "helmholtz_idempotent", "helmholtz_orthogonal",
                  "helmholtz_pythagoras", "bilinear_symmetric", "bilinear_divergence_free"):
        assert by_name[exact].passed, exact
    document = report.to_dict()
    assert document["passed"] == report.passed
    assert "box" in document["conventions"]


def test_axisymmetric_cross_checks_pass_at_the_default_resolution(tmp_path):
    config = parse_config('{"mode": "oracle"}', [
        "random_pairs=2", "picard_substeps=8", f"output_dir={json.dumps(str(tmp_path))}"])
    assert (config.spectral_n, config.spectral_box, config.n_r, config.rule_order) == (128, 10.0, 128, 32)
    by_name = {c.name: c for c in run_identity_suite(config).checks}
    for name in ("embedding_l2_norm", "axi_u_r_match", "axi_u_z_match",
                 "axi_u_z_statement_form_rejected", "axi_stretching_match",
                 "box_doubling_error_decreases"):
        assert by_name[name].passed, (name, by_name[name].value)
    assert by_name["axi_stretching_match"].value <= 0.02
    assert by_name["axi_u_z_match"].value <= 0.02



if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
