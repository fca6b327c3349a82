#!/usr/bin/env python3
"""
Tests for meridian grids, the ring-pair datum and the geometry validators
"""

import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from axifield import (AxiGrid, AxiScalarField, VortexRingPair, functional_Q, make_vortex_ring_pair,
                      relative_support, support_region, validate_geometry)
from utils.errors import ConfigError, EmptySupportError, GeometryError


def small_grid():
    return AxiGrid(1.0, 3.0, 0.25, 2.0, 32, 28)


def ring(grid=None, amplitude=-1.0):
    return make_vortex_ring_pair((2.0, 1.0), (0.5, 0.5), amplitude, grid or small_grid())


def test_grid_geometry():
    g = small_grid()
    assert g.dr == pytest.approx(2.0 / 32)
    assert g.dz == pytest.approx(1.75 / 28)
    assert g.r[0] == pytest.approx(1.0 + 0.5 * g.dr)
    assert g.z[-1] == pytest.approx(2.0 - 0.5 * g.dz)
    R, Z = g.mesh()
    assert R.shape == Z.shape == (32, 28)
    assert g.half_diagonal() == pytest.approx(0.5 * np.hypot(g.dr, g.dz))
    assert g.carries_ivse_support()
    assert g.refined().shape == (64, 56)


def test_invalid_grids():
    with pytest.raises(GeometryError):
        AxiGrid(1.0, 3.0, 0.0, 2.0, 1, 8)
    with pytest.raises(GeometryError):
        AxiGrid(3.0, 1.0, 0.0, 2.0, 8, 8)
    with pytest.raises(GeometryError):
        AxiGrid(-1.0, 1.0, 0.0, 2.0, 8, 8)


def test_field_is_read_only_and_shape_checked():
    g = small_grid()
    field = AxiScalarField(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        field.values[0, 0] = 1.0
    with pytest.raises(GeometryError):
        AxiScalarField(g, np.zeros((3, 3)))
    assert field.is_zero()
    assert field.sup_norm() == 0.0


def test_ring_pair_sign_and_boundary():
    field = ring()
    report = validate_geometry(field)
    assert report.passed
    assert report.sign_ok and report.boundary_ok and report.finite
    assert np.all(field.values <= 0)
    assert field.sup_norm() > 0
    r_lo, r_hi, z_lo, z_hi = report.support_box
    assert 1.5 < r_lo and r_hi < 2.5
    assert 0.5 < z_lo and z_hi < 1.5


def test_ring_pair_is_odd_in_z():
    profile = VortexRingPair((2.0, 1.0), (0.5, 0.5), -1.0)
    r = np.linspace(1.6, 2.4, 7)
    z = np.linspace(0.6, 1.4, 7)
    assert np.array_equal(profile(r, -z), -profile(r, z))
    assert np.array_equal(profile(r, z), profile.upper(r, z))
    assert profile.upper(2.0, 1.0) == pytest.approx(-np.exp(-1.0))
    assert profile.upper(2.6, 1.0) == 0.0


def test_functional_Q_matches_adaptive_quadrature():
    field = ring(AxiGrid(1.0, 3.0, 0.25, 2.0, 64, 56))
    exact = VortexRingPair((2.0, 1.0), (0.5, 0.5), -1.0).exact_Q()
    assert exact > 0
    assert functional_Q(field) == pytest.approx(exact, rel=1e-3)


def test_functional_Q_is_linear_in_amplitude():
    q1 = functional_Q(ring(amplitude=-1.0))
    q3 = functional_Q(ring(amplitude=-3.0))
    assert q3 == pytest.approx(3.0 * q1, rel=1e-14)
    assert functional_Q(ring(amplitude=0.0)) == 0.0


def test_ring_pair_rejects_bad_data():
    g = small_grid()
    with pytest.raises(ConfigError):
        make_vortex_ring_pair((2.0, 1.0), (0.5, 0.5), 1.0, g)
    with pytest.raises(ConfigError):
        make_vortex_ring_pair((0.4, 1.0), (0.5, 0.5), -1.0, g)
    with pytest.raises(ConfigError):
        make_vortex_ring_pair((2.0, 0.4), (0.5, 0.5), -1.0, g)
    with pytest.raises(ConfigError):
        make_vortex_ring_pair((2.7, 1.0), (0.5, 0.5), -1.0, g)
    with pytest.raises(ConfigError):
        make_vortex_ring_pair((2.0, 1.0), (0.0, 0.5), -1.0, g)


def test_validate_geometry_flags_violations():
    g = small_grid()
    values = np.array(ring().values)
    values[10, 10] = 0.25
    values[0, 5] = -0.1
    report = validate_geometry(AxiScalarField(g, values))
    assert not report.sign_ok
    assert report.max_positive == pytest.approx(0.25)
    assert report.max_positive_index == (10, 10)
    assert not report.boundary_ok
    assert report.boundary_max_abs == pytest.approx(0.1)
    assert not report.passed
    assert report.to_dict()["sign_violations"] == 1


def test_support_region():
    field = ring()
    region = support_region(field, 0.0)
    assert region.cell_count == int(np.count_nonzero(field.values))
    assert np.array_equal(region.mask(), field.values != 0)
    assert region.contains(2.0, 1.0)
    assert not region.contains(1.1, 0.3)
    assert not region.contains(5.0, 1.0)

    boundary = {tuple(b) for b in region.boundary_indices()}
    cells = {tuple(c) for c in region.indices}
    assert boundary and boundary < cells
    assert region.aspect_ratio() == pytest.approx(1.0, rel=0.1)

    tight = relative_support(field, 0.5)
    assert tight.cell_count < region.cell_count


def test_support_region_errors():
    field = ring()
    with pytest.raises(EmptySupportError):
        support_region(field, 10.0)
    with pytest.raises(ConfigError):
        support_region(field, -1.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
