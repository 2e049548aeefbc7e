import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latres.distortion import (
    CutoffDilationField,
    DistortionSpec,
    InadmissibleDistortion,
    ResonanceRegion,
    SineField,
    essential_curve,
    jacobian,
    kinetic_symbol_continuum,
    kinetic_symbol_lattice,
    make_field,
    phi,
    smooth_step,
    sqrt_jacobian,
)
from latres.grid import GalerkinGrid, LatticeGrid


def test_identity_at_theta_zero():
    xi = np.linspace(-7, 7, 29)
    spec = DistortionSpec(CutoffDilationField(E0=4.0), 0j)
    assert np.array_equal(phi(spec, xi)[:, 0], xi)
    assert np.all(jacobian(spec, xi) == 1)


def test_dilation_inside_window():
    spec = DistortionSpec(CutoffDilationField(E0=4.0), -0.2j)
    assert phi(spec, 1.0)[0] == pytest.approx(1 - 0.2j, abs=1e-15)
    assert kinetic_symbol_continuum(spec, 1.0) == pytest.approx(0.96 - 0.4j, abs=1e-14)


def test_sine_field_examples():
    spec = DistortionSpec(SineField(h=1.0), 0.1j)
    assert phi(spec, math.pi / 2)[0] == pytest.approx(math.pi / 2 + 0.1j, abs=1e-15)
    assert jacobian(spec, 0.0) == pytest.approx(1 + 0.1j, abs=1e-15)
    spec2 = DistortionSpec(SineField(h=1.0, d=2), 0.1j)
    assert jacobian(spec2, np.zeros(2)) == pytest.approx((1 + 0.1j) ** 2, abs=1e-15)
    assert kinetic_symbol_lattice(spec, 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_continuum_symbol_examples():
    spec = DistortionSpec(CutoffDilationField(E0=1.0, d=2), 0j)
    assert kinetic_symbol_continuum(spec, np.array([3.0, 4.0])) == pytest.approx(25.0)
    far = DistortionSpec(CutoffDilationField(E0=1.0), -0.2j)
    assert kinetic_symbol_continuum(far, 5.0) == 25.0


def test_lattice_symbol_zone_edge():
    spec = DistortionSpec(CutoffDilationField(E0=1.0), 0j)
    assert kinetic_symbol_lattice(spec, 0.5, 2 * math.pi) == pytest.approx(16.0, abs=1e-12)


@pytest.mark.parametrize("h", [0.4, 0.2, 0.1])
def test_lattice_symbol_small_h_bound(h):
    spec = DistortionSpec(CutoffDilationField(E0=1.0), 0j)
    xi = np.linspace(-1.0 / h, 1.0 / h, 101)
    diff = np.abs(kinetic_symbol_lattice(spec, h, xi) - xi**2)
    # 2(1 - cos t)/h^2 = xi^2 - h^2 xi^4 / 12 + ...
    assert np.all(diff <= h**2 * xi**4 / 12 + 1e-12)


def test_lattice_symbol_converges_locally_uniformly():
    spec = DistortionSpec(CutoffDilationField(E0=4.0), -0.2j)
    xi = np.linspace(-5, 5, 201)
    cont = kinetic_symbol_continuum(spec, xi)
    sups = [np.max(np.abs(kinetic_symbol_lattice(spec, h, xi) - cont)) for h in (0.4, 0.2, 0.1, 0.05)]
    assert all(b < a for a, b in zip(sups, sups[1:]))


def test_smooth_step_profile():
    t = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    chi = smooth_step(t)
    assert chi[0] == 1 and chi[1] == 1 and chi[2] == 1
    assert 0 < chi[3] < 1 and chi[4] == 0 and chi[5] == 0


def test_field_constants_have_margin():
    f = CutoffDilationField(E0=16.0)
    t = np.linspace(-10, 10, 40001)
    lam = f.dv_eigs(t[:, None])
    assert np.max(np.abs(lam)) * 1.09 < f.lipschitz
    assert np.max(np.abs(f.value(t[:, None]))) * 1.09 < f.sup_norm
    assert f.support_radius == 8.0


def test_make_field():
    assert isinstance(make_field("cutoff-dilation", E0=2.0), CutoffDilationField)
    with pytest.raises(ValueError):
        make_field("spiral")
    with pytest.raises(ValueError):
        CutoffDilationField(E0=-1.0)


def test_admissibility_rules():
    f = CutoffDilationField(E0=16.0)
    assert DistortionSpec(f, -0.25j).admissible(c0=1.0)
    assert not DistortionSpec(f, -0.5j).admissible(c0=1.0)
    # strip condition: sup |v| |Im theta| < delta0
    assert not DistortionSpec(f, -0.25j).admissible(c0=1.0, delta0=1.0)
    with pytest.raises(InadmissibleDistortion):
        DistortionSpec(f, -0.5j).require_admissible()


@settings(max_examples=60, deadline=None)
@given(
    re=st.floats(-1, 1), im=st.floats(-1, 1), shrink=st.floats(0, 1),
    E0=st.floats(0.5, 30), c0=st.floats(0.1, 3), delta0=st.floats(0.1, 5),
)
def test_admissibility_monotone(re, im, shrink, E0, c0, delta0):
    f = CutoffDilationField(E0=E0)
    big = DistortionSpec(f, complex(re, im))
    small = DistortionSpec(f, shrink * complex(re, im))
    if big.admissible(c0, delta0):
        assert small.admissible(c0, delta0)


def test_theta_derivatives_match_analytic():
    f = CutoffDilationField(E0=4.0)
    theta = -0.15j + 0.05
    xi = np.linspace(-6, 6, 97)
    s = 1e-5
    plus, minus = DistortionSpec(f, theta + s), DistortionSpec(f, theta - s)
    dphi = (phi(plus, xi) - phi(minus, xi)) / (2 * s)
    v = f.value(xi[:, None])
    assert np.max(np.abs(dphi - v)) <= 1e-6 * max(1.0, np.max(np.abs(v)))
    dj = (jacobian(plus, xi) - jacobian(minus, xi)) / (2 * s)
    lam = f.dv_eigs(xi[:, None])
    spec = DistortionSpec(f, theta)
    exact = np.sum(lam / (1 + theta * lam), axis=-1) * jacobian(spec, xi)
    assert np.max(np.abs(dj - exact)) <= 1e-6 * np.max(np.abs(exact))


def test_sqrt_jacobian_branch_continuous():
    f = CutoffDilationField(E0=4.0)
    xi = np.linspace(-5, 5, 201)
    prev = np.ones(xi.size, dtype=complex)
    for t in np.linspace(0, 1, 21)[1:]:
        cur = sqrt_jacobian(DistortionSpec(f, t * (0.05 - 0.25j)), xi)
        assert np.max(np.abs(cur - prev)) < 0.05
        assert np.allclose(cur**2, jacobian(DistortionSpec(f, t * (0.05 - 0.25j)), xi))
        prev = cur


def test_periodised_field_on_torus():
    f = CutoffDilationField(E0=16.0)
    spec = DistortionSpec(f, -0.2j)
    h = 0.4
    xi = np.linspace(-math.pi / h, math.pi / h, 64)
    a = phi(spec, xi, h=h) - xi[:, None]
    b = phi(spec, xi + 2 * math.pi / h, h=h) - (xi + 2 * math.pi / h)[:, None]
    assert np.max(np.abs(a - b)) < 1e-13


def test_essential_curve_theta_zero():
    grid = LatticeGrid(0.5, 32)
    curve = essential_curve(DistortionSpec(CutoffDilationField(E0=1.0), 0j), grid)
    pts = curve.points
    assert np.max(np.abs(pts.imag)) < 1e-14
    assert pts.real.min() >= -1e-14 and pts.real.max() <= 4 / 0.5**2 + 1e-12
    assert curve.distance(pts[5])[0] < 1e-12


def test_essential_curve_rotates_down():
    spec = DistortionSpec(CutoffDilationField(E0=16.0), -0.2j)
    grid = GalerkinGrid(8.0, 0.25)
    curve = essential_curve(spec, grid)
    xi = grid.momenta()[:, 0]
    inside = (np.abs(xi) > 0) & (np.abs(xi) < 4.0)
    assert np.all(curve.points[inside].imag < 0)


def test_resonance_region():
    r = ResonanceRegion(delta0=math.inf, c0=1.0)
    assert r.contains(np.array([5 - 1j]))[0]
    assert not r.contains(np.array([-1 - 5j]))[0]
    r2 = ResonanceRegion(delta0=0.1, c0=1.0)
    assert not r2.contains(np.array([4 - 1j]))[0]
