import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from latres.distortion import CutoffDilationField, DistortionSpec, InadmissibleDistortion
from latres.grid import LatticeGrid
from latres.oracle import direct_lattice_sum
from latres.potentials import (
    OutsideStripError,
    PoissonConvergenceError,
    bump_mollifier,
    constant_mollifier,
    exponential,
    gaussian,
    gaussian_mollifier,
    majorant_check,
    make_mollifier,
    make_potential,
    mollified_restrict,
    poisson_sum,
    restrict_to_lattice,
    singular,
    singular_hat,
    singular_hat_series,
    torus_fourier_of_restriction,
    yukawa,
    zero,
)


def unit_gaussian():
    """``exp(-x^2)``: catalog Gaussian evaluated at ``x * sqrt(2)``."""
    g = gaussian(1.0)
    return lambda x: g.v_x(np.array([[math.sqrt(2) * x]]))[0]


def test_restriction_examples():
    v = unit_gaussian()
    assert v(0.0) == 1.0
    # V(x) = exp(-x^2) at x = 0.5 * 2
    assert v(1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    g = gaussian(1.0)
    vals = restrict_to_lattice(g, LatticeGrid(0.5, 16))
    assert vals[8] == 1.0 and vals[10] == pytest.approx(math.exp(-0.5))


def test_singular_restriction_rejected():
    with pytest.raises(ValueError):
        restrict_to_lattice(singular(), LatticeGrid(0.5, 16))


@pytest.mark.parametrize("h", [0.4, 0.2, 0.1])
def test_mollified_gaussian_closed_form(h):
    pot, moll = gaussian(1.0), gaussian_mollifier()
    x = np.array([[0.0], [1.0]])
    got = mollified_restrict(pot, moll, LatticeGrid(h, 16), points=x)
    var = 1 + h * h
    expected = np.exp(-x[:, 0] ** 2 / (2 * var)) / math.sqrt(var)
    assert np.max(np.abs(got - expected)) < 1e-9


def test_mollified_exponential_against_quadrature():
    h = 0.25
    got = mollified_restrict(exponential(1.0), gaussian_mollifier(), LatticeGrid(h, 16), points=np.zeros((1, 1)))[0]
    ref = quad(lambda y: math.exp(-y * y / (2 * h * h)) / (h * math.sqrt(2 * math.pi)) * math.exp(-abs(y)), -12 * h, 12 * h,
               points=[0.0], epsabs=1e-13)[0]
    assert got == pytest.approx(ref, abs=1e-8)
    assert got < 1


def test_mollified_restriction_converges_pointwise():
    moll = gaussian_mollifier()
    for pot in (gaussian(1.0), exponential(1.0)):
        errs = []
        for h in (0.4, 0.2, 0.1):
            x = np.array([[0.0], [1.0]])
            got = mollified_restrict(pot, moll, LatticeGrid(h, 16), points=x)
            errs.append(np.abs(got - pot.v_x(x)))
        errs = np.array(errs)
        assert np.all(np.diff(errs, axis=0) < 0)


def test_delta_mollifier_rejected():
    with pytest.raises(ValueError, match="rapidly decreasing"):
        constant_mollifier()


def test_mollifier_registry():
    assert make_mollifier("bump").label == "bump"
    with pytest.raises(ValueError):
        make_mollifier("nope")
    with pytest.raises(ValueError):
        make_potential("nope")


def test_poisson_matches_direct_sum_at_zero():
    g = gaussian(1.0)
    got = poisson_sum(g, 1.0, np.array([[0.0]])).values[0]
    ref = direct_lattice_sum(g, 1.0, np.array([[0.0]]))[0]
    assert abs(got - ref) < 1e-10


def test_poisson_gaussian_two_shells_suffice():
    res = poisson_sum(gaussian(1.0), 1.0, np.linspace(-math.pi, math.pi, 33))
    assert res.shells <= 2
    # first omitted term is exp(-(2 pi)^2 / 2) relative to O(1)
    assert math.exp(-(2 * math.pi) ** 2 / 2) < 1e-8


def test_poisson_outside_strip():
    with pytest.raises(OutsideStripError):
        poisson_sum(exponential(1.0), 0.5, np.array([0.3 + 1.5j]))


def test_poisson_shell_cap():
    with pytest.raises(PoissonConvergenceError):
        poisson_sum(gaussian(1.0), 20.0, np.array([0.0]), max_shell=1)


@pytest.mark.parametrize("pot", [gaussian(1.0), gaussian(-2.0), exponential(1.0)], ids=["g1", "g-2", "exp"])
@pytest.mark.parametrize("h", [1.0, 0.5, 0.25])
def test_poisson_identity_1d(pot, h):
    grid = LatticeGrid(h, 64)
    xi = grid.momenta()[:, 0]
    got = torus_fourier_of_restriction(pot, h, xi)
    ref = direct_lattice_sum(pot, h, xi)
    assert np.max(np.abs(got - ref)) < 1e-8


def test_poisson_identity_2d():
    pot = gaussian(1.5, d=2)
    h = 0.5
    grid = LatticeGrid(h, 8, 2)
    zeta = grid.momenta()
    got = poisson_sum(pot, h, zeta).values
    n = np.arange(-40, 41)
    X = h * np.stack(np.meshgrid(n, n, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = pot.v_x(X)
    ref = (2 * math.pi) ** -1 * h**2 * np.exp(-1j * zeta @ X.T) @ vals
    assert np.max(np.abs(got - ref)) < 1e-8


def test_singular_transform_matches_hypergeometric():
    # (2/pi)^{1/2} int_0^inf x^{-1/4} e^{-x^2} cos(x xi) dx = (2 pi)^{-1/2} Gamma(3/8) 1F1(3/8; 1/2; -xi^2/4)
    xi = np.array([0.0, 0.37, 1.0, 2.5, 5.123, 9.99, 17.3, 23.9])
    ref = np.array([
        float(mpmath.gamma(0.375) * mpmath.hyp1f1(0.375, 0.5, -x * x / 4) / mpmath.sqrt(2 * mpmath.pi)) for x in xi
    ])
    assert np.max(np.abs(singular_hat(xi) - ref)) < 1e-9


def test_singular_series_beyond_table():
    xi = np.array([24.5, 30.0, 60.0])
    ref = np.array([
        float(mpmath.gamma(0.375) * mpmath.hyp1f1(0.375, 0.5, -x * x / 4) / mpmath.sqrt(2 * mpmath.pi)) for x in xi
    ])
    assert np.max(np.abs(singular_hat_series(xi) - ref)) < 1e-10


def test_singular_transform_is_real_axis_only():
    with pytest.raises(OutsideStripError):
        singular().evaluate_hat(np.array([[0.5 + 0.1j]]))


@pytest.mark.parametrize(
    "pot", [gaussian(2.0), gaussian(1.0, d=2), exponential(-1.0), singular(-1.0), yukawa(1.0, 0.7)],
    ids=["g", "g2", "exp", "sing", "yuk"],
)
def test_hermitian_symmetry_on_real_axis(pot):
    rng = np.random.default_rng(1)
    xi = rng.uniform(-20, 20, size=(200, pot.d)).astype(complex)
    lhs = np.conj(pot.evaluate_hat(-np.conj(xi)))
    assert np.max(np.abs(lhs - pot.evaluate_hat(xi))) < 1e-12


@pytest.mark.parametrize("pot", [gaussian(1.0), exponential(1.0), yukawa(1.0, 0.8)], ids=["g", "exp", "yuk"])
def test_transform_finite_on_shrunken_region(pot):
    rng = np.random.default_rng(2)
    d = pot.d
    re = rng.uniform(-30, 30, size=(500, d))
    width = 0.95 * min(pot.delta0 if math.isfinite(pot.delta0) else 5.0, 5.0)
    if "V1" in pot.split_tag:
        cap = np.minimum(width, 0.95 * pot.c0 * np.linalg.norm(re, axis=-1))
    else:
        cap = np.full(len(re), width)
    direction = rng.standard_normal((500, d))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    im = direction * (cap * rng.uniform(0, 1, 500))[:, None]
    vals = pot.evaluate_hat(re + 1j * im)
    assert np.all(np.isfinite(vals))


def test_zero_potential():
    z = zero(2)
    assert np.all(z.evaluate_hat(np.ones((4, 2))) == 0)


def test_bump_mollifier_compact_transform():
    m = bump_mollifier(width=2.0)
    vals = m.phi_hat(np.array([[0.0], [0.5], [2.5], [10.0]]))
    assert vals[0] == pytest.approx((2 * math.pi) ** -0.5)
    assert vals[2] == 0 and vals[3] == 0


def test_majorant_gaussian_theta_zero():
    prof = majorant_check(gaussian(1.0), DistortionSpec(CutoffDilationField(E0=4.0), 0j), sample_budget=4000)
    assert prof.passed
    # at theta=0 the envelope is |V^| itself: its L1 norm is an upper Riemann sum of int |V^| = sqrt(2 pi)
    width = prof.edges[1] - prof.edges[0]
    assert math.sqrt(2 * math.pi) * 0.9 <= prof.l1_norm <= math.sqrt(2 * math.pi) + 2 * width


def test_majorant_gaussian_distorted():
    prof = majorant_check(gaussian(1.0), DistortionSpec(CutoffDilationField(E0=4.0), 0.1j), sample_budget=4000)
    assert prof.passed and np.isfinite(prof.l1_norm)


def test_majorant_inadmissible_upstream():
    field = CutoffDilationField(E0=100.0)
    theta = -1j * 1.2 / field.sup_norm
    with pytest.raises(InadmissibleDistortion):
        majorant_check(exponential(1.0), DistortionSpec(field, theta))


@settings(max_examples=30, deadline=None)
@given(h=st.sampled_from([1.0, 0.5, 0.25, 0.2]), zeta=st.floats(-20, 20), c=st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
def test_poisson_periodicity_property(h, zeta, c):
    pot = gaussian(c)
    a = poisson_sum(pot, h, np.array([[zeta]])).values[0]
    b = poisson_sum(pot, h, np.array([[zeta + 2 * math.pi / h]])).values[0]
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))
