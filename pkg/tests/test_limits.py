import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latres.distortion import CutoffDilationField, DistortionSpec
from latres.limits import (
    ReferenceInconsistencyError,
    Track,
    TrackPoint,
    _threshold,
    check_ladder,
    check_reference_consistency,
    fit_rate,
    fixed_box_ladder,
    measure_kinetic_rate,
    measure_potential_commutator,
    predicted_commutator_exponent,
    sweep_eigenvalues,
    sweep_resonances,
    track_limit,
    uniform_bound_check,
)
from latres.oracle import bound_states_1d
from latres.potentials import exponential, gaussian, gaussian_mollifier, singular, zero

SMALL = fixed_box_ladder([0.4, 0.2, 0.1], 25.6)


def test_fit_rate_exact_power_law():
    h = [0.4, 0.2, 0.1, 0.05]
    fit = fit_rate(h, [3.0 * x**2 for x in h])
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.max_residual < 1e-12 and fit.points == 4


def test_fit_rate_needs_three_rungs():
    with pytest.raises(ValueError):
        fit_rate([0.4], [1e-2])
    with pytest.raises(ValueError):
        fit_rate([0.4, 0.2], [1e-2, 2.5e-3])


def test_fit_rate_floor_truncation():
    h = [0.4, 0.2, 0.1, 0.05]
    err = [1.6e-3, 4e-4, 1e-4, 1e-15]
    assert fit_rate(h, err, floor=1e-12).points == 3
    with pytest.raises(ValueError):
        fit_rate(h, err, floor=2e-4)


def test_ladder_helpers():
    assert fixed_box_ladder([0.4, 0.2], 25.6) == [(0.4, 64), (0.2, 128)]
    assert check_ladder([(0.1, 256), (0.4, 64), (0.2, 128)]) == [(0.4, 64), (0.2, 128), (0.1, 256)]
    with pytest.raises(ValueError):
        check_ladder([(0.2, 64), (0.2, 128)])
    with pytest.raises(ValueError):
        check_ladder([])


def test_track_limit_and_threshold():
    tr = Track("t", [TrackPoint(0.2, 1, 1.0 + 4 * 0.04, None), TrackPoint(0.1, 1, 1.0 + 4 * 0.01, None)])
    est, tol = track_limit(tr)
    assert est == pytest.approx(1.0) and tol == pytest.approx(0.12)
    assert _threshold([0, 1, 1, 1], [0.4, 0.2, 0.1, 0.05]) == 0.2
    assert _threshold([1, 1, 1], [0.4, 0.2, 0.1]) == 0.4


def test_reference_consistency_gate():
    assert check_reference_consistency([1 - 1j], 1e-9, [1 - 1j + 5e-10], 1e-9) < 1e-9
    with pytest.raises(ReferenceInconsistencyError):
        check_reference_consistency([1 - 1j], 1e-9, [1.01 - 1j], 1e-6)


def test_free_operator_empty_report():
    dist = DistortionSpec(CutoffDilationField(E0=16.0), -0.25j)
    rep = sweep_resonances(zero(), dist, SMALL, window=lambda z: np.abs(z) < 30)
    assert rep.tracks == [] and rep.csv_rows() == []


def test_gaussian_well_track_rate():
    pot = gaussian(-3.0)
    ref = bound_states_1d(pot, box=20.0, M=20000, count=1)
    rep = sweep_eigenvalues(pot, SMALL, references=ref.values)
    tr = rep.tracks[0]
    assert tr.monotone
    assert 1.5 <= tr.rate.slope <= 2.5


def test_sweep_deterministic_under_permutation():
    pot = gaussian(-3.0)
    a = sweep_eigenvalues(pot, SMALL, references=[-1.9637203359974729])
    b = sweep_eigenvalues(pot, SMALL[::-1], references=[-1.9637203359974729])
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    c = sweep_eigenvalues(pot, [SMALL[1], SMALL[2], SMALL[0]], references=[-1.9637203359974729], jobs=3)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(c.to_dict(), sort_keys=True)


def test_resonance_sweep_small_ladder(barrier_oracle):
    dist = DistortionSpec(CutoffDilationField(E0=16.0), -0.25j)
    ladder = fixed_box_ladder([0.4, 0.2, 0.1], 102.4)
    rep = sweep_resonances(
        gaussian(8.0), dist, ladder, references=barrier_oracle.values[:1], window=lambda z: np.abs(z) < 30,
        eps_factor=3.0,
    )
    tr = rep.tracks[0]
    assert len(tr.points) == 3 and tr.monotone and not tr.ambiguous
    assert rep.disk_counts == [1, 1, 1]
    rows = rep.csv_rows()
    assert set(rows[0]) == {"track_id", "h", "N", "re_z", "im_z", "abs_err", "multiplicity"}


def test_kinetic_rate_single_rung_rejected():
    dist = DistortionSpec(CutoffDilationField(E0=4.0), 0j)
    with pytest.raises(ValueError):
        measure_kinetic_rate(dist, [(0.4, 64)])


def test_kinetic_rate_short_ladder():
    dist = DistortionSpec(CutoffDilationField(E0=4.0), -0.2j)
    sweep = measure_kinetic_rate(dist, SMALL)
    assert sweep.decreasing
    assert 1.5 < sweep.rate.slope < 2.5


def test_predicted_exponents():
    assert predicted_commutator_exponent(gaussian(1.0)) == 1.0
    assert predicted_commutator_exponent(exponential(1.0)) == pytest.approx(0.5)
    s = singular()
    assert predicted_commutator_exponent(s, singular_variant=True) == pytest.approx((2 * 0.75 - 1) / (2 * 0.75 - 1 + 2))


@pytest.mark.parametrize(
    "pot,moll,theta",
    [(gaussian(1.0), None, -0.1j), (exponential(1.0), None, -0.1j), (singular(-1.0), gaussian_mollifier(), 0j)],
    ids=["gaussian", "exponential", "singular"],
)
def test_commutator_decreases_for_catalog(pot, moll, theta):
    dist = DistortionSpec(CutoffDilationField(E0=4.0), theta)
    sweep = measure_potential_commutator(pot, dist, SMALL, moll=moll)
    assert sweep.decreasing


def test_uniform_bound_zero_potential():
    dist = DistortionSpec(CutoffDilationField(E0=16.0), -0.25j)
    table = uniform_bound_check(zero(), dist, SMALL[:2])
    assert all(v == 0 for row in table.table for v in row)


def test_uniform_bound_gaussian():
    dist = DistortionSpec(CutoffDilationField(E0=16.0), -0.25j)
    table = uniform_bound_check(gaussian(8.0), dist, SMALL)
    for row in table.table:
        assert row[-1] < row[0]
    assert table.decreasing
    assert all(m <= y for m, y in zip(table.max_over_h, table.young_bound))


@settings(max_examples=30, deadline=None)
@given(
    slope=st.floats(0.2, 4.0), amp=st.floats(1e-3, 1e3),
    noise=st.lists(st.floats(-0.01, 0.01), min_size=4, max_size=4),
)
def test_fit_rate_recovers_slope_property(slope, amp, noise):
    h = np.array([0.4, 0.2, 0.1, 0.05])
    err = amp * h**slope * np.exp(noise)
    fit = fit_rate(h, err)
    assert abs(fit.slope - slope) < 0.05
    assert fit.max_residual <= 0.03
