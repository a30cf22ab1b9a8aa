#!/usr/bin/env python3
"""Tests for index pairs, dual indices and crossing scans on rotation boundaries."""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings
import hypothesis.strategies as st

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from common.errors import OffsetNotConstant, OrderingViolated, PreconditionViolated, ShiftInvalid
from common.model import SolverSettings, identity_boundary, make_rotation_boundary, rotating_path, scalar_path
from common.problem_generator import ProblemGenerator
from spectral.dual import (
    check_shift,
    choose_shift,
    dual_difference_check,
    dual_index,
    l_independence_check,
    offset_invariance_check,
    spectrum_distance,
)
from spectral.flow import floquet_nullity
from spectral.homotopy import CrossingScanner, additivity_check, relative_index, relative_index_report
from spectral.index import (
    formula10_check,
    galerkin_counts,
    index_of_gamma_P,
    maslov_index,
    monotonicity_check,
    perturbation_scan,
    rotation_index_oracle,
)

QUARTER = np.pi / 2.0


@pytest.fixture(scope="module")
def boundary():
    return make_rotation_boundary(1, QUARTER)


@pytest.fixture(scope="module")
def solver_settings():
    return SolverSettings(threads=2)


# Window-count oracle

@pytest.mark.parametrize(
    "theta,b,expected",
    [
        (QUARTER, 2.0, 2),
        (QUARTER, 9.0, 4),
        (QUARTER, 12.0, 4),
        (QUARTER, -5.0, -2),
        (QUARTER, -2.0, 0),
        (1.0, 2.0, 2),
        (2.5, 2.0, 0),
        (2.5, 3.0, 2),
    ],
)
def test_rotation_oracle(theta, b, expected):
    assert rotation_index_oracle(theta, b) == expected


# Index pairs

@pytest.mark.parametrize("b,expected", [(0.0, (0, 0)), (2.0, (2, 0)), (9.0, (4, 0)), (-5.0, (-2, 0))])
def test_scalar_index_pairs(boundary, solver_settings, b, expected):
    pair = maslov_index(boundary, scalar_path(1, b), settings=solver_settings)
    assert (pair.i_P, pair.nu_P) == expected
    assert pair.converged
    assert len(pair.levels) == 3


def test_degenerate_scalar(boundary, solver_settings):
    pair = maslov_index(boundary, scalar_path(1, QUARTER), settings=solver_settings)
    assert (pair.i_P, pair.nu_P) == (0, 2)


def test_identity_boundary_zero_path(solver_settings):
    pair = maslov_index(identity_boundary(1), scalar_path(1, 0.0), settings=solver_settings)
    assert (pair.i_P, pair.nu_P) == (0, 2)


def test_index_of_generator(boundary, solver_settings):
    pair = index_of_gamma_P(boundary, solver_settings)
    assert (pair.i_P, pair.nu_P) == (0, 2)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_galerkin_nullity_matches_floquet_on_random_problems(solver_settings, seed):
    random_boundary, path = ProblemGenerator(seed).random_problem(n_max=2)
    pair = maslov_index(random_boundary, path, settings=solver_settings)
    assert pair.nu_P == floquet_nullity(random_boundary, path)[0]


def test_full_nullity_in_two_degrees_of_freedom(solver_settings):
    pair = index_of_gamma_P(ProblemGenerator(5).random_boundary(2), solver_settings)
    assert pair.nu_P == 4
    resonant = maslov_index(make_rotation_boundary(2, 1.0), scalar_path(2, 1.0), settings=solver_settings)
    assert (resonant.i_P, resonant.nu_P) == (0, 4)


def test_galerkin_counts(boundary, solver_settings):
    counts = galerkin_counts(boundary, scalar_path(1, 2.0), 4, solver_settings)
    assert counts["a_negative"] == 8
    assert counts["negative"] == 10
    assert counts["zero"] == 0


def test_truncation_and_dimension_preconditions(boundary, solver_settings):
    with pytest.raises(PreconditionViolated):
        maslov_index(boundary, scalar_path(1, 2.0), m=2, settings=solver_settings)
    with pytest.raises(PreconditionViolated):
        maslov_index(boundary, scalar_path(2, 2.0), settings=solver_settings)


def test_rotating_path_matches_relative_index(boundary, solver_settings):
    wobble = rotating_path(QUARTER, np.array([[2.5, 0.3], [0.3, 1.5]]))
    upper = scalar_path(1, 9.0)
    report = relative_index_report(boundary, wobble, upper, solver_settings)
    lower = maslov_index(boundary, wobble, settings=solver_settings)
    assert report["relative_index"] == 4 - lower.i_P


@settings(max_examples=8, deadline=None)
@given(
    theta=st.floats(min_value=0.2, max_value=3.0),
    b=st.floats(min_value=-8.0, max_value=12.0),
)
def test_index_matches_window_count(theta, b):
    boundary = make_rotation_boundary(1, theta)
    assume(spectrum_distance(boundary, b) > 0.05)
    pair = maslov_index(boundary, scalar_path(1, b), settings=SolverSettings(threads=1))
    assert pair.i_P == rotation_index_oracle(theta, b)
    assert pair.nu_P == 0


# Perturbation, monotonicity and the offset against the P = I index

def test_perturbation_scan(boundary, solver_settings):
    report = perturbation_scan(boundary, scalar_path(1, QUARTER), solver_settings)
    assert (report.base.i_P, report.base.nu_P) == (0, 2)
    assert report.s0 == pytest.approx(np.pi, abs=1e-6)
    assert len(report.table) == 3
    assert all(row["plus"] == [2, 0] and row["minus"] == [0, 0] for row in report.table)


def test_perturbation_scan_from_identity_boundary(solver_settings):
    report = perturbation_scan(identity_boundary(1), scalar_path(1, 0.0), solver_settings)
    assert (report.base.i_P, report.base.nu_P) == (0, 2)
    assert report.s0 == pytest.approx(np.pi, abs=1e-6)
    assert all(row["plus"] == [2, 0] and row["minus"] == [0, 0] for row in report.table)
    assert all(row["floquet"] == [0, 0] for row in report.table)


def test_perturbation_scan_nondegenerate(boundary, solver_settings):
    report = perturbation_scan(boundary, scalar_path(1, 2.0), solver_settings)
    assert report.s0 == pytest.approx(0.5 * (2.0 - QUARTER), abs=1e-6)
    assert all(row["plus"] == row["minus"] == [2, 0] for row in report.table)


def test_monotonicity(boundary, solver_settings):
    report = monotonicity_check(boundary, scalar_path(1, 0.0), scalar_path(1, 9.0), solver_settings)
    assert report["strict_applies"]
    assert report["lower"] == [0, 0]
    assert report["upper"] == [4, 0]
    assert report["passed"]


def test_formula_offset_constant(boundary, solver_settings):
    paths = [scalar_path(1, 2.0), scalar_path(1, 9.0), scalar_path(1, -5.0)]
    report = formula10_check(boundary, paths, solver_settings)
    assert report["offset"] == 0
    assert report["reference"] == 1
    assert not report["matches_reference"]


# Crossings and relative index

def test_crossings_from_zero_to_nine(boundary, solver_settings):
    scanner = CrossingScanner(boundary, solver_settings)
    crossings = scanner.scan(scalar_path(1, 0.0), scalar_path(1, 9.0))
    assert [c.nu for c in crossings.crossings] == [2, 2]
    assert crossings.crossings[0].s == pytest.approx(np.pi / 18.0, abs=1e-8)
    assert crossings.crossings[1].s == pytest.approx((QUARTER + 2.0 * np.pi) / 9.0, abs=1e-8)
    assert crossings.total == 4
    stats = scanner.get_statistics()
    assert stats["scans"] == 1
    assert "uptime" in stats


def test_start_crossing_counted_only_when_included(boundary, solver_settings):
    scanner = CrossingScanner(boundary, solver_settings)
    with_start = scanner.scan(scalar_path(1, QUARTER), scalar_path(1, 2.0))
    without_start = scanner.scan(scalar_path(1, QUARTER), scalar_path(1, 2.0), include_start=False)
    assert with_start.total == 2
    assert with_start.crossings[0].s == 0.0
    assert without_start.total == 0


def test_relative_index(boundary, solver_settings):
    assert relative_index(boundary, scalar_path(1, 2.0), scalar_path(1, 9.0), solver_settings) == 2


def test_unordered_pair_rejected(boundary, solver_settings):
    with pytest.raises(OrderingViolated):
        CrossingScanner(boundary, solver_settings).scan(scalar_path(1, 9.0), scalar_path(1, 2.0))


def test_additivity(boundary, solver_settings):
    report = additivity_check(
        boundary, scalar_path(1, 0.0), scalar_path(1, 2.0), scalar_path(1, 9.0), solver_settings
    )
    assert (report["first"], report["second"], report["whole"]) == (2, 2, 4)
    assert report["passed"]


@pytest.mark.parametrize("threads", [1, 3, 4])
def test_crossings_independent_of_thread_count(boundary, threads):
    scanner = CrossingScanner(boundary, SolverSettings(threads=threads))
    crossings = scanner.scan(scalar_path(1, 0.0), scalar_path(1, 9.0))
    assert [c.nu for c in crossings.crossings] == [2, 2]
    assert all(c.sigma_min <= 1e-7 for c in crossings.crossings)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_ordered_triples(boundary, solver_settings, seed):
    B1, B2, B3 = ProblemGenerator(seed).random_ordered_triple(boundary)
    report = additivity_check(boundary, B1, B2, B3, solver_settings)
    assert report["passed"]
    assert relative_index_report(boundary, B1, B3, solver_settings)["relative_index"] == report["whole"]


# Dual index

@pytest.mark.parametrize(
    "b,l,i_dual,offset",
    [(9.0, 1.0, 4, 0), (2.0, 1.0, 2, 0), (2.0, 8.0, 4, 2)],
)
def test_dual_index(boundary, solver_settings, b, l, i_dual, offset):
    report = dual_index(boundary, scalar_path(1, b), l, settings=solver_settings)
    assert report.i_dual == i_dual
    assert report.nu_dual == 0
    assert report.offset == offset
    assert report.theorem33_bounds_ok is True


def test_dual_offset_without_finite_order(solver_settings):
    report = dual_index(make_rotation_boundary(1, 1.0), scalar_path(1, 2.0), 1.0, settings=solver_settings)
    assert report.theorem33_bounds_ok is None


def test_invalid_shift(boundary, solver_settings):
    assert not check_shift(boundary, scalar_path(1, -5.0), 1.0, solver_settings)
    assert not check_shift(boundary, scalar_path(1, 2.0), 3.0 * QUARTER, solver_settings)
    with pytest.raises(ShiftInvalid):
        dual_index(boundary, scalar_path(1, -5.0), 1.0, settings=solver_settings)


def test_choose_shift(boundary, solver_settings):
    l = choose_shift(boundary, [scalar_path(1, -5.0), scalar_path(1, 2.0)], solver_settings)
    assert l >= 6.0
    assert check_shift(boundary, scalar_path(1, -5.0), l, solver_settings)
    assert spectrum_distance(boundary, -l) >= 0.1


def test_dual_difference(boundary, solver_settings):
    report = dual_difference_check(boundary, scalar_path(1, 2.0), scalar_path(1, 9.0), 1.0,
                                   settings=solver_settings)
    assert report["lhs"] == report["rhs"] == 2


def test_dual_difference_independent_of_shift(boundary, solver_settings):
    report = l_independence_check(boundary, scalar_path(1, 2.0), scalar_path(1, 9.0), 1.0, 8.0,
                                  settings=solver_settings)
    assert report["differences"] == [2, 2]
    assert report["passed"]


def test_offset_invariance(boundary, solver_settings):
    report = offset_invariance_check(boundary, [scalar_path(1, 2.0), scalar_path(1, 9.0)], 1.0,
                                     settings=solver_settings)
    assert report["offset"] == 0
    assert report["bounds_ok"] is True
    with pytest.raises(PreconditionViolated):
        offset_invariance_check(boundary, [scalar_path(1, 2.0)], 1.0, settings=solver_settings)


def test_offset_not_constant_error_carries_offsets():
    error = OffsetNotConstant([0, 2])
    assert "0" in str(error) and "2" in str(error)
