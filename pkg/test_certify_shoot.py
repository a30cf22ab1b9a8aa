#!/usr/bin/env python3
"""Tests for the hypothesis certificate and the shooting solver."""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from certification.certificate import (
    Certificate,
    Comparison,
    check_hypotheses,
    certify_problem,
    corollary42_certificate,
    final_criterion,
    origin_hessian_path,
    twist_certificate,
)
from common.errors import BlowUp, Inconsistent, OrderingViolated, PreconditionViolated
from common.model import (
    HamiltonianSpec,
    SolverSettings,
    acceptance_hamiltonian,
    make_rotation_boundary,
    quadratic_hamiltonian,
    radial_hamiltonian,
    rotating_path,
    scalar_path,
)
from common.numerics import kernel_dimension, rotation
from common.problem_io import load_problem
from shooting.p_solutions import (
    PSolution,
    PSolutionFinder,
    export_solutions_csv,
    group_orbits,
    jacobian_fd_error,
    shoot_residual,
    solutions_report,
)

PROBLEMS = Path(__file__).parent / "problems"
QUARTER = np.pi / 2.0

# |x|^2 where 2 h'(|x|^2) = pi/2 and = pi/2 + 2 pi for the acceptance Hamiltonian
OUTER_CIRCLE = -np.log((np.pi / 4.0 - 0.05) / 4.45)
INNER_CIRCLE = -np.log((QUARTER / 2.0 + np.pi - 0.05) / 4.45)


@pytest.fixture(scope="module")
def boundary():
    return make_rotation_boundary(1, QUARTER)


@pytest.fixture(scope="module")
def solver_settings():
    return SolverSettings(threads=2)


# Certificate ledger

def test_record_comparisons(boundary):
    certificate = Certificate(boundary)
    assert certificate.record("equal", 1.0 + 1e-12, Comparison.EQUAL, 1.0, tolerance=1e-9)
    assert certificate.record("outside", 0, Comparison.NOT_IN, [4, 4])
    assert not certificate.record("inside", 4, Comparison.NOT_IN, [4, 6])
    assert not certificate.record("missing", None, Comparison.GREATER_THAN, 0)
    assert certificate.failed_checks() == ["inside", "missing"]
    assert not certificate.all_passed
    assert certificate.to_dict()["checks"]["outside"]["comparison"] == Comparison.NOT_IN.value


def test_b0_must_match_origin_hessian(boundary, solver_settings):
    with pytest.raises(Inconsistent):
        check_hypotheses(boundary, acceptance_hamiltonian(1), scalar_path(1, 2.0), scalar_path(1, 0.0),
                         scalar_path(1, 1.0), 5.0, solver_settings)


def test_acceptance_certificate(solver_settings):
    problem = load_problem(PROBLEMS / "acceptance_family.json")
    certificate = certify_problem(problem, problem.settings.merged(threads=2))
    assert certificate.all_passed, certificate.failed_checks()
    assert certificate.hypotheses_hold()
    assert certificate.predicted_solutions == 2
    assert certificate.predictions == {"corollary": 2, "final_criterion": 2}
    assert certificate.checks["twist_condition"].evidence["variant"] == "B1 + lI <= B0"
    assert certificate.crossings["interior_B0_B1"]["total"] == 4
    assert (certificate.indices["B0"].i_P, certificate.indices["B1"].i_P) == (4, 0)


def test_twist_fails_without_index_jump(boundary, solver_settings):
    certificate = twist_certificate(boundary, scalar_path(1, 2.0 * np.pi), scalar_path(1, 0.0), 2.0 * np.pi,
                                    solver_settings)
    assert certificate.passed("l_at_least_2pi")
    assert certificate.passed("twist_condition")
    assert not certificate.passed("index_jump")


def test_corollary_predictions(boundary, solver_settings):
    two = corollary42_certificate(boundary, scalar_path(1, 2.0), scalar_path(1, 0.0), solver_settings)
    assert two.predictions["corollary"] == 2
    none = corollary42_certificate(boundary, scalar_path(1, 1.0), scalar_path(1, 0.0), solver_settings)
    assert none.predictions["corollary"] == 0
    assert not none.passed("interior_crossings")


def test_corollary_needs_ordered_pair(boundary, solver_settings):
    wobble = rotating_path(QUARTER, np.array([[2.5, 0.3], [0.3, 1.5]]))
    with pytest.raises(OrderingViolated):
        corollary42_certificate(boundary, wobble, scalar_path(1, 2.0), solver_settings)


def test_final_criterion(boundary, solver_settings):
    excluded = final_criterion(boundary, scalar_path(1, 9.0), scalar_path(1, 0.0), solver_settings)
    assert excluded.passed("final_criterion")
    assert excluded.predictions["final_criterion"] == 2

    inside = final_criterion(boundary, scalar_path(1, QUARTER), scalar_path(1, 1.0), solver_settings)
    assert not inside.passed("final_criterion")
    assert inside.predictions["final_criterion"] == 0


def test_quartic_growth_fails_sandwich():
    problem = load_problem(PROBLEMS / "quartic_failing.json")
    certificate = certify_problem(problem, problem.settings.merged(threads=2))
    assert "Hinf_sandwich" in certificate.failed_checks()
    assert not certificate.hypotheses_hold()
    assert certificate.predicted_solutions == 0


# Shooting

@pytest.mark.parametrize("b", [1.0, 2.0, 9.0])
def test_quadratic_residual_is_linear(boundary, solver_settings, b):
    x0 = np.array([0.3, -0.8])
    residual, jacobian = shoot_residual(quadratic_hamiltonian(1, b), boundary, x0, solver_settings)
    expected = rotation(1, b) - boundary.P
    assert np.allclose(jacobian, expected, atol=1e-9)
    assert np.allclose(residual, expected @ x0, atol=1e-9)


def test_trivial_residual_vanishes(boundary, solver_settings):
    residual, _ = shoot_residual(acceptance_hamiltonian(1), boundary, np.zeros(2), solver_settings)
    assert np.max(np.abs(residual)) == 0.0


def test_variational_jacobian_matches_finite_differences(boundary, solver_settings):
    error = jacobian_fd_error(acceptance_hamiltonian(1), boundary, np.array([0.7, 0.2]), solver_settings)
    assert error <= 1e-5


def test_known_circle_is_a_solution(boundary, solver_settings):
    for radius_squared in (OUTER_CIRCLE, INNER_CIRCLE):
        x0 = np.array([np.sqrt(radius_squared), 0.0])
        residual, _ = shoot_residual(acceptance_hamiltonian(1), boundary, x0, solver_settings)
        assert np.linalg.norm(residual) < 1e-8


def test_blow_up_detected(boundary, solver_settings):
    H = HamiltonianSpec(
        n=1,
        kind="callback",
        value_fn=lambda x: x[1] * x[0] ** 2,
        gradient_fn=lambda x: np.array([2.0 * x[0] * x[1], x[0] ** 2]),
        hessian_fn=lambda x: np.array([[2.0 * x[1], 2.0 * x[0]], [2.0 * x[0], 0.0]]),
    )
    with pytest.raises(BlowUp):
        shoot_residual(H, boundary, np.array([-2.0, 0.0]), solver_settings)


def test_nondegenerate_quadratic_has_only_trivial_solution(boundary, solver_settings):
    finder = PSolutionFinder(quadratic_hamiltonian(1, 2.0), boundary, solver_settings)
    solutions = finder.find(starts=10, seed=0)
    assert len(solutions) == 1
    trivial = solutions[0]
    assert trivial.is_trivial
    assert not trivial.degenerate
    assert (trivial.index_pair.i_P, trivial.index_pair.nu_P) == (2, 0)
    assert finder.get_statistics()["starts_tried"] == 11


def test_resonant_quadratic_trivial_solution_is_degenerate(boundary, solver_settings):
    _, jacobian = shoot_residual(quadratic_hamiltonian(1, QUARTER), boundary, np.zeros(2), solver_settings)
    assert kernel_dimension(jacobian, solver_settings.tol)[0] == 2

    solutions = PSolutionFinder(quadratic_hamiltonian(1, QUARTER), boundary, solver_settings).find(
        starts=3, seed=0, label_indices=False
    )
    trivial = [s for s in solutions if s.is_trivial]
    assert len(trivial) == 1
    assert trivial[0].kernel_dimension == 2
    assert solutions_report(solutions)["degenerate_trivial"]


def test_starts_must_be_positive(boundary, solver_settings):
    with pytest.raises(PreconditionViolated):
        PSolutionFinder(acceptance_hamiltonian(1), boundary, solver_settings).find(starts=0)


def test_energy_is_conserved_on_resonant_solutions(boundary, solver_settings):
    H = quadratic_hamiltonian(1, QUARTER)
    solutions = PSolutionFinder(H, boundary, solver_settings).find(starts=5, seed=0, label_indices=False)
    assert len(solutions) > 1
    for solution in solutions:
        assert solution.energy_drift <= 1e-8 * (1.0 + abs(float(H.value(solution.x0))))


def test_solution_search_is_deterministic(boundary):
    H = acceptance_hamiltonian(1)
    runs = [
        PSolutionFinder(H, boundary, SolverSettings(threads=threads)).find(starts=120, seed=3, label_indices=False)
        for threads in (1, 2)
    ]
    assert len(runs[0]) == len(runs[1])
    for first, second in zip(*runs):
        assert np.array_equal(first.x0, second.x0)
        assert first.orbit == second.orbit


# Time-dependent Hamiltonians

def test_modulated_quadratic_rotates_by_its_mean(boundary, solver_settings):
    # (1 + cos(2 pi t) / 2)|x|^2 turns x by the time average of 2 (1 + cos(2 pi t) / 2) = 2
    H = radial_hamiltonian(1, a=1.0, modulation=0.5, frequency=1)
    x0 = np.array([0.4, 0.1])
    residual, jacobian = shoot_residual(H, boundary, x0, solver_settings)
    expected = rotation(1, 2.0) - boundary.P
    assert np.allclose(jacobian, expected, atol=1e-9)
    assert np.allclose(residual, expected @ x0, atol=1e-9)


def test_time_dependent_callback_shoots(boundary, solver_settings):
    def factor(t):
        return 1.0 + 0.5 * np.sin(2.0 * np.pi * t)

    H = HamiltonianSpec(
        n=1, kind="callback", time_dependent=True,
        value_fn=lambda t, x: factor(t) * float(x @ x),
        gradient_fn=lambda t, x: 2.0 * factor(t) * x,
        hessian_fn=lambda t, x: 2.0 * factor(t) * np.eye(2),
    )
    x0 = np.array([0.4, 0.1])
    residual, _ = shoot_residual(H, boundary, x0, solver_settings)
    assert np.allclose(residual, (rotation(1, 2.0) - boundary.P) @ x0, atol=1e-9)


def test_modulated_quadratic_has_only_trivial_solution(boundary, solver_settings):
    H = radial_hamiltonian(1, a=1.0, modulation=0.5, frequency=1)
    solutions = PSolutionFinder(H, boundary, solver_settings).find(starts=10, seed=0)
    assert len(solutions) == 1
    trivial = solutions[0]
    assert trivial.is_trivial
    assert trivial.energy_drift is None
    assert (trivial.index_pair.i_P, trivial.index_pair.nu_P) == (2, 0)


def test_origin_hessian_path_follows_modulation():
    H = radial_hamiltonian(1, a=1.0, modulation=0.5, frequency=2)
    t = np.linspace(0.0, 1.0, 7)
    assert np.allclose(origin_hessian_path(H).evaluate(t), H.hessian(np.zeros((7, 2)), t))
    assert np.allclose(origin_hessian_path(acceptance_hamiltonian(1)).constant_value(), 9.0 * np.eye(2))


def test_acceptance_family_has_two_orbits(boundary, solver_settings, tmp_path):
    H = acceptance_hamiltonian(1)
    solutions = PSolutionFinder(H, boundary, solver_settings).find(starts=200, seed=0)
    report = solutions_report(solutions)
    assert report["trivial_found"]
    assert report["orbits"] == 2
    assert report["max_residual"] <= 1e-10
    assert all(s.energy_drift <= 1e-8 * (1.0 + abs(float(H.value(s.x0)))) for s in solutions)

    radii = sorted({round(float(np.dot(s.x0, s.x0)), 6) for s in solutions if not s.is_trivial})
    assert radii == pytest.approx([INNER_CIRCLE, OUTER_CIRCLE], abs=1e-6)

    csv_path = tmp_path / "orbits.csv"
    export_solutions_csv(solutions, str(csv_path))
    frame = pd.read_csv(csv_path)
    assert set(frame["solution"]) == set(range(len(solutions)))


def test_group_orbits_merges_rotated_points():
    def solution(x0):
        x0 = np.asarray(x0, dtype=float)
        return PSolution(x0=x0, trajectory=x0[None, :], residual=0.0,
                         action_like_norm=float(np.linalg.norm(x0)), is_trivial=False)

    outer = np.sqrt(OUTER_CIRCLE)
    solutions = [
        solution([outer, 0.0]),
        solution([0.0, outer]),
        solution([np.sqrt(INNER_CIRCLE), 0.0]),
    ]
    counts = group_orbits(solutions, acceptance_hamiltonian(1))
    assert counts == {"points": 3, "orbits": 2}
    assert solutions[0].orbit == solutions[1].orbit != solutions[2].orbit

    # Without radial symmetry every point is its own orbit
    callback = HamiltonianSpec(
        n=1, kind="callback",
        value_fn=lambda x: float(x @ x), gradient_fn=lambda x: 2.0 * x, hessian_fn=lambda x: 2.0 * np.eye(2),
    )
    assert group_orbits(solutions, callback)["orbits"] == 3
