#!/usr/bin/env python3
"""Test individual components of the toolkit: kernels, boundaries, paths, flows and the spectral basis."""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st
from scipy.stats import unitary_group

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from common.errors import (
    AccuracyNotReached,
    DimensionMismatch,
    IntegrationError,
    NotOrthogonal,
    NotSymmetric,
    NotSymplectic,
    PreconditionViolated,
    ProblemParseError,
)
from common.model import (
    HamiltonianSpec,
    SolverSettings,
    acceptance_hamiltonian,
    check_equivariance,
    constant_path,
    identity_boundary,
    make_rotation_boundary,
    ordering_margin,
    radial_hamiltonian,
    rotating_path,
    sampled_path,
    scalar_path,
    trig_path,
    validate_boundary,
)
from common.numerics import (
    expm,
    from_unitary,
    kernel_dimension,
    logm_unitary,
    rotation,
    skew_flow,
    standard_symplectic,
    sym_eig,
)
from common.problem_generator import ProblemGenerator
from common.problem_io import load_problem, parse_problem, problem_to_dict
from spectral.basis import assemble_B_form, build_basis, exact_constant_form, l2_gram, quadrature_form
from spectral.flow import (
    floquet_nullity,
    fundamental_solution,
    segment_monodromies,
    tilde_transform,
    verify_monodromy,
)

PROBLEMS = Path(__file__).parent / "problems"


# Dense kernels

def test_standard_symplectic():
    J = standard_symplectic(2)
    assert np.allclose(J @ J, -np.eye(4))
    assert np.allclose(J.T, -J)


def test_rotation_matches_exponential():
    theta = 0.7
    expected = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    assert np.allclose(rotation(1, theta), expected)
    assert np.allclose(expm(theta * standard_symplectic(1)), expected)


def test_sym_eig_sorted_with_sign_convention():
    S = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, -1.0]])
    result = sym_eig(S)
    assert np.allclose(result.eigenvalues, [-1.0, 1.0, 3.0])
    for col in range(3):
        v = result.eigenvectors[:, col]
        first = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
        assert first > 0
    assert result.residual < 1e-12


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_kernel_dimension_with_gap():
    dim, gap = kernel_dimension(np.diag([1.0, 0.0, 1e-12]))
    assert dim == 2
    assert gap == pytest.approx(1e8)
    dim, gap = kernel_dimension(np.diag([1.0, 2.0]))
    assert dim == 0


@settings(max_examples=25, deadline=None)
@given(
    phases=st.lists(st.floats(min_value=-0.95 * np.pi, max_value=0.95 * np.pi), min_size=2, max_size=2),
    seed=st.integers(min_value=0, max_value=10_000),
)
def test_logarithm_reconstructs_boundary(phases, seed):
    Q = unitary_group.rvs(2, random_state=seed)
    U = Q @ np.diag(np.exp(1j * np.array(phases))) @ Q.conj().T
    P = from_unitary(U)
    M1 = logm_unitary(P)
    J = standard_symplectic(2)
    assert np.max(np.abs(expm(M1) - P)) < 1e-8
    assert np.max(np.abs(M1 + M1.T)) < 1e-10
    assert np.max(np.abs(M1 @ J - J @ M1)) < 1e-10


def test_skew_flow_matches_expm():
    boundary = validate_boundary(rotation(1, 1.2))
    t = np.array([0.0, 0.25, 1.0])
    flows = skew_flow(boundary.M1, t)
    for i, ti in enumerate(t):
        assert np.allclose(flows[i], expm(ti * boundary.M1), atol=1e-12)


# Boundaries

def test_rotation_boundary_data():
    boundary = make_rotation_boundary(1, np.pi / 2)
    assert np.allclose(boundary.phases, [np.pi / 2, np.pi / 2])
    assert boundary.k == 4
    assert boundary.dim_ker_P_minus_I == 0
    assert not boundary.warnings


def test_identity_boundary_has_full_kernel():
    boundary = identity_boundary(2)
    assert boundary.k == 1
    assert boundary.dim_ker_P_minus_I == 4


def test_irrational_rotation_has_no_finite_order():
    assert make_rotation_boundary(1, 1.0).k is None


def test_eigenphase_pi_warns():
    boundary = make_rotation_boundary(1, np.pi)
    assert boundary.warnings
    assert np.allclose(boundary.phases, [np.pi, np.pi])


def test_validate_boundary_errors():
    with pytest.raises(NotOrthogonal):
        validate_boundary(2.0 * np.eye(2))
    with pytest.raises(NotSymplectic):
        validate_boundary(np.diag([1.0, -1.0]))
    with pytest.raises(DimensionMismatch):
        validate_boundary(np.eye(3))


# Coefficient paths and Hamiltonians

def test_rotating_path_is_equivariant():
    boundary = make_rotation_boundary(1, np.pi / 2)
    path = rotating_path(np.pi / 2, np.array([[2.5, 0.3], [0.3, 1.5]]))
    assert check_equivariance(boundary, path)["passed"]


def test_non_invariant_constant_breaks_equivariance():
    boundary = make_rotation_boundary(1, np.pi / 2)
    path = constant_path(np.diag([1.0, 0.0]))
    report = check_equivariance(boundary, path)
    assert not report["passed"]
    assert report["max_violation"] == pytest.approx(1.0)


def test_path_shift_and_ordering():
    path = scalar_path(1, 2.0)
    assert np.allclose(path.shifted(1.5).evaluate(0.3)[0], 3.5 * np.eye(2))
    assert ordering_margin(scalar_path(1, 0.0), path) == pytest.approx(2.0)


def test_trig_path_evaluation():
    C = np.diag([1.0, -1.0])
    path = trig_path(np.eye(2), [(2.0 * np.pi, C, np.zeros((2, 2)))])
    assert np.allclose(path.evaluate(0.0)[0], np.diag([2.0, 0.0]))
    assert np.allclose(path.evaluate(0.5)[0], np.diag([0.0, 2.0]))


def test_sampled_path_needs_four_points():
    values = np.stack([np.eye(2)] * 3)
    with pytest.raises(DimensionMismatch):
        sampled_path([0.0, 0.5, 1.0], values)


def test_equivariant_extension_round_trip():
    boundary = make_rotation_boundary(1, np.pi / 2)
    P = boundary.P
    path = rotating_path(np.pi / 2, np.array([[2.5, 0.3], [0.3, 1.5]]))
    t = np.linspace(0.0, 1.0, 9)
    assert np.allclose(path.extended(t, boundary), path.evaluate(t))
    assert np.allclose(path.extended(t[1:] + 1.0, boundary), P @ path.evaluate(t[1:]) @ P.T, atol=1e-12)
    assert np.allclose(path.extended(t[1:] + 1.0, boundary), path.evaluate(t[1:] + 1.0), atol=1e-10)
    assert np.allclose(path.extended(t[:-1] - 1.0, boundary), P.T @ path.evaluate(t[:-1]) @ P, atol=1e-12)

    samples = sampled_path(np.linspace(0.0, 1.0, 5), np.stack([np.diag([2.0, 1.0])] * 5))
    assert np.allclose(samples.extended(1.5, boundary), np.diag([1.0, 2.0]))


def test_equivariance_checked_away_from_the_seam():
    boundary = make_rotation_boundary(1, np.pi / 2)
    D = np.diag([1.0, -1.0])
    S = np.array([[0.0, 1.0], [1.0, 0.0]])
    # Matches at the seam, but P S P^T = -S breaks B(t + 1) = P B(t) P^T inside
    path = trig_path(np.zeros((2, 2)), [(np.pi, D, np.zeros((2, 2))), (2.0 * np.pi, np.zeros((2, 2)), S)])
    report = check_equivariance(boundary, path)
    assert not report["passed"]
    assert report["max_violation"] == pytest.approx(2.0)


def test_acceptance_hamiltonian_derivatives():
    H = acceptance_hamiltonian(1)
    assert np.allclose(H.hessian(np.zeros(2)), 9.0 * np.eye(2))
    assert np.allclose(H.gradient(np.zeros(2)), 0.0)
    assert H.check_consistency(samples=20)["passed"]
    assert H.check_equivariance(make_rotation_boundary(1, np.pi / 2))["passed"]


def test_modulated_hamiltonian():
    H = radial_hamiltonian(1, a=1.0, modulation=0.5, frequency=1)
    x = np.array([0.3, -0.4])
    assert not H.is_autonomous
    assert H.value(x, 0.0) == pytest.approx(0.375)
    assert H.value(x, 0.5) == pytest.approx(0.125)
    assert np.allclose(H.hessian(np.zeros((2, 2)), [0.0, 0.25]), [3.0 * np.eye(2), 2.0 * np.eye(2)])
    assert H.check_consistency(samples=20)["passed"]
    assert H.check_equivariance(make_rotation_boundary(1, np.pi / 2))["passed"]


def test_modulation_must_be_periodic_and_bounded():
    with pytest.raises(ProblemParseError):
        radial_hamiltonian(1, a=1.0, modulation=1.5)
    with pytest.raises(ProblemParseError):
        radial_hamiltonian(1, a=1.0, modulation=0.5, frequency=0.5)


def test_time_dependent_callback_receives_time():
    H = HamiltonianSpec(
        n=1, kind="callback", time_dependent=True,
        value_fn=lambda t, x: (1.0 + t) * float(x @ x),
        gradient_fn=lambda t, x: 2.0 * (1.0 + t) * x,
        hessian_fn=lambda t, x: 2.0 * (1.0 + t) * np.eye(2),
    )
    points = np.ones((3, 2))
    assert np.allclose(H.value(points, [0.0, 0.5, 1.0]), [2.0, 3.0, 4.0])
    assert np.allclose(H.gradient(points[0], 0.5), [3.0, 3.0])
    assert H.hessian(points, 1.0).shape == (3, 2, 2)
    assert H.check_consistency(samples=10)["passed"]


def test_settings_merge():
    merged = SolverSettings().merged(m=12, tol=None)
    assert merged.m == 12
    assert merged.tol == 1e-8
    with pytest.raises(ProblemParseError):
        SolverSettings().merged(bogus=1)


# Problem files

def test_load_acceptance_problem():
    problem = load_problem(PROBLEMS / "acceptance_family.json")
    assert problem.n == 1
    assert problem.hamiltonian.a == 0.05
    assert problem.settings.l == 9.0
    assert problem.has_paths(["B0", "B1", "B2"])
    assert problem_to_dict(problem)["paths"]["B0"]["kind"] == "constant"


def test_modulated_hamiltonian_from_file():
    text = (
        '{"n": 1, "P": {"kind": "rotation", "theta": 1.5707963267948966}, "paths": {},'
        ' "hamiltonian": {"kind": "radial", "a": 1.0, "modulation": {"amplitude": 0.5, "frequency": 2}}}'
    )
    problem = parse_problem(text)
    assert problem.hamiltonian.modulation == 0.5
    assert problem.hamiltonian.frequency == 2
    assert problem_to_dict(problem)["hamiltonian"]["modulation"] == {"amplitude": 0.5, "frequency": 2}


def test_parse_error_reports_position():
    with pytest.raises(ProblemParseError) as info:
        parse_problem('{\n  "n": 1,\n  "P": }')
    assert info.value.line == 3


def test_unknown_path_kind_rejected():
    text = '{"n": 1, "P": {"kind": "identity"}, "paths": {"B": {"kind": "spline"}}}'
    with pytest.raises(ProblemParseError):
        parse_problem(text)


def test_unknown_path_name():
    problem = load_problem(PROBLEMS / "identity_zero.json")
    with pytest.raises(ProblemParseError):
        problem.path("B7")


def test_generator_is_deterministic():
    first = ProblemGenerator(3).random_symmetric(4)
    second = ProblemGenerator(3).random_symmetric(4)
    assert np.array_equal(first, second)


# Flows

@pytest.mark.parametrize("b", [0.0, 1.0, 2.0, 9.0])
def test_constant_flow_is_rotation(b):
    monodromy = fundamental_solution(scalar_path(1, b))
    assert np.max(np.abs(monodromy.gamma_1 - rotation(1, b))) < 1e-8
    assert monodromy.symplectic_drift < 1e-7


def test_recorded_flow_samples():
    monodromy = fundamental_solution(scalar_path(1, 2.0), steps=256, record=True)
    assert np.allclose(monodromy.at(0.5), rotation(1, 1.0), atol=1e-8)


def test_segment_monodromies_match_single_runs():
    gammas, _, _ = segment_monodromies(scalar_path(1, 0.0), scalar_path(1, 4.0), [0.25, 0.5])
    assert np.allclose(gammas[0], rotation(1, 1.0), atol=1e-8)
    assert np.allclose(gammas[1], rotation(1, 2.0), atol=1e-8)


def test_floquet_nullity():
    boundary = make_rotation_boundary(1, np.pi / 2)
    assert floquet_nullity(boundary, scalar_path(1, np.pi / 2))[0] == 2
    assert floquet_nullity(boundary, scalar_path(1, 2.0))[0] == 0


def test_fundamental_solution_minimum_steps():
    with pytest.raises(PreconditionViolated):
        fundamental_solution(scalar_path(1, 1.0), steps=8)


def test_monodromy_outside_symplectic_group_rejected():
    with pytest.raises(IntegrationError):
        verify_monodromy(2.0 * np.eye(2))
    # det = 1 but not symplectic
    with pytest.raises(AccuracyNotReached) as info:
        verify_monodromy(np.diag([2.0, 1.0, 1.0, 0.5]))
    assert not isinstance(info.value, IntegrationError)
    drift, det_error = verify_monodromy(rotation(2, 0.3))
    assert drift < 1e-12
    assert det_error < 1e-12


def test_tilde_transform_strips_the_boundary_flow():
    generator = ProblemGenerator(4)
    boundary = generator.random_boundary(2)
    path = generator.random_equivariant_path(boundary)
    gamma = fundamental_solution(path).gamma_1
    gamma_tilde = fundamental_solution(tilde_transform(boundary, path)).gamma_1
    assert np.max(np.abs(gamma_tilde - boundary.P.T @ gamma)) < 1e-7


# Spectral basis

def test_basis_dimension_and_order():
    basis = build_basis(make_rotation_boundary(1, np.pi / 2), 2)
    assert basis.dim == 10
    assert np.all(np.diff(basis.a_eigenvalues) >= 0)
    assert basis.shells_consistent()


def test_basis_is_orthonormal():
    basis = build_basis(make_rotation_boundary(2, 1.0), 3)
    assert np.max(np.abs(l2_gram(basis) - np.eye(basis.dim))) < 1e-10


def test_basis_satisfies_boundary_condition():
    boundary = make_rotation_boundary(1, 2.5)
    basis = build_basis(boundary, 2)
    start = basis.evaluate(0.0)[0]
    end = basis.evaluate(1.0)[0]
    assert np.allclose(end, boundary.P @ start, atol=1e-12)


def test_exact_constant_form_matches_quadrature():
    boundary = make_rotation_boundary(2, 1.0)
    generator = ProblemGenerator(1)
    C = generator.random_j_commuting(2, scale=2.0)
    basis = build_basis(boundary, 2)
    exact = exact_constant_form(basis, C)
    path = constant_path(C)
    quadrature, _, _ = quadrature_form(basis, path.evaluate)
    assert np.max(np.abs(exact - quadrature)) < 1e-8
    assert np.allclose(assemble_B_form(basis, path), exact)


def test_truncation_must_be_positive():
    with pytest.raises(PreconditionViolated):
        build_basis(identity_boundary(1), 0)


def main():
    """Run all component tests."""
    print("Maslov P-index toolkit - Component Tests")
    print("=" * 60)

    code = pytest.main([__file__, "-q"])
    if code == 0:
        print("\n✅ ALL COMPONENT TESTS PASSED!")
    else:
        print("\n❌ Some component tests failed")
    sys.exit(code)


if __name__ == "__main__":
    main()
