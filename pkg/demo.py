#!/usr/bin/env python3
"""
Demo script for the Maslov P-index toolkit.
Walks through the acceptance family H = 0.05|x|^2 + 4.45(1 - e^{-|x|^2}) with P = R(pi/2).
"""

import logging
import sys
from pathlib import Path

import numpy as np

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from certification.certificate import certify_problem
from common.model import scalar_path
from evaluation.acceptance_suite import acceptance_problem
from shooting.p_solutions import PSolutionFinder, group_orbits
from spectral.dual import dual_index
from spectral.homotopy import CrossingScanner
from spectral.index import maslov_index, rotation_index_oracle

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def demo_linear_theory(problem):
    """Index pairs, dual indices and crossings of constant coefficient paths."""
    logger.info("=== Linear theory on P = R(pi/2) ===")
    boundary = problem.boundary
    settings = problem.settings
    print(f"Eigenphases of M1: {np.round(boundary.phases, 6).tolist()}, order k = {boundary.k}")

    for b in (0.0, 1.0, 9.0):
        pair = maslov_index(boundary, scalar_path(1, b), settings=settings)
        expected = rotation_index_oracle(np.pi / 2.0, b)
        print(f"✅ i_P({b}I) = {pair.i_P}, nu_P = {pair.nu_P} (window count {expected}, m = {pair.m_used})")

    dual = dual_index(boundary, scalar_path(1, 9.0), 1.0, settings=settings)
    print(f"✅ l = 1 dual index of 9I: i* = {dual.i_dual}, offset = {dual.offset}")

    scanner = CrossingScanner(boundary, settings)
    crossings = scanner.scan(problem.path("B1"), problem.path("B0"))
    for crossing in crossings.crossings:
        print(f"   crossing at s = {crossing.s:.10f} with nullity {crossing.nu}")
    print(f"✅ I_P(0, 9I) = {crossings.total}")
    stats = scanner.get_statistics()
    print(f"   {stats['monodromy_evaluations']} monodromies, {stats['grid_doublings']} grid doublings")


def demo_certificate(problem):
    """Hypothesis ledger for the nonlinear problem."""
    logger.info("=== Certificate ===")
    certificate = certify_problem(problem)
    for name, check in certificate.checks.items():
        mark = "✅" if check.passed else "❌"
        print(f"{mark} {name}: {check.value} {check.comparison.value} {check.reference}")
    print(f"Predicted nontrivial P-solutions: {certificate.predicted_solutions}")
    return certificate


def demo_shooting(problem, starts: int = 60):
    """Newton shooting from quasi-random starts."""
    logger.info("=== Shooting ===")
    finder = PSolutionFinder(problem.hamiltonian, problem.boundary, problem.settings)
    solutions = finder.find(starts, seed=0)
    counts = group_orbits(solutions, problem.hamiltonian)

    for solution in solutions:
        kind = "trivial" if solution.is_trivial else f"orbit {solution.orbit}"
        radius = float(np.dot(solution.x0, solution.x0))
        pair = solution.index_pair
        print(f"   {kind}: |x|^2 = {radius:.6f}, residual = {solution.residual:.2e}, "
              f"index = ({pair.i_P}, {pair.nu_P})")
    print(f"✅ {counts['points']} nontrivial points on {counts['orbits']} orbits")

    stats = finder.get_statistics()
    print(f"   {stats['starts_tried']} starts, {stats['newton_iterations']} Newton steps, "
          f"{stats['multiple_shooting_runs']} multiple-shooting runs")


def main():
    print("Maslov P-index toolkit - Demo")
    print("=" * 60)
    problem = acceptance_problem()
    demo_linear_theory(problem)
    print()
    demo_certificate(problem)
    print()
    demo_shooting(problem)
    print("\n" + "=" * 60)
    print("Demo completed. Try:")
    print("  python run_maslov_p.py certify problems/acceptance_family.json")
    print("  python -m evaluation.acceptance_suite --quick")


if __name__ == "__main__":
    main()
