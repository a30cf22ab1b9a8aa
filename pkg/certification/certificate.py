import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from common.errors import Inconsistent, OrderingViolated, ProblemParseError
from common.model import (
    CoefficientPath,
    HamiltonianSpec,
    ProblemFile,
    SolverSettings,
    SymplecticBoundary,
    constant_path,
    ordering_margin,
    sampled_path,
    trig_path,
)
from common.numerics import max_abs, min_eigenvalue, quadrature_nodes, standard_symplectic
from spectral.homotopy import CrossingScanner
from spectral.index import IndexPair, maslov_index

logger = logging.getLogger(__name__)

SEMIDEFINITE_SLACK = -1e-8
STRICT_ORDER = 1e-6
SANDWICH_SAMPLES = 200
ORIGIN_SAMPLES = 65
HYPOTHESIS_CHECKS = (
    "orthogonal_symplectic",
    "H_equivariance",
    "H0_critical_origin",
    "Hinf_sandwich",
    "index_agreement_i_B1_eq_i_B2",
    "nullity_B2_zero",
)


class Comparison(Enum):
    EQUAL = "=="
    NOT_EQUAL = "!="
    GREATER_THAN = ">"
    GREATER_EQUAL = ">="
    LESS_THAN = "<"
    LESS_EQUAL = "<="
    NOT_IN = "not in"


@dataclass
class Check:
    name: str
    passed: bool
    value: Any
    comparison: Comparison
    reference: Any
    evidence: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "value": self.value,
            "comparison": self.comparison.value,
            "reference": self.reference,
            "evidence": self.evidence,
        }


class Certificate:
    """Ledger of hypothesis checks with the predicted number of nontrivial P-solutions."""

    def __init__(self, boundary: SymplecticBoundary):
        self.boundary = boundary
        self.checks: Dict[str, Check] = {}
        self.indices: Dict[str, IndexPair] = {}
        self.crossings: Dict[str, Any] = {}
        self.warnings: List[str] = list(boundary.warnings)
        self.predicted_solutions = 0
        self.predictions: Dict[str, int] = {}
        self.start_time = time.time()

    def record(self, name: str, value: Any, comparison: Comparison, reference: Any,
               evidence: Optional[Dict[str, Any]] = None, tolerance: float = 0.0) -> bool:
        """Evaluate `value <comparison> reference` and store the outcome."""
        passed = self._evaluate(value, comparison, reference, tolerance)
        self.checks[name] = Check(name, passed, value, comparison, reference, evidence or {})
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, f"Check {name}: {value} {comparison.value} {reference} -> {'pass' if passed else 'FAIL'}")
        return passed

    @staticmethod
    def _evaluate(value: Any, comparison: Comparison, reference: Any, tolerance: float) -> bool:
        if value is None:
            return False

        if comparison == Comparison.EQUAL:
            return abs(value - reference) <= tolerance
        elif comparison == Comparison.NOT_EQUAL:
            return abs(value - reference) > tolerance
        elif comparison == Comparison.GREATER_THAN:
            return value > reference + tolerance
        elif comparison == Comparison.GREATER_EQUAL:
            return value >= reference - tolerance
        elif comparison == Comparison.LESS_THAN:
            return value < reference - tolerance
        elif comparison == Comparison.LESS_EQUAL:
            return value <= reference + tolerance
        elif comparison == Comparison.NOT_IN:
            low, high = reference
            return not (low <= value <= high)

        return False

    def passed(self, name: str) -> bool:
        return name in self.checks and self.checks[name].passed

    def failed_checks(self) -> List[str]:
        return [name for name, check in self.checks.items() if not check.passed]

    @property
    def all_passed(self) -> bool:
        return not self.failed_checks()

    def hypotheses_hold(self) -> bool:
        return all(self.passed(name) for name in HYPOTHESIS_CHECKS)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "checks": {name: check.to_dict() for name, check in self.checks.items()},
            "indices": {name: pair.to_dict() for name, pair in self.indices.items()},
            "crossings": self.crossings,
            "predictions": self.predictions,
            "predicted_solutions": self.predicted_solutions,
            "warnings": self.warnings,
        }

    def get_statistics(self) -> Dict:
        """Get certificate statistics."""
        return {
            "checks": len(self.checks),
            "failed": len(self.failed_checks()),
            "predicted_solutions": self.predicted_solutions,
            "elapsed": time.time() - self.start_time,
        }


def _index(certificate: Certificate, name: str, boundary: SymplecticBoundary, path: CoefficientPath,
           settings: SolverSettings) -> IndexPair:
    if name not in certificate.indices:
        certificate.indices[name] = maslov_index(boundary, path, settings=settings)
    return certificate.indices[name]


def _sample_times(settings: SolverSettings) -> np.ndarray:
    nodes, _ = quadrature_nodes(min(settings.quad_points, 64))
    return np.concatenate(([0.0], nodes, [1.0]))


def check_hypotheses(boundary: SymplecticBoundary, H: HamiltonianSpec, B0: CoefficientPath, B1: CoefficientPath,
                     B2: CoefficientPath, r: float, settings: Optional[SolverSettings] = None,
                     certificate: Optional[Certificate] = None) -> Certificate:
    """Equivariance of H, H'(0) = 0, B1 <= H''(x) <= B2 for |x| >= r, i_P(B1) = i_P(B2), nu_P(B2) = 0."""
    settings = settings if settings is not None else SolverSettings()
    certificate = certificate if certificate is not None else Certificate(boundary)
    n = boundary.n
    times = _sample_times(settings)
    origins = np.zeros((times.size, 2 * n))
    deviation = max_abs(B0.evaluate(times) - H.hessian(origins, times))
    if deviation > 1e-8:
        raise Inconsistent(f"B0 differs from H''(0) by {deviation:.3e}")

    J = standard_symplectic(n)
    P = boundary.P
    certificate.record(
        "orthogonal_symplectic",
        max(max_abs(P.T @ P - np.eye(2 * n)), max_abs(P.T @ J @ P - J)),
        Comparison.LESS_EQUAL, 1e-10,
    )

    equivariance = H.check_equivariance(boundary, seed=settings.seed)
    certificate.record("H_equivariance", equivariance["max_violation"], Comparison.LESS_EQUAL, 1e-10,
                       evidence=equivariance)
    consistency = H.check_consistency(seed=settings.seed)
    certificate.record("H_derivatives_consistent", consistency["gradient_error"], Comparison.LESS_EQUAL, 1e-6,
                       evidence=consistency)
    certificate.record("H0_critical_origin", float(np.max(np.linalg.norm(H.gradient(origins, times), axis=1))),
                       Comparison.LESS_EQUAL, 1e-10)

    rng = np.random.default_rng(settings.seed)
    directions = rng.standard_normal((SANDWICH_SAMPLES, 2 * n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    points = directions * rng.uniform(r, 4.0 * r, size=(SANDWICH_SAMPLES, 1))
    t = rng.uniform(0.0, 1.0, size=SANDWICH_SAMPLES)
    hessians = H.hessian(points, t)
    below = float(np.min(min_eigenvalue(hessians - B1.evaluate(t))))
    above = float(np.min(min_eigenvalue(B2.evaluate(t) - hessians)))
    certificate.record(
        "Hinf_sandwich", min(below, above), Comparison.GREATER_EQUAL, SEMIDEFINITE_SLACK,
        evidence={"radius": r, "lower_margin": below, "upper_margin": above, "samples": SANDWICH_SAMPLES},
    )

    with ThreadPoolExecutor(max_workers=max(1, min(3, settings.threads))) as executor:
        futures = {name: executor.submit(maslov_index, boundary, path, None, settings)
                   for name, path in (("B0", B0), ("B1", B1), ("B2", B2)) if name not in certificate.indices}
        for name, future in futures.items():
            certificate.indices[name] = future.result()

    i_B1 = certificate.indices["B1"]
    i_B2 = certificate.indices["B2"]
    certificate.record("index_agreement_i_B1_eq_i_B2", i_B1.i_P, Comparison.EQUAL, i_B2.i_P)
    certificate.record("nullity_B2_zero", i_B2.nu_P, Comparison.EQUAL, 0)
    return certificate


def twist_certificate(boundary: SymplecticBoundary, B0: CoefficientPath, B1: CoefficientPath, l: float,
                      settings: Optional[SolverSettings] = None,
                      certificate: Optional[Certificate] = None) -> Certificate:
    """Twist ordering between B0 and B1 with gap l >= 2 pi, and the index inequalities it implies."""
    settings = settings if settings is not None else SolverSettings()
    certificate = certificate if certificate is not None else Certificate(boundary)
    n = boundary.n

    certificate.record("l_at_least_2pi", l, Comparison.GREATER_EQUAL, 2.0 * np.pi)
    certificate.record("J_commutation_B1", B1.j_commutation(), Comparison.LESS_EQUAL, 1e-10)

    lower_margin = ordering_margin(B1.shifted(l), B0, settings.quad_points)
    upper_margin = ordering_margin(B0.shifted(l), B1, settings.quad_points)
    if lower_margin >= SEMIDEFINITE_SLACK:
        variant = "B1 + lI <= B0"
    elif upper_margin >= SEMIDEFINITE_SLACK:
        variant = "B0 + lI <= B1"
    else:
        variant = None
    certificate.record(
        "twist_condition", max(lower_margin, upper_margin), Comparison.GREATER_EQUAL, SEMIDEFINITE_SLACK,
        evidence={"variant": variant, "l": l, "lower_margin": lower_margin, "upper_margin": upper_margin},
    )

    i_B0 = _index(certificate, "B0", boundary, B0, settings)
    i_B1 = _index(certificate, "B1", boundary, B1, settings)
    i_shifted = _index(certificate, "B1+lI", boundary, B1.shifted(l), settings)
    certificate.record("index_jump", i_B1.i_P + 2 * n, Comparison.LESS_THAN, i_shifted.i_P,
                       evidence={"i_B1": i_B1.i_P, "i_B1_plus_l": i_shifted.i_P, "l": l})

    if variant == "B0 + lI <= B1":
        low, high = i_B0, i_B1
    else:
        low, high = i_B1, i_B0
    certificate.record("gap_inequality", low.i_P + low.nu_P + 2 * n, Comparison.LESS_THAN, high.i_P,
                       evidence={"variant": variant})
    return certificate


def corollary42_certificate(boundary: SymplecticBoundary, B0: CoefficientPath, B1: CoefficientPath,
                            settings: Optional[SolverSettings] = None,
                            certificate: Optional[Certificate] = None) -> Certificate:
    """Interior crossings of the segment between B0 and B1 predict nontrivial solutions."""
    settings = settings if settings is not None else SolverSettings()
    certificate = certificate if certificate is not None else Certificate(boundary)
    n = boundary.n

    if ordering_margin(B1, B0, settings.quad_points) >= STRICT_ORDER:
        start, end = B1, B0
    elif ordering_margin(B0, B1, settings.quad_points) >= STRICT_ORDER:
        start, end = B0, B1
    else:
        raise OrderingViolated(
            max(ordering_margin(B1, B0, settings.quad_points), ordering_margin(B0, B1, settings.quad_points)),
            "B0 and B1 must be strictly ordered one way or the other",
        )

    crossings = CrossingScanner(boundary, settings).scan(start, end, include_start=False)
    certificate.crossings["interior_B0_B1"] = crossings.to_dict()
    i_B0 = _index(certificate, "B0", boundary, B0, settings)

    predicted = 0
    if crossings.total > 0:
        predicted = 1
        if i_B0.nu_P == 0 and crossings.total >= 2 * n:
            predicted = 2
    certificate.record("interior_crossings", crossings.total, Comparison.GREATER_THAN, 0,
                       evidence={"sum": crossings.total, "required_for_two": 2 * n})
    certificate.predictions["corollary"] = predicted
    certificate.predicted_solutions = max(certificate.predicted_solutions, predicted)
    return certificate


def final_criterion(boundary: SymplecticBoundary, B0: CoefficientPath, B1: CoefficientPath,
                    settings: Optional[SolverSettings] = None,
                    certificate: Optional[Certificate] = None) -> Certificate:
    """i_P(B1) outside [i_P(B0), i_P(B0) + nu_P(B0)]; two solutions when also nu_P(B0) = 0 and the gap is >= 2n."""
    settings = settings if settings is not None else SolverSettings()
    certificate = certificate if certificate is not None else Certificate(boundary)
    n = boundary.n
    i_B0 = _index(certificate, "B0", boundary, B0, settings)
    i_B1 = _index(certificate, "B1", boundary, B1, settings)

    excluded = certificate.record("final_criterion", i_B1.i_P, Comparison.NOT_IN,
                                  [i_B0.i_P, i_B0.i_P + i_B0.nu_P])
    predicted = 0
    if excluded:
        predicted = 1
        if i_B0.nu_P == 0 and abs(i_B1.i_P - i_B0.i_P) >= 2 * n:
            predicted = 2
    certificate.predictions["final_criterion"] = predicted
    certificate.predicted_solutions = max(certificate.predicted_solutions, predicted)

    if "gap_inequality" in certificate.checks:
        certificate.record("twist_implies_exclusion",
                           int(excluded or not certificate.passed("gap_inequality")), Comparison.EQUAL, 1)
    return certificate


def auto_twist_shift(B0: CoefficientPath, B1: CoefficientPath, settings: SolverSettings) -> float:
    """Largest l with B1 + lI <= B0 or B0 + lI <= B1 on the grid."""
    times = _sample_times(settings)
    forward = float(np.min(min_eigenvalue(B0.evaluate(times) - B1.evaluate(times))))
    backward = float(np.min(min_eigenvalue(B1.evaluate(times) - B0.evaluate(times))))
    return max(forward, backward)


def origin_hessian_path(H: HamiltonianSpec) -> CoefficientPath:
    """B0(t) = H''(t, 0): constant for autonomous H, one cosine term for a modulated radial H."""
    dim = 2 * H.n
    if H.is_autonomous:
        return constant_path(H.hessian(np.zeros(dim)), label="B0")
    if H.is_radial:
        base = 2.0 * (H.a + H.c * H.alpha) * np.eye(dim)
        term = (2.0 * np.pi * H.frequency, H.modulation * base, np.zeros((dim, dim)))
        return trig_path(base, [term], label="B0")
    times = np.linspace(0.0, 1.0, ORIGIN_SAMPLES)
    return sampled_path(times, H.hessian(np.zeros((times.size, dim)), times), label="B0")


def certify_problem(problem: ProblemFile, settings: Optional[SolverSettings] = None) -> Certificate:
    """Full ledger for a problem with a Hamiltonian and paths B1, B2 (B0 defaults to H''(0))."""
    settings = settings if settings is not None else problem.settings
    if problem.hamiltonian is None:
        raise ProblemParseError("certify needs a 'hamiltonian' block")
    if not problem.has_paths(["B1", "B2"]):
        raise ProblemParseError("certify needs coefficient paths 'B1' and 'B2'")

    boundary = problem.boundary
    H = problem.hamiltonian
    B0 = problem.paths.get("B0") or origin_hessian_path(H)
    B1 = problem.path("B1")
    B2 = problem.path("B2")
    r = settings.r if settings.r is not None else 5.0
    l = settings.l if settings.l is not None else auto_twist_shift(B0, B1, settings)
    logger.info(f"Certifying with r={r}, l={l:.6f}")

    certificate = Certificate(boundary)
    check_hypotheses(boundary, H, B0, B1, B2, r, settings, certificate)
    twist_certificate(boundary, B0, B1, l, settings, certificate)
    try:
        corollary42_certificate(boundary, B0, B1, settings, certificate)
    except OrderingViolated as e:
        certificate.warnings.append(f"interior crossing count skipped: {e}")
        certificate.record("interior_crossings", None, Comparison.GREATER_THAN, 0)
    final_criterion(boundary, B0, B1, settings, certificate)

    if not certificate.hypotheses_hold():
        logger.warning(f"Hypotheses failed: {certificate.failed_checks()}; no solutions predicted")
        certificate.predicted_solutions = 0
    logger.info(f"Certificate: predicted_solutions={certificate.predicted_solutions}")
    return certificate
