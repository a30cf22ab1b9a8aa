import argparse
import json
import logging
import os
import time
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from certification.certificate import certify_problem
from common.errors import MaslovError
from common.model import (
    ProblemFile,
    SolverSettings,
    acceptance_hamiltonian,
    constant_path,
    make_rotation_boundary,
    scalar_path,
)
from common.problem_generator import ProblemGenerator
from common.problem_io import dumps_json, to_jsonable
from shooting.p_solutions import PSolutionFinder, solutions_report
from spectral.dual import (
    choose_shift,
    dual_difference_check,
    dual_index,
    l_independence_check,
    offset_invariance_check,
)
from spectral.flow import floquet_nullity
from spectral.homotopy import additivity_check, relative_index_report
from spectral.index import formula10_check, maslov_index, perturbation_scan, rotation_index_oracle

logger = logging.getLogger(__name__)

ROTATION_ANGLES = (np.pi / 2.0, 1.0, 2.5)
FULL_SIZES = {"rotation_grid": 40, "suite": 200, "pairs": 50, "triples": 20, "perturbation": 200,
              "formula_paths": 10, "starts": 200}
QUICK_SIZES = {"rotation_grid": 12, "suite": 20, "pairs": 8, "triples": 4, "perturbation": 8,
               "formula_paths": 4, "starts": 40}


def acceptance_problem(settings: Optional[SolverSettings] = None) -> ProblemFile:
    """H = 0.05|x|^2 + 4.45(1 - e^{-|x|^2}), P = R(pi/2), B0 = 9I, B1 = 0, B2 = I, r = 5, l = 9."""
    settings = settings if settings is not None else SolverSettings()
    return ProblemFile(
        boundary=make_rotation_boundary(1, np.pi / 2.0),
        paths={"B0": scalar_path(1, 9.0, "B0"), "B1": scalar_path(1, 0.0, "B1"), "B2": scalar_path(1, 1.0, "B2")},
        hamiltonian=acceptance_hamiltonian(1),
        settings=settings.merged(r=5.0, l=9.0),
    )


class AcceptanceEvaluator:
    """Runs the acceptance criteria and records pass rates and timings."""

    def __init__(self, settings: Optional[SolverSettings] = None, quick: bool = False, seed: int = 0,
                 output_dir: str = "evaluation"):
        self.settings = settings if settings is not None else SolverSettings()
        self.sizes = dict(QUICK_SIZES if quick else FULL_SIZES)
        self.seed = seed
        self.output_dir = output_dir
        self.results: Dict[str, Dict[str, Any]] = {}

        # Statistics
        self.cases_run = 0
        self.cases_failed = 0
        self.start_time = time.time()

        logger.info(f"Acceptance evaluator initialized ({'quick' if quick else 'full'} sizes, seed={seed})")

    def _run_cases(self, name: str, cases: List[Callable[[], Dict[str, Any]]]) -> Dict[str, Any]:
        """Each case returns a dict with a 'passed' key; MaslovErrors count as failures."""
        records = []
        timings = []
        for case in cases:
            start = time.time()
            try:
                record = case()
            except MaslovError as e:
                logger.error(f"{name}: {type(e).__name__}: {e}")
                record = {"passed": False, "error": f"{type(e).__name__}: {e}"}
            timings.append(time.time() - start)
            records.append(record)

        passed = sum(1 for r in records if r["passed"])
        self.cases_run += len(records)
        self.cases_failed += len(records) - passed
        summary = {
            "criterion": name,
            "cases": len(records),
            "passed": passed,
            "pass_rate": passed / max(1, len(records)),
            "total_seconds": float(sum(timings)),
            "median_seconds": float(np.percentile(timings, 50)) if timings else 0.0,
            "p95_seconds": float(np.percentile(timings, 95)) if timings else 0.0,
            "records": records,
        }
        self.results[name] = summary
        logger.info(f"{name}: {passed}/{len(records)} passed in {summary['total_seconds']:.1f}s")
        return summary

    def rotation_closed_form(self) -> Dict[str, Any]:
        """i_P(bI) against the window count for P = R(theta), b on a grid that avoids crossings."""
        cases = []
        for theta in ROTATION_ANGLES:
            boundary = make_rotation_boundary(1, theta)
            crossings = theta + 2.0 * np.pi * np.arange(-3, 4)
            grid = [b for b in np.linspace(-12.0, 12.0, self.sizes["rotation_grid"])
                    if np.min(np.abs(crossings - b)) > 0.05]

            for b in grid:
                def case(boundary=boundary, theta=theta, b=float(b)):
                    pair = maslov_index(boundary, scalar_path(1, b), settings=self.settings)
                    expected = rotation_index_oracle(theta, b)
                    return {"theta": theta, "b": b, "i_P": pair.i_P, "expected": expected,
                            "passed": pair.i_P == expected and pair.nu_P == 0}
                cases.append(case)
        return self._run_cases("rotation_closed_form", cases)

    def _suite(self, count: int):
        return ProblemGenerator(self.seed).generate_suite(count)

    def nullity_agreement(self) -> Dict[str, Any]:
        """Galerkin zero band against dim ker(gamma(1) - P) on random problems."""
        settings = self.settings

        def make(boundary, path):
            def case():
                pair = maslov_index(boundary, path, settings=settings, check_floquet=False)
                floquet, _ = floquet_nullity(boundary, path, steps=settings.steps, tol=settings.tol,
                                             tolerance=settings.ode_tolerance, max_steps=settings.max_steps)
                return {"n": boundary.n, "nu_P": pair.nu_P, "floquet": floquet, "passed": pair.nu_P == floquet}
            return case

        return self._run_cases("nullity_agreement",
                               [make(b, p) for b, p in self._suite(self.sizes["suite"])])

    def relative_index(self) -> Dict[str, Any]:
        """Crossing sums against index differences on ordered pairs; additivity on ordered triples."""
        generator = ProblemGenerator(self.seed + 1)
        cases = []
        for i in range(self.sizes["pairs"]):
            boundary = generator.random_rotation_boundary(1 + i % 2)
            lower, upper = generator.random_ordered_pair(boundary)

            def case(boundary=boundary, lower=lower, upper=upper):
                report = relative_index_report(boundary, lower, upper, self.settings)
                return {"relative_index": report["relative_index"], "passed": True}
            cases.append(case)

        for i in range(self.sizes["triples"]):
            boundary = generator.random_rotation_boundary(1)
            triple = generator.random_ordered_triple(boundary)

            def case(boundary=boundary, triple=triple):
                report = additivity_check(boundary, *triple, settings=self.settings)
                return {**report, "kind": "additivity"}
            cases.append(case)
        return self._run_cases("relative_index", cases)

    def dual_theory(self) -> Dict[str, Any]:
        """nu_l* = nu_P, dual differences against relative indices, l-independence."""
        settings = self.settings
        cases = []
        for boundary, path in self._suite(self.sizes["suite"] // 4):
            def case(boundary=boundary, path=path):
                l = choose_shift(boundary, [path], settings)
                dual = dual_index(boundary, path, l, settings=settings)
                pair = maslov_index(boundary, path, settings=settings, check_floquet=False)
                return {"l": l, "nu_dual": dual.nu_dual, "nu_P": pair.nu_P, "passed": dual.nu_dual == pair.nu_P}
            cases.append(case)

        generator = ProblemGenerator(self.seed + 1)
        for i in range(self.sizes["pairs"] // 2):
            boundary = generator.random_rotation_boundary(1)
            lower, upper = generator.random_ordered_pair(boundary)

            def case(boundary=boundary, lower=lower, upper=upper):
                l1 = choose_shift(boundary, [lower, upper], settings)
                l2 = choose_shift(boundary, [lower, upper], settings, minimum=l1 + 0.5)
                difference = dual_difference_check(boundary, lower, upper, l1, settings=settings)
                independence = l_independence_check(boundary, lower, upper, l1, l2, settings=settings)
                return {"difference": difference, "independence": independence,
                        "passed": difference["equal"] and independence["passed"]}
            cases.append(case)
        return self._run_cases("dual_theory", cases)

    def dual_offset(self) -> Dict[str, Any]:
        """Offset i_l*(B) - i_P(B) is path independent; 0 at l = 1 and 2 at l = 8 for P = R(pi/2)."""
        boundary = make_rotation_boundary(1, np.pi / 2.0)
        generator = ProblemGenerator(self.seed + 2)
        random_path = generator.random_equivariant_path(boundary, scale=0.2)
        paths = [scalar_path(1, 0.0), scalar_path(1, 2.0), scalar_path(1, 9.0), random_path]
        cases = []
        for l, expected in ((1.0, 0), (8.0, 2)):
            def case(l=l, expected=expected):
                report = offset_invariance_check(boundary, paths, l, m=self.settings.m, settings=self.settings)
                return {"l": l, "offset": report["offset"], "expected": expected,
                        "bounds_ok": report["bounds_ok"], "passed": report["offset"] == expected}
            cases.append(case)
        return self._run_cases("dual_offset", cases)

    def perturbation(self) -> Dict[str, Any]:
        cases = []
        for boundary, path in self._suite(self.sizes["perturbation"]):
            def case(boundary=boundary, path=path):
                report = perturbation_scan(boundary, path, self.settings)
                return {"s0": report.s0, "passed": True}
            cases.append(case)
        return self._run_cases("perturbation", cases)

    def formula_offset(self) -> Dict[str, Any]:
        """i_P(B) - i_P(B_P) - i_I(B~) is constant over J-commuting constant B; its value is reported."""
        generator = ProblemGenerator(self.seed + 3)
        cases = []
        for theta in (np.pi / 2.0, 1.0):
            boundary = make_rotation_boundary(1, theta)
            paths = [constant_path(generator.random_j_commuting(1, scale=3.0))
                     for _ in range(self.sizes["formula_paths"])]

            def case(boundary=boundary, paths=paths, theta=theta):
                report = formula10_check(boundary, paths, self.settings)
                return {"theta": theta, **report, "passed": True}
            cases.append(case)
        return self._run_cases("formula_offset", cases)

    def multiplicity(self) -> Dict[str, Any]:
        """Certificate of the acceptance family and the solutions found by shooting."""
        problem = acceptance_problem(self.settings)

        def certify_case():
            certificate = certify_problem(problem)
            indices = certificate.indices
            return {
                "predicted_solutions": certificate.predicted_solutions,
                "failed_checks": certificate.failed_checks(),
                "i_B0": indices["B0"].i_P, "nu_B0": indices["B0"].nu_P, "i_B1": indices["B1"].i_P,
                "passed": certificate.all_passed and certificate.predicted_solutions == 2
                and indices["B0"].i_P == 4 and indices["B0"].nu_P == 0 and indices["B1"].i_P == 0,
            }

        def solve_case():
            finder = PSolutionFinder(problem.hamiltonian, problem.boundary, problem.settings)
            report = solutions_report(finder.find(self.sizes["starts"], self.seed, label_indices=False))
            energies_ok = all(
                s["energy_drift"] <= 1e-8 * (1.0 + abs(float(problem.hamiltonian.value(np.asarray(s["x0"])))))
                for s in report["solutions"]
            )
            return {
                "orbits": report["orbits"],
                "points": report["points"],
                "max_residual": report["max_residual"],
                "passed": report["orbits"] >= 2 and report["max_residual"] <= 1e-10 and energies_ok,
            }

        return self._run_cases("multiplicity", [certify_case, solve_case])

    def determinism(self) -> Dict[str, Any]:
        """Repeated runs serialize byte-for-byte identically."""
        boundary = make_rotation_boundary(1, np.pi / 2.0)
        problem = acceptance_problem(self.settings)

        def index_case():
            runs = [json.dumps(to_jsonable(maslov_index(boundary, scalar_path(1, 2.0), settings=self.settings)),
                               sort_keys=True) for _ in range(2)]
            return {"passed": runs[0] == runs[1]}

        def certify_case():
            runs = [json.dumps(to_jsonable(certify_problem(problem)), sort_keys=True) for _ in range(2)]
            return {"passed": runs[0] == runs[1]}

        def suite_case():
            first = [json.dumps(p.to_dict(), sort_keys=True) for _, p in self._suite(5)]
            second = [json.dumps(p.to_dict(), sort_keys=True) for _, p in self._suite(5)]
            return {"passed": first == second}

        return self._run_cases("determinism", [index_case, certify_case, suite_case])

    def run_all(self) -> Dict[str, Any]:
        """Run every criterion, then save results and the text report."""
        logger.info("Starting acceptance evaluation")
        evaluation = {"evaluation_start": datetime.now().isoformat(), "sizes": self.sizes,
                      "settings": self.settings.to_dict()}

        for criterion in (self.rotation_closed_form, self.nullity_agreement, self.relative_index,
                          self.dual_theory, self.dual_offset, self.perturbation, self.formula_offset,
                          self.multiplicity, self.determinism):
            logger.info(f"=== {criterion.__name__} ===")
            criterion()

        evaluation["criteria"] = self.results
        evaluation["evaluation_end"] = datetime.now().isoformat()
        evaluation["statistics"] = self.get_statistics()
        self._save_results(evaluation)
        self._generate_report(evaluation)
        return evaluation

    def summary_table(self) -> pd.DataFrame:
        rows = [{k: v for k, v in summary.items() if k != "records"} for summary in self.results.values()]
        return pd.DataFrame(rows, columns=["criterion", "cases", "passed", "pass_rate", "total_seconds",
                                           "median_seconds", "p95_seconds"])

    def _save_results(self, evaluation: Dict[str, Any]):
        os.makedirs(os.path.join(self.output_dir, "results"), exist_ok=True)
        filename = os.path.join(self.output_dir, "results", "acceptance_results.json")
        with open(filename, "w") as f:
            f.write(dumps_json(to_jsonable(evaluation)))
        logger.info(f"Results saved to {filename}")

    def _generate_report(self, evaluation: Dict[str, Any]):
        os.makedirs(os.path.join(self.output_dir, "reports"), exist_ok=True)
        report_file = os.path.join(self.output_dir, "reports", "acceptance_report.txt")
        with open(report_file, "w") as f:
            f.write("Maslov P-index toolkit - acceptance evaluation\n")
            f.write(f"Started: {evaluation['evaluation_start']}\n")
            f.write(f"Sizes: {evaluation['sizes']}\n\n")
            f.write(self.summary_table().to_string(index=False))
            f.write("\n\n")
            for name, summary in self.results.items():
                failures = [r for r in summary["records"] if not r["passed"]]
                if failures:
                    f.write(f"{name}: {len(failures)} failing case(s)\n")
                    for record in failures[:10]:
                        f.write(f"  {to_jsonable(record)}\n")
            f.write(f"\nFinished: {evaluation['evaluation_end']}\n")
        logger.info(f"Report generated: {report_file}")

    def get_statistics(self) -> Dict:
        """Get evaluator statistics."""
        return {
            "cases_run": self.cases_run,
            "cases_failed": self.cases_failed,
            "criteria": len(self.results),
            "uptime": time.time() - self.start_time,
        }


def main():
    """Main function to run the acceptance evaluation."""
    logging.basicConfig(level=logging.INFO)
    parser = argparse.ArgumentParser(description="Maslov P-index acceptance evaluation")
    parser.add_argument("--quick", action="store_true", help="Small case counts")
    parser.add_argument("--seed", type=int, default=0, help="Seed for randomized suites")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads")
    parser.add_argument("--output", type=str, default="evaluation", help="Directory for results and reports")
    args = parser.parse_args()

    settings = SolverSettings().merged(threads=args.threads, seed=args.seed)
    evaluator = AcceptanceEvaluator(settings, quick=args.quick, seed=args.seed, output_dir=args.output)
    evaluator.run_all()

    print("\n" + "=" * 80)
    print("ACCEPTANCE EVALUATION SUMMARY")
    print("=" * 80)
    print(evaluator.summary_table().to_string(index=False))
    stats = evaluator.get_statistics()
    print(f"\n{stats['cases_run'] - stats['cases_failed']}/{stats['cases_run']} cases passed")
    print("=" * 80)


if __name__ == "__main__":
    main()
