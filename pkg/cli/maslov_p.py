"""maslov-p: command-line front end for the P-index toolkit."""

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from certification.certificate import certify_problem
from common.errors import MaslovError, ProblemParseError
from common.model import ProblemFile, SolverSettings
from common.problem_io import dumps_json, load_problem, problem_to_dict, to_jsonable
from shooting.p_solutions import (
    PSolutionFinder,
    export_solutions_csv,
    export_solutions_json,
    jacobian_fd_error,
    solutions_report,
)
from spectral.basis import build_basis
from spectral.dual import choose_shift, dual_index
from spectral.flow import floquet_nullity
from spectral.homotopy import relative_index_report
from spectral.index import default_truncation, index_of_gamma_P, maslov_index

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECKS_FAILED = 2
COMMANDS = ("nullity", "index", "dual-index", "relative-index", "spectrum", "certify", "solve")


@dataclass
class RunReport:
    command: str
    inputs: Dict[str, Any]
    results: Dict[str, Any] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "command": self.command,
            "inputs": to_jsonable(self.inputs),
            "results": to_jsonable(self.results),
            "diagnostics": to_jsonable(self.diagnostics),
        }

    def to_json(self) -> str:
        return dumps_json(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        return cls(
            command=data["command"],
            inputs=data["inputs"],
            results=data["results"],
            diagnostics=data["diagnostics"],
            schema_version=data["schema_version"],
        )


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem", type=str, help="Problem file (JSON)")
    common.add_argument("--m", type=int, default=None, help="Initial Galerkin truncation")
    common.add_argument("--tol", type=float, default=None, help="Zero-band / rank tolerance scale")
    common.add_argument("--grid", type=int, default=None, help="Initial crossing-scan grid")
    common.add_argument("--steps", type=int, default=None, help="Initial RK4 step count")
    common.add_argument("--threads", type=int, default=None, help="Worker threads (default: logical cores)")
    common.add_argument("--path", type=str, default="B", help="Coefficient path for nullity/index/dual-index")
    common.add_argument("--json", type=str, default=None, help="Write the report to this file")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="Warnings only")

    parser = argparse.ArgumentParser(prog="maslov-p", description="Maslov P-index toolkit")
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("nullity", parents=[common], help="nu_P(B) with the Floquet cross-check")
    commands.add_parser("index", parents=[common], help="(i_P(B), nu_P(B))")
    dual = commands.add_parser("dual-index", parents=[common], help="(i_l*(B), nu_l*(B))")
    dual.add_argument("--l", type=float, default=None, help="Shift l (default: automatic)")
    relative = commands.add_parser("relative-index", parents=[common], help="I_P(B1, B2) from crossings")
    relative.add_argument("--from", dest="from_path", type=str, required=True, help="Lower path name")
    relative.add_argument("--to", dest="to_path", type=str, required=True, help="Upper path name")
    commands.add_parser("spectrum", parents=[common], help="Boundary data and the A-spectrum")
    certify = commands.add_parser("certify", parents=[common], help="Hypothesis ledger and predicted solutions")
    certify.add_argument("--l", type=float, default=None, help="Twist gap l (default: largest admissible)")
    certify.add_argument("--r", type=float, default=None, help="Radius beyond which B1 <= H'' <= B2")
    solve = commands.add_parser("solve", parents=[common], help="Find P-solutions by shooting")
    solve.add_argument("--starts", type=int, default=None, help="Number of quasi-random starts")
    solve.add_argument("--seed", type=int, default=None, help="Seed of the start sequence")
    solve.add_argument("--csv", type=str, default=None, help="Export trajectory samples as CSV")
    solve.add_argument("--solutions-json", type=str, default=None, help="Export the solutions with trajectories as JSON")
    return parser


def _settings(problem: ProblemFile, args: argparse.Namespace) -> SolverSettings:
    """CLI flags override the problem file's settings block."""
    return problem.settings.merged(
        m=args.m,
        tol=args.tol,
        grid=args.grid,
        steps=args.steps,
        threads=args.threads,
        starts=getattr(args, "starts", None),
        seed=getattr(args, "seed", None),
        l=getattr(args, "l", None),
        r=getattr(args, "r", None),
    )


def _run_nullity(problem: ProblemFile, args, settings: SolverSettings, report: RunReport) -> int:
    path = problem.path(args.path)
    pair = maslov_index(problem.boundary, path, settings=settings)
    floquet, gap = floquet_nullity(problem.boundary, path, steps=settings.steps, tol=settings.tol,
                                   tolerance=settings.ode_tolerance, max_steps=settings.max_steps)
    report.results.update({"path": args.path, "nu_P": pair.nu_P, "floquet_nullity": floquet})
    report.diagnostics.update({"floquet_gap": gap, "index": pair})
    return EXIT_OK


def _run_index(problem: ProblemFile, args, settings: SolverSettings, report: RunReport) -> int:
    pair = maslov_index(problem.boundary, problem.path(args.path), settings=settings)
    report.results.update({"path": args.path, "i_P": pair.i_P, "nu_P": pair.nu_P})
    report.diagnostics.update({"index": pair})
    return EXIT_OK


def _run_dual_index(problem: ProblemFile, args, settings: SolverSettings, report: RunReport) -> int:
    path = problem.path(args.path)
    l = settings.l if settings.l is not None else choose_shift(problem.boundary, [path], settings)
    dual = dual_index(problem.boundary, path, l, settings=settings)
    report.results.update({"path": args.path, "l": l, "i_dual": dual.i_dual, "nu_dual": dual.nu_dual,
                           "offset": dual.offset})
    report.diagnostics.update({"dual": dual, "shift_chosen": settings.l is None})
    return EXIT_OK


def _run_relative_index(problem: ProblemFile, args, settings: SolverSettings, report: RunReport) -> int:
    result = relative_index_report(problem.boundary, problem.path(args.from_path), problem.path(args.to_path),
                                   settings)
    report.results.update({"from": args.from_path, "to": args.to_path,
                           "relative_index": result["relative_index"],
                           "crossings": result["crossings"]["crossings"]})
    report.diagnostics.update({"grid": result["crossings"]["grid"], "from_index": result["from"],
                               "to_index": result["to"]})
    return EXIT_OK


def _run_spectrum(problem: ProblemFile, args, settings: SolverSettings, report: RunReport) -> int:
    boundary = problem.boundary
    m = settings.m
    if args.path in problem.paths:
        m = default_truncation(problem.path(args.path), settings)
    basis = build_basis(boundary, m)
    report.results.update({
        "boundary": boundary,
        "M1_eigenphases": boundary.phases,
        "a_spectrum": basis.a_eigenvalues,
        "m": m,
    })
    if boundary.k is not None:
        report.results["shell_counts"] = basis.shell_counts()
        report.results["shells_consistent"] = basis.shells_consistent()
    report.diagnostics["gamma_P_index"] = index_of_gamma_P(boundary, settings)
    return EXIT_OK


def _run_certify(problem: ProblemFile, args, settings: SolverSettings, report: RunReport) -> int:
    certificate = certify_problem(problem, settings)
    report.results.update({"certificate": certificate, "predicted_solutions": certificate.predicted_solutions})
    report.diagnostics["failed_checks"] = certificate.failed_checks()
    return EXIT_OK if certificate.all_passed else EXIT_CHECKS_FAILED


def _run_solve(problem: ProblemFile, args, settings: SolverSettings, report: RunReport) -> int:
    if problem.hamiltonian is None:
        raise ProblemParseError("solve needs a 'hamiltonian' block")
    finder = PSolutionFinder(problem.hamiltonian, problem.boundary, settings)
    solutions = finder.find(settings.starts, settings.seed)
    report.results.update(solutions_report(solutions, include_trajectory=True))

    rng = np.random.default_rng(settings.seed)
    probes = rng.standard_normal((20, 2 * problem.n))
    report.diagnostics["jacobian_fd_max_error"] = max(
        jacobian_fd_error(problem.hamiltonian, problem.boundary, x0, settings) for x0 in probes
    )
    report.diagnostics["finder"] = {k: v for k, v in finder.get_statistics().items() if k != "uptime"}
    if args.csv:
        export_solutions_csv(solutions, args.csv)
    if args.solutions_json:
        export_solutions_json(solutions, args.solutions_json)
    return EXIT_OK


HANDLERS = {
    "nullity": _run_nullity,
    "index": _run_index,
    "dual-index": _run_dual_index,
    "relative-index": _run_relative_index,
    "spectrum": _run_spectrum,
    "certify": _run_certify,
    "solve": _run_solve,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse, dispatch and report; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.WARNING)

    start = time.time()
    try:
        problem = load_problem(args.problem)
        settings = _settings(problem, args)
        report = RunReport(command=args.command, inputs={"problem": problem_to_dict(problem),
                                                         "source": args.problem})
        report.diagnostics["settings"] = settings.to_dict()
        code = HANDLERS[args.command](problem, args, settings, report)
    except ProblemParseError as e:
        logger.error(f"Problem file error: {e}")
        return EXIT_ERROR
    except MaslovError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR

    report.diagnostics["elapsed_seconds"] = time.time() - start
    text = report.to_json()
    if args.json:
        with open(args.json, "w") as f:
            f.write(text)
        logger.info(f"Report written to {args.json}")
    else:
        print(text)

    if code == EXIT_CHECKS_FAILED:
        logger.warning(f"{args.command}: checks failed: {report.diagnostics.get('failed_checks')}")
    return code


def main():
    logging.basicConfig(level=logging.INFO)
    sys.exit(run())


if __name__ == "__main__":
    main()
