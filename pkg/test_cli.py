#!/usr/bin/env python3
"""End-to-end tests of the maslov-p command line."""

import json
import sys
from pathlib import Path

import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from cli.maslov_p import EXIT_CHECKS_FAILED, EXIT_ERROR, EXIT_OK, RunReport, run, to_jsonable

PROBLEMS = Path(__file__).parent / "problems"


def run_report(tmp_path, *argv):
    """Run the CLI with a --json target; returns (exit code, report dict or None)."""
    target = tmp_path / "report.json"
    code = run([*argv, "--threads", "2", "--json", str(target)])
    report = json.loads(target.read_text()) if target.exists() else None
    return code, report


def test_index(tmp_path):
    code, report = run_report(tmp_path, "index", str(PROBLEMS / "rotation_scalar.json"))
    assert code == EXIT_OK
    assert report["schema_version"] == "1"
    assert report["command"] == "index"
    assert (report["results"]["i_P"], report["results"]["nu_P"]) == (2, 0)
    assert report["diagnostics"]["settings"]["threads"] == 2


def test_index_of_named_path(tmp_path):
    code, report = run_report(tmp_path, "index", str(PROBLEMS / "rotation_scalar.json"), "--path", "B_high")
    assert code == EXIT_OK
    assert report["results"]["i_P"] == 4


def test_nullity_identity(tmp_path):
    code, report = run_report(tmp_path, "nullity", str(PROBLEMS / "identity_zero.json"))
    assert code == EXIT_OK
    assert report["results"]["nu_P"] == 2
    assert report["results"]["floquet_nullity"] == 2


def test_dual_index_with_shift(tmp_path):
    code, report = run_report(tmp_path, "dual-index", str(PROBLEMS / "rotation_scalar.json"), "--l", "1.0")
    assert code == EXIT_OK
    assert report["results"]["i_dual"] == 2
    assert report["results"]["offset"] == 0
    assert report["diagnostics"]["shift_chosen"] is False


def test_relative_index(tmp_path):
    code, report = run_report(tmp_path, "relative-index", str(PROBLEMS / "rotation_scalar.json"),
                              "--from", "B_low", "--to", "B_high")
    assert code == EXIT_OK
    assert report["results"]["relative_index"] == 4
    assert [c["nu"] for c in report["results"]["crossings"]] == [2, 2]


def test_spectrum(tmp_path):
    code, report = run_report(tmp_path, "spectrum", str(PROBLEMS / "rotation_scalar.json"))
    assert code == EXIT_OK
    results = report["results"]
    assert results["shells_consistent"] is True
    assert results["M1_eigenphases"] == pytest.approx([1.5707963267948966] * 2)
    assert len(results["a_spectrum"]) == 2 * (2 * results["m"] + 1)


def test_certify_acceptance(tmp_path):
    code, report = run_report(tmp_path, "certify", str(PROBLEMS / "acceptance_family.json"))
    assert code == EXIT_OK
    assert report["results"]["predicted_solutions"] == 2
    assert report["diagnostics"]["failed_checks"] == []


def test_certify_failing_hypotheses(tmp_path):
    code, report = run_report(tmp_path, "certify", str(PROBLEMS / "quartic_failing.json"))
    assert code == EXIT_CHECKS_FAILED
    assert report["results"]["predicted_solutions"] == 0
    assert "Hinf_sandwich" in report["diagnostics"]["failed_checks"]


def test_bad_problem_file(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text('{"n": 1, "P": ')
    code, report = run_report(tmp_path, "index", str(broken))
    assert code == EXIT_ERROR
    assert report is None


def test_missing_problem_file(tmp_path):
    code, _ = run_report(tmp_path, "index", str(tmp_path / "absent.json"))
    assert code == EXIT_ERROR


def test_unknown_path_is_an_error(tmp_path):
    code, _ = run_report(tmp_path, "index", str(PROBLEMS / "rotation_scalar.json"), "--path", "B9")
    assert code == EXIT_ERROR


def test_report_round_trip():
    report = RunReport(command="index", inputs={"source": "x.json"},
                       results={"i_P": 2, "gap": float("inf")}, diagnostics={"tol": 1e-8})
    text = report.to_json()
    restored = RunReport.from_json(text)
    assert restored.results == {"i_P": 2, "gap": "inf"}
    assert restored.to_json() == text


def test_non_finite_values_become_strings():
    assert to_jsonable([float("inf"), float("-inf"), float("nan"), 1.5]) == ["inf", "-inf", "nan", 1.5]


def test_results_are_deterministic(tmp_path):
    first_dir = tmp_path / "first"
    second_dir = tmp_path / "second"
    first_dir.mkdir()
    second_dir.mkdir()
    _, first = run_report(first_dir, "relative-index", str(PROBLEMS / "rotation_scalar.json"),
                          "--from", "B_low", "--to", "B_high")
    _, second = run_report(second_dir, "relative-index", str(PROBLEMS / "rotation_scalar.json"),
                           "--from", "B_low", "--to", "B_high")
    assert first["results"] == second["results"]


def test_floats_use_seventeen_significant_digits():
    report = RunReport(command="index", inputs={}, results={"tol": 0.1, "whole": 2.0, "i_P": 2})
    text = report.to_json()
    assert '"tol": 0.10000000000000001' in text
    assert '"whole": 2.0' in text
    assert '"i_P": 2' in text
    assert RunReport.from_json(text).results == {"tol": 0.1, "whole": 2.0, "i_P": 2}


def test_solve_exports_solutions(tmp_path):
    problem = tmp_path / "quadratic.json"
    problem.write_text(json.dumps({
        "n": 1,
        "P": {"kind": "rotation", "theta": 1.5707963267948966},
        "paths": {},
        "hamiltonian": {"kind": "radial", "a": 1.0},
    }))
    target = tmp_path / "solutions.json"
    code, report = run_report(tmp_path, "solve", str(problem), "--starts", "5", "--seed", "0",
                              "--solutions-json", str(target))
    assert code == EXIT_OK
    assert report["results"]["trivial_found"] is True
    exported = json.loads(target.read_text())
    assert len(exported) == len(report["results"]["solutions"]) == 1
    assert exported[0]["is_trivial"] is True
    assert exported[0]["index_pair"]["i_P"] == 2
    assert len(exported[0]["trajectory"]) == 257
