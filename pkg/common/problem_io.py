"""JSON problem files: parsing, validation and echo."""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from common.errors import MaslovError, ProblemParseError
from common.model import (
    CoefficientPath,
    HamiltonianSpec,
    ProblemFile,
    SolverSettings,
    constant_path,
    identity_boundary,
    make_rotation_boundary,
    rotating_path,
    sampled_path,
    trig_path,
    validate_boundary,
)

logger = logging.getLogger(__name__)

SETTINGS_TYPES = {
    "m": int, "tol": float, "grid": int, "max_grid": int, "steps": int, "max_steps": int,
    "ode_tolerance": float, "quad_points": int, "max_quad_points": int, "quad_tolerance": float,
    "k_max": int, "threads": int, "seed": int, "starts": int, "l": float, "r": float,
}


def load_problem(path) -> ProblemFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ProblemParseError(f"cannot read problem file {path}: {e}") from e
    return parse_problem(text, source=str(path))


def parse_problem(text: str, source: Optional[str] = None) -> ProblemFile:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemParseError(f"invalid JSON: {e.msg}", line=e.lineno, column=e.colno) from e
    return problem_from_dict(document, source=source)


def _require(mapping: Dict[str, Any], key: str, where: str) -> Any:
    if not isinstance(mapping, dict) or key not in mapping:
        raise ProblemParseError(f"{where}: missing required field '{key}'")
    return mapping[key]


def _matrix(value: Any, where: str, size: int) -> np.ndarray:
    try:
        matrix = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise ProblemParseError(f"{where}: not a numeric matrix") from e
    if matrix.shape != (size, size):
        raise ProblemParseError(f"{where}: expected a {size}x{size} matrix, got shape {matrix.shape}")
    return matrix


def _parse_boundary(spec: Dict[str, Any], n: int, k_max: int):
    kind = _require(spec, "kind", "P")
    if kind == "identity":
        return identity_boundary(n)
    if kind == "rotation":
        return make_rotation_boundary(n, float(_require(spec, "theta", "P")), k_max=k_max)
    if kind == "matrix":
        return validate_boundary(_matrix(_require(spec, "entries", "P"), "P.entries", 2 * n), k_max=k_max)
    raise ProblemParseError(f"P: unknown kind '{kind}' (expected identity, rotation or matrix)")


def _parse_path(name: str, spec: Dict[str, Any], n: int) -> CoefficientPath:
    where = f"paths.{name}"
    kind = _require(spec, "kind", where)
    size = 2 * n

    if kind == "constant":
        if "scalar" in spec:
            return constant_path(float(spec["scalar"]) * np.eye(size), label=name)
        return constant_path(_matrix(_require(spec, "matrix", where), f"{where}.matrix", size), label=name)

    if kind == "trig":
        offset = _matrix(spec.get("offset", np.zeros((size, size))), f"{where}.offset", size)
        terms = []
        for i, term in enumerate(spec.get("terms", [])):
            zero = np.zeros((size, size))
            terms.append((
                float(_require(term, "omega", f"{where}.terms[{i}]")),
                _matrix(term.get("cos", zero), f"{where}.terms[{i}].cos", size),
                _matrix(term.get("sin", zero), f"{where}.terms[{i}].sin", size),
            ))
        return trig_path(offset, terms, label=name)

    if kind == "samples":
        times = np.asarray(_require(spec, "times", where), dtype=float)
        values = np.asarray(_require(spec, "values", where), dtype=float)
        return sampled_path(times, values, label=name)

    if kind == "rotating":
        theta = float(_require(spec, "theta", where))
        return rotating_path(theta, _matrix(_require(spec, "matrix", where), f"{where}.matrix", size), label=name)

    raise ProblemParseError(f"{where}: unknown kind '{kind}'")


def _parse_hamiltonian(spec: Dict[str, Any], n: int) -> HamiltonianSpec:
    kind = spec.get("kind", "radial")
    if kind != "radial":
        raise ProblemParseError(f"hamiltonian: only the radial kind can be read from a file, got '{kind}'")
    modulation = spec.get("modulation") or {}
    if not isinstance(modulation, dict):
        raise ProblemParseError("hamiltonian.modulation must be an object with amplitude and frequency")
    return HamiltonianSpec(
        n=n,
        kind="radial",
        a=float(spec.get("a", 0.0)),
        c=float(spec.get("c", 0.0)),
        alpha=float(spec.get("alpha", 1.0)),
        q=float(spec.get("q", 0.0)),
        modulation=float(modulation.get("amplitude", 0.0)),
        frequency=int(modulation.get("frequency", 1)),
    )


def _parse_settings(spec: Dict[str, Any]) -> SolverSettings:
    if not isinstance(spec, dict):
        raise ProblemParseError("settings: expected an object")
    values = {}
    for key, value in spec.items():
        if key not in SETTINGS_TYPES:
            raise ProblemParseError(f"settings: unknown key '{key}'")
        if value is not None:
            values[key] = SETTINGS_TYPES[key](value)
    return SolverSettings().merged(**values)


def problem_from_dict(document: Dict[str, Any], source: Optional[str] = None) -> ProblemFile:
    if not isinstance(document, dict):
        raise ProblemParseError("problem document must be a JSON object")

    n = _require(document, "n", "problem")
    if not isinstance(n, int) or n < 1:
        raise ProblemParseError(f"n must be a positive integer, got {n!r}")

    settings = _parse_settings(document.get("settings", {}))
    try:
        boundary = _parse_boundary(_require(document, "P", "problem"), n, settings.k_max)
        paths = {
            name: _parse_path(name, spec, n)
            for name, spec in _require(document, "paths", "problem").items()
        }
        hamiltonian = None
        if document.get("hamiltonian") is not None:
            hamiltonian = _parse_hamiltonian(document["hamiltonian"], n)
        problem = ProblemFile(
            boundary=boundary, paths=paths, hamiltonian=hamiltonian, settings=settings, source=source
        )
    except ProblemParseError:
        raise
    except MaslovError as e:
        raise ProblemParseError(f"{type(e).__name__}: {e}") from e

    logger.info(f"Loaded problem {source or '<memory>'}: n={n}, paths={sorted(paths)}")
    return problem


def problem_to_dict(problem: ProblemFile) -> Dict[str, Any]:
    """Echo of a loaded problem for reports."""
    document = {
        "n": problem.n,
        "P": {"kind": "matrix", "entries": problem.boundary.P.tolist()},
        "paths": {name: path.to_dict() for name, path in sorted(problem.paths.items())},
        "settings": problem.settings.to_dict(),
    }
    if problem.hamiltonian is not None:
        document["hamiltonian"] = problem.hamiltonian.to_dict()
    return document


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings 'inf', '-inf' and 'nan'."""
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def format_float(value: float) -> str:
    """Seventeen significant digits, always with a decimal point or exponent."""
    if not math.isfinite(value):
        raise ValueError(f"non-finite float {value} has no JSON form")
    text = f"{value:.17g}"
    return text if ("." in text or "e" in text) else text + ".0"


def dumps_json(value: Any, indent: int = 2, _level: int = 0) -> str:
    """Indented JSON with sorted keys and every float written by format_float.

    Expects the plain types produced by to_jsonable.
    """
    inner = " " * (indent * (_level + 1))
    outer = " " * (indent * _level)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(key))}: {dumps_json(item, indent, _level + 1)}"
            for key, item in sorted(value.items(), key=lambda pair: str(pair[0]))
        ]
        return "{\n" + ",\n".join(items) + "\n" + outer + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        return "[\n" + ",\n".join(inner + dumps_json(item, indent, _level + 1) for item in value) + "\n" + outer + "]"
    if isinstance(value, float):
        return format_float(value)
    return json.dumps(value)
