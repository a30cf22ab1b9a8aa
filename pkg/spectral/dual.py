"""l-dual Morse index: negative and null directions of Q*(u) = (C_l u, u) - (Lambda_l^{-1} u, u).

C_l(t) = (B(t) + l I)^{-1} and Lambda_l = A + l I.  On the W_P spectral basis Lambda_l^{-1} is
diag(1 / (lam + l)), so only the C_l pairings need quadrature.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from common.errors import DualMismatch, OffsetNotConstant, OrderingViolated, PreconditionViolated, ShiftInvalid
from common.model import CoefficientPath, SolverSettings, SymplecticBoundary, ordering_margin
from common.numerics import min_eigenvalue, quadrature_nodes, sym_eig
from spectral.basis import WPBasis, build_basis, exact_constant_form, quadrature_form
from spectral.homotopy import relative_index
from spectral.index import default_truncation, maslov_index, stable_truncation

logger = logging.getLogger(__name__)

SHIFT_MARGIN = 1e-6
CONDITION_WARNING = 1e8


@dataclass(frozen=True)
class DualIndexReport:
    l: float
    i_dual: int
    nu_dual: int
    m_used: int
    offset: int
    theorem33_bounds_ok: Optional[bool] = None
    zero_band_gap: float = float("inf")
    condition_number: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "l": self.l,
            "i_dual": self.i_dual,
            "nu_dual": self.nu_dual,
            "m_used": self.m_used,
            "offset": self.offset,
            "theorem33_bounds_ok": self.theorem33_bounds_ok,
            "zero_band_gap": self.zero_band_gap,
            "condition_number": self.condition_number,
        }


@dataclass(frozen=True, eq=False)
class _DualLevel:
    m: int
    eigenvalues: np.ndarray

    def pair(self, tol: float) -> Tuple[int, int, float]:
        tau = tol * max(abs(self.eigenvalues[0]), abs(self.eigenvalues[-1]))
        magnitudes = np.abs(self.eigenvalues)
        outside = magnitudes[magnitudes > tau]
        gap = float(outside.min() / tau) if outside.size and tau > 0 else float("inf")
        return (
            int(np.count_nonzero(self.eigenvalues < -tau)),
            int(np.count_nonzero(magnitudes <= tau)),
            gap,
        )


def _settings(settings: Optional[SolverSettings]) -> SolverSettings:
    return settings if settings is not None else SolverSettings()


def spectrum_distance(boundary: SymplecticBoundary, value: float) -> float:
    """Distance from `value` to the A-spectrum {2 pi j + phi}."""
    wrapped = np.mod(value - boundary.phases + np.pi, 2.0 * np.pi) - np.pi
    return float(np.min(np.abs(wrapped)))


def check_shift(boundary: SymplecticBoundary, B: CoefficientPath, l: float,
                settings: Optional[SolverSettings] = None) -> bool:
    """B(t) + l I > 0 on the quadrature grid and -l outside the spectrum of A."""
    settings = _settings(settings)
    nodes, _ = quadrature_nodes(settings.quad_points)
    t = np.concatenate(([0.0], nodes, [1.0]))
    positivity = float(np.min(min_eigenvalue(B.evaluate(t)))) + l
    return positivity >= SHIFT_MARGIN and spectrum_distance(boundary, -l) >= SHIFT_MARGIN


def choose_shift(boundary: SymplecticBoundary, paths: Sequence[CoefficientPath],
                 settings: Optional[SolverSettings] = None, minimum: float = 0.0) -> float:
    """Smallest l >= minimum (up to a quarter step) valid for every path, kept 0.1 away from -spectrum."""
    settings = _settings(settings)
    nodes, _ = quadrature_nodes(settings.quad_points)
    t = np.concatenate(([0.0], nodes, [1.0]))
    lowest = min(float(np.min(min_eigenvalue(path.evaluate(t)))) for path in paths)
    l = max(minimum, 1.0 - lowest)
    while spectrum_distance(boundary, -l) < 0.1:
        l += 0.25
    logger.debug(f"Chose shift l={l:.4f} (lowest eigenvalue {lowest:.4f})")
    return l


def _resolvent_fn(B: CoefficientPath, l: float, conditions: List[float]):
    def resolvent(t: np.ndarray) -> np.ndarray:
        shifted = B.evaluate(t) + l * np.eye(B.dim)
        conditions.append(float(np.max(np.linalg.cond(shifted))))
        return np.linalg.solve(shifted, np.broadcast_to(np.eye(B.dim), shifted.shape))
    return resolvent


def _dual_level(basis: WPBasis, B: CoefficientPath, l: float, settings: SolverSettings,
                conditions: List[float]) -> _DualLevel:
    constant = B.constant_value()
    boundary = basis.boundary
    if constant is not None:
        C = np.linalg.inv(constant + l * np.eye(B.dim))
        conditions.append(float(np.linalg.cond(constant + l * np.eye(B.dim))))
        commutes = (
            np.max(np.abs(C @ boundary.J - boundary.J @ C)) <= 1e-12 * max(1.0, np.max(np.abs(C)))
            and np.max(np.abs(C @ boundary.generator - boundary.generator @ C)) <= 1e-10 * max(1.0, np.max(np.abs(C)))
        )
    else:
        commutes = False

    if commutes:
        G_C = exact_constant_form(basis, C)
    else:
        G_C, _, _ = quadrature_form(basis, _resolvent_fn(B, l, conditions), settings.quad_points,
                                    settings.quad_tolerance, settings.max_quad_points)
    G_Lambda = np.diag(1.0 / (basis.a_eigenvalues + l))
    return _DualLevel(m=basis.m, eigenvalues=sym_eig(G_C - G_Lambda, tol=1e-8).eigenvalues)


def _bounds_ok(boundary: SymplecticBoundary, l: float, m: int, offset: int) -> Optional[bool]:
    """2n(m - 1 - [[l/2pi]/k]) <= M <= 2n(m - [[l/2pi]/k]) with M = 2mn - offset; needs finite order k."""
    if boundary.k is None:
        return None
    n = boundary.n
    shells = math.floor(l / (2.0 * np.pi)) // boundary.k
    M = 2 * m * n - offset
    return 2 * n * (m - 1 - shells) <= M <= 2 * n * (m - shells)


def dual_index(boundary: SymplecticBoundary, B: CoefficientPath, l: float, m: Optional[int] = None,
               settings: Optional[SolverSettings] = None) -> DualIndexReport:
    """(i_l*, nu_l*) on the truncated spectral basis, stable over m, m + 4, m + 8."""
    settings = _settings(settings)
    if not check_shift(boundary, B, l, settings):
        raise ShiftInvalid(f"l={l} is not a valid shift (need B + lI > 0 and -l outside the spectrum of A)")
    m = default_truncation(B, settings) if m is None else m

    conditions: List[float] = []
    window = stable_truncation(
        lambda mm: _dual_level(build_basis(boundary, mm), B, l, settings, conditions), m, settings, "(i_l*, nu_l*)"
    )
    i_dual, nu_dual, gap = window[0].pair(settings.tol)
    condition = max(conditions) if conditions else 1.0
    if condition > CONDITION_WARNING:
        logger.warning(f"C_l is ill-conditioned: cond(B + lI) up to {condition:.3e}")

    m_used = window[0].m
    i_P = maslov_index(boundary, B, m=m_used, settings=settings, check_floquet=False).i_P
    offset = i_dual - i_P
    return DualIndexReport(
        l=l,
        i_dual=i_dual,
        nu_dual=nu_dual,
        m_used=m_used,
        offset=offset,
        theorem33_bounds_ok=_bounds_ok(boundary, l, m_used, offset),
        zero_band_gap=gap,
        condition_number=condition,
    )


def dual_difference_check(boundary: SymplecticBoundary, B1: CoefficientPath, B2: CoefficientPath, l: float,
                          m: Optional[int] = None, settings: Optional[SolverSettings] = None) -> Dict[str, Any]:
    """I_P(B1, B2) from crossings against i_l*(B2) - i_l*(B1)."""
    settings = _settings(settings)
    margin = ordering_margin(B1, B2, settings.quad_points)
    if margin < SHIFT_MARGIN:
        raise OrderingViolated(margin)
    for path in (B1, B2):
        if not check_shift(boundary, path, l, settings):
            raise ShiftInvalid(f"l={l} is not a valid shift for path '{path.label}'")

    m = m if m is not None else max(default_truncation(B1, settings), default_truncation(B2, settings))
    lhs = relative_index(boundary, B1, B2, settings)
    rhs = dual_index(boundary, B2, l, m, settings).i_dual - dual_index(boundary, B1, l, m, settings).i_dual
    if lhs != rhs:
        raise DualMismatch(lhs, rhs)
    return {"lhs": lhs, "rhs": rhs, "equal": True, "l": l, "m": m}


def l_independence_check(boundary: SymplecticBoundary, B1: CoefficientPath, B2: CoefficientPath,
                         l1: float, l2: float, m: Optional[int] = None,
                         settings: Optional[SolverSettings] = None) -> Dict[str, Any]:
    """Dual differences i_l*(B2) - i_l*(B1) agree for two valid shifts."""
    differences = [
        dual_index(boundary, B2, l, m, settings).i_dual - dual_index(boundary, B1, l, m, settings).i_dual
        for l in (l1, l2)
    ]
    return {"l": [l1, l2], "differences": differences, "passed": differences[0] == differences[1]}


def offset_invariance_check(boundary: SymplecticBoundary, paths: Sequence[CoefficientPath], l: float,
                            m: Optional[int] = None, settings: Optional[SolverSettings] = None) -> Dict[str, Any]:
    """i_l*(B) - i_P(B) at one truncation must be the same for every B."""
    settings = _settings(settings)
    if len(paths) < 2:
        raise PreconditionViolated("offset invariance needs at least two coefficient paths")
    m = m if m is not None else max(default_truncation(path, settings) for path in paths)

    with ThreadPoolExecutor(max_workers=max(1, settings.threads)) as executor:
        reports = list(executor.map(lambda path: dual_index(boundary, path, l, m, settings), paths))

    # Convergence may have widened some truncations; align them
    m_common = max(report.m_used for report in reports)
    if any(report.m_used != m_common for report in reports):
        reports = [dual_index(boundary, path, l, m_common, settings) for path in paths]

    offsets = [report.offset for report in reports]
    if len(set(offsets)) != 1:
        raise OffsetNotConstant(offsets)
    return {
        "offset": offsets[0],
        "bounds_ok": reports[0].theorem33_bounds_ok,
        "m": m_common,
        "l": l,
        "reports": [report.to_dict() for report in reports],
    }
