"""Maslov P-index engine: i_P(B) as the relative Morse count I(A, A - B) on Galerkin truncations."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from common.errors import IdentityViolated, NotConverged, NullityMismatch, OffsetNotConstant, PreconditionViolated
from common.model import (
    CoefficientPath,
    SolverSettings,
    SymplecticBoundary,
    constant_path,
    identity_boundary,
    ordering_margin,
)
from common.numerics import sym_eig
from spectral.basis import assemble_A_form, assemble_B_form, build_basis
from spectral.flow import floquet_nullity, tilde_transform

logger = logging.getLogger(__name__)

TRUNCATION_STRIDE = 4
MAX_EXTRA_TRUNCATION = 32


@dataclass(frozen=True)
class IndexPair:
    i_P: int
    nu_P: int
    m_used: int
    zero_band_gap: float
    converged: bool
    floquet_gap: float = float("inf")
    levels: Tuple[Tuple[int, int, int], ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "i_P": self.i_P,
            "nu_P": self.nu_P,
            "m_used": self.m_used,
            "zero_band_gap": self.zero_band_gap,
            "floquet_gap": self.floquet_gap,
            "converged": self.converged,
            "levels": [list(level) for level in self.levels],
        }


@dataclass(frozen=True, eq=False)
class _Level:
    """Spectra of the truncated forms at one truncation."""
    m: int
    ab_eigenvalues: np.ndarray
    a_eigenvalues: np.ndarray

    def counts(self, tol: float) -> Dict[str, Any]:
        tau = tol * max(abs(self.ab_eigenvalues[0]), abs(self.ab_eigenvalues[-1]))
        tau_a = tol * max(abs(self.a_eigenvalues[0]), abs(self.a_eigenvalues[-1]))
        outside = np.abs(self.ab_eigenvalues)[np.abs(self.ab_eigenvalues) > tau]
        return {
            "m": self.m,
            "negative": int(np.count_nonzero(self.ab_eigenvalues < -tau)),
            "zero": int(np.count_nonzero(np.abs(self.ab_eigenvalues) <= tau)),
            "positive": int(np.count_nonzero(self.ab_eigenvalues > tau)),
            "a_negative": int(np.count_nonzero(self.a_eigenvalues < -tau_a)),
            "a_zero": int(np.count_nonzero(np.abs(self.a_eigenvalues) <= tau_a)),
            "a_positive": int(np.count_nonzero(self.a_eigenvalues > tau_a)),
            "gap": float(outside.min() / tau) if outside.size and tau > 0 else float("inf"),
        }

    def pair(self, tol: float) -> Tuple[int, int, float]:
        counts = self.counts(tol)
        return counts["negative"] - counts["a_negative"], counts["zero"], counts["gap"]

    def shifted(self, s: float) -> "_Level":
        """The level of B + sI: the form of I is the identity on the orthonormal basis."""
        return _Level(m=self.m, ab_eigenvalues=self.ab_eigenvalues - s, a_eigenvalues=self.a_eigenvalues)


def _settings(settings: Optional[SolverSettings]) -> SolverSettings:
    return settings if settings is not None else SolverSettings()


def default_truncation(B: CoefficientPath, settings: Optional[SolverSettings] = None) -> int:
    """max(m, ceil(||B||_sup / 2 pi) + 4): the Fourier band must clear the size of B."""
    settings = _settings(settings)
    return max(settings.m, 4, int(math.ceil(B.sup_norm() / (2.0 * np.pi))) + 4)


def _level(boundary: SymplecticBoundary, B: CoefficientPath, m: int, settings: SolverSettings) -> _Level:
    basis = build_basis(boundary, m)
    A = assemble_A_form(basis)
    F = assemble_B_form(basis, B, settings.quad_points, settings.quad_tolerance, settings.max_quad_points)
    return _Level(m=m, ab_eigenvalues=sym_eig(A - F, tol=1e-8).eigenvalues, a_eigenvalues=basis.a_eigenvalues)


def galerkin_counts(boundary: SymplecticBoundary, B: CoefficientPath, m: int,
                    settings: Optional[SolverSettings] = None) -> Dict[str, Any]:
    """Negative/zero/positive counts of P_m (A - B) P_m and of P_m A P_m at one truncation."""
    settings = _settings(settings)
    return _level(boundary, B, m, settings).counts(settings.tol)


def stable_truncation(compute_level: Callable[[int], Any], m: int, settings: SolverSettings,
                      what: str) -> List[Any]:
    """Levels m, m + 4, m + 8 whose (count, nullity) agree, widening m by 4 until they do.

    Each level object must provide pair(tol) -> (count, nullity, gap).
    """
    m_cap = m + MAX_EXTRA_TRUNCATION
    workers = max(1, min(3, settings.threads))
    levels: Dict[int, Any] = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        while True:
            wanted = [m + k * TRUNCATION_STRIDE for k in range(3)]
            futures = {mm: executor.submit(compute_level, mm) for mm in wanted if mm not in levels}
            for mm, future in futures.items():
                levels[mm] = future.result()
            window = [levels[mm] for mm in wanted]
            pairs = [level.pair(settings.tol)[:2] for level in window]
            if pairs[0] == pairs[1] == pairs[2]:
                return window
            logger.info(f"Truncations {wanted} disagree on {what}: {pairs}; widening")
            m += TRUNCATION_STRIDE
            if m + 2 * TRUNCATION_STRIDE > m_cap:
                raise NotConverged(f"{what} not stable across truncations up to m={m_cap}: {pairs}")


def maslov_index(boundary: SymplecticBoundary, B: CoefficientPath, m: Optional[int] = None,
                 settings: Optional[SolverSettings] = None, check_floquet: bool = True) -> IndexPair:
    """(i_P, nu_P) with i_P = #neg(A - B) - #neg(A), stable over m, m + 4, m + 8."""
    settings = _settings(settings)
    if boundary.n != B.n:
        raise PreconditionViolated(f"boundary n={boundary.n} but path n={B.n}")
    m = default_truncation(B, settings) if m is None else m
    if m < 4:
        raise PreconditionViolated(f"truncation m must be at least 4, got {m}")

    window = stable_truncation(lambda mm: _level(boundary, B, mm, settings), m, settings, "(i_P, nu_P)")
    return _index_pair(boundary, B, window, settings, check_floquet)


def _index_pair(boundary: SymplecticBoundary, B: CoefficientPath, window: List[_Level],
                settings: SolverSettings, check_floquet: bool) -> IndexPair:
    tol = settings.tol
    i_P, nu_P, gap = window[0].pair(tol)
    floquet_gap = float("inf")
    if check_floquet:
        floquet, floquet_gap = floquet_nullity(
            boundary, B, steps=settings.steps, tol=settings.tol,
            tolerance=settings.ode_tolerance, max_steps=settings.max_steps,
        )
        if nu_P != floquet:
            logger.warning(f"Galerkin nullity {nu_P} != Floquet nullity {floquet}; retrying zero band")
            for retry_tol in (tol * 10.0, tol / 10.0):
                retry = [level.pair(retry_tol) for level in window]
                if all(p[:2] == retry[0][:2] for p in retry) and retry[0][1] == floquet:
                    i_P, nu_P, gap = retry[0]
                    break
            else:
                raise NullityMismatch(nu_P, floquet)

    if gap < 100.0:
        logger.warning(f"Small zero-band gap {gap:.1f} at m={window[0].m}")
    return IndexPair(
        i_P=i_P,
        nu_P=nu_P,
        m_used=window[0].m,
        zero_band_gap=gap,
        converged=True,
        floquet_gap=floquet_gap,
        levels=tuple((level.m,) + level.pair(tol)[:2] for level in window),
    )


def index_of_gamma_P(boundary: SymplecticBoundary, settings: Optional[SolverSettings] = None) -> IndexPair:
    """Index of gamma_P(t) = exp(t M1), generated by the constant B_P = -J M1."""
    return maslov_index(boundary, constant_path(boundary.generator, label="B_P"), settings=settings)


def rotation_index_oracle(theta: float, b: float) -> int:
    """i_P(bI) for n = 1, P = R(theta): 2 #{j : 2 pi j + theta in [0, b)}, mirrored for b < 0."""
    phase = float(np.pi - np.mod(np.pi - theta, 2.0 * np.pi))
    if b >= 0:
        lo, hi, sign = 0.0, b, 1
    else:
        lo, hi, sign = b, 0.0, -1
    j_min = math.ceil((lo - phase) / (2.0 * np.pi))
    j_max = math.ceil((hi - phase) / (2.0 * np.pi)) - 1
    return sign * 2 * max(0, j_max - j_min + 1)


@dataclass(frozen=True)
class PerturbationReport:
    s0: float
    base: IndexPair
    table: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"s0": self.s0, "base": self.base.to_dict(), "table": self.table}


def nearest_crossing_distance(window: Sequence[_Level], nullity: int) -> float:
    """Distance from s = 0 to the nearest s != 0 with nu_P(B + sI) > 0, capped at 2 pi.

    nu_P(B + sI) = dim ker(A - B - sI), so the crossings are the eigenvalues of A - B
    outside the zero band.
    """
    distance = 2.0 * np.pi
    for level in window:
        magnitudes = np.sort(np.abs(level.ab_eigenvalues))
        if magnitudes.size > nullity:
            distance = min(distance, float(magnitudes[nullity]))
    return distance


def _shifted_pair(boundary: SymplecticBoundary, B: CoefficientPath, window: Sequence[_Level], s: float,
                  settings: SolverSettings) -> Tuple[int, int]:
    pairs = [level.shifted(s).pair(settings.tol)[:2] for level in window]
    if pairs[0] == pairs[1] == pairs[2]:
        return pairs[0]
    logger.info(f"Shifted window disagrees at s={s:.6f}: {pairs}; recomputing")
    pair = maslov_index(boundary, B.shifted(s), settings=settings, check_floquet=False)
    return pair.i_P, pair.nu_P


def perturbation_scan(boundary: SymplecticBoundary, B: CoefficientPath,
                      settings: Optional[SolverSettings] = None) -> PerturbationReport:
    """Verify nu_P(B +- sI) = 0, i_P(B - sI) = i_P(B), i_P(B + sI) = i_P(B) + nu_P(B) for s in (0, s0].

    One truncation window serves every shift; the Floquet side checks each nullity independently.
    """
    settings = _settings(settings)
    if boundary.n != B.n:
        raise PreconditionViolated(f"boundary n={boundary.n} but path n={B.n}")
    m = default_truncation(B.shifted(2.0 * np.pi), settings)
    window = stable_truncation(lambda mm: _level(boundary, B, mm, settings), m, settings, "(i_P, nu_P)")
    base = _index_pair(boundary, B, window, settings, check_floquet=True)
    s0 = 0.5 * nearest_crossing_distance(window, base.nu_P)
    logger.info(f"Perturbation scan: i_P={base.i_P}, nu_P={base.nu_P}, s0={s0:.6f}")

    table = []
    for s in (s0 / 4.0, s0 / 2.0, s0):
        plus = _shifted_pair(boundary, B, window, s, settings)
        minus = _shifted_pair(boundary, B, window, -s, settings)
        floquet = [
            floquet_nullity(boundary, B.shifted(shift), steps=settings.steps, tol=settings.tol,
                            tolerance=settings.ode_tolerance, max_steps=settings.max_steps)[0]
            for shift in (s, -s)
        ]
        row = {
            "s": s,
            "plus": list(plus),
            "minus": list(minus),
            "floquet": floquet,
        }
        table.append(row)
        holds = (
            plus[1] == minus[1] == 0
            and floquet == [0, 0]
            and minus[0] == base.i_P
            and plus[0] == base.i_P + base.nu_P
        )
        if not holds:
            raise IdentityViolated(s, {"base": [base.i_P, base.nu_P], **row})
    return PerturbationReport(s0=s0, base=base, table=table)


def formula10_offset(boundary: SymplecticBoundary, B: CoefficientPath,
                     settings: Optional[SolverSettings] = None) -> int:
    """i_P(B) - i_P(B_P) - i_I(B~), the shift between the P-index and the P = I index of B~."""
    settings = _settings(settings)
    tilde = tilde_transform(boundary, B)
    i_B = maslov_index(boundary, B, settings=settings).i_P
    i_gamma = index_of_gamma_P(boundary, settings).i_P
    i_tilde = maslov_index(identity_boundary(boundary.n), tilde, settings=settings).i_P
    return i_B - i_gamma - i_tilde


def formula10_check(boundary: SymplecticBoundary, paths: Sequence[CoefficientPath],
                    settings: Optional[SolverSettings] = None) -> Dict[str, Any]:
    """The offset must not depend on B; its value is compared with n but not required to equal it."""
    offsets = [formula10_offset(boundary, B, settings) for B in paths]
    if len(set(offsets)) != 1:
        raise OffsetNotConstant(offsets)
    return {
        "offset": offsets[0],
        "reference": boundary.n,
        "matches_reference": offsets[0] == boundary.n,
        "paths": len(offsets),
    }


def monotonicity_check(boundary: SymplecticBoundary, B1: CoefficientPath, B2: CoefficientPath,
                       settings: Optional[SolverSettings] = None, epsilon: float = 0.1) -> Dict[str, Any]:
    """Strict (B2 - B1 >= eps I) and weak (B1 <= B2) monotonicity of the index pair."""
    settings = _settings(settings)
    margin = ordering_margin(B1, B2, settings.quad_points)
    lower = maslov_index(boundary, B1, settings=settings)
    upper = maslov_index(boundary, B2, settings=settings)

    report = {
        "margin": margin,
        "lower": [lower.i_P, lower.nu_P],
        "upper": [upper.i_P, upper.nu_P],
        "strict_applies": margin >= epsilon,
        "weak_applies": margin >= -1e-8,
    }
    report["strict_holds"] = lower.i_P + lower.nu_P <= upper.i_P
    report["weak_holds"] = lower.i_P <= upper.i_P and lower.i_P + lower.nu_P <= upper.i_P + upper.nu_P
    report["passed"] = (not report["strict_applies"] or report["strict_holds"]) and (
        not report["weak_applies"] or report["weak_holds"]
    )
    return report
