"""Relative index I_P(B1, B2): nullity crossings of s -> (1 - s) B1 + s B2 over s in [0, 1)."""

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from common.errors import OrderingViolated, TheoremMismatch, UnresolvedCrossing
from common.model import CoefficientPath, SolverSettings, SymplecticBoundary, ordering_margin
from spectral.flow import segment_monodromies
from spectral.index import maslov_index

logger = logging.getLogger(__name__)

ORDERING_EPSILON = 1e-6
REFINE_XATOL = 1e-10
ENDPOINT_TOL = 1e-9
VERTEX_STEP = 1e-6
DECISION_SAFETY = 10.0
COLLAPSE_RATIO = 1e-3
COLLAPSE_FLOOR = 1e-4


@dataclass(frozen=True)
class Crossing:
    s: float
    nu: int
    refined_width: float
    sigma_min: float = 0.0


@dataclass(frozen=True)
class CrossingList:
    crossings: List[Crossing] = field(default_factory=list)
    total: int = 0
    grid: int = 0
    include_start: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "crossings": [
                {"s": c.s, "nu": c.nu, "refined_width": c.refined_width, "sigma_min": c.sigma_min}
                for c in self.crossings
            ],
            "total": self.total,
            "grid": self.grid,
            "include_start": self.include_start,
        }


class CrossingScanner:
    """Scans affine segments of coefficient paths for nullity crossings."""

    def __init__(self, boundary: SymplecticBoundary, settings: Optional[SolverSettings] = None):
        self.boundary = boundary
        self.settings = settings if settings is not None else SolverSettings()

        # Statistics
        self.scans = 0
        self.monodromy_evaluations = 0
        self.grid_doublings = 0
        self.refinements = 0
        self.start_time = time.time()
        self._lock = threading.Lock()

        logger.debug(f"CrossingScanner initialized for n={boundary.n}")

    def _count(self, evaluations: int):
        with self._lock:
            self.monodromy_evaluations += evaluations

    def _grid_sigmas(self, B1: CoefficientPath, B2: CoefficientPath, s_grid: np.ndarray):
        """Monodromies and singular values of gamma_s(1) - P on the grid, computed in parallel chunks."""
        settings = self.settings
        chunks = [chunk for chunk in np.array_split(s_grid, max(1, settings.threads)) if chunk.size]

        def run(chunk):
            return segment_monodromies(
                B1, B2, chunk, steps=settings.steps, tolerance=settings.ode_tolerance,
                max_steps=settings.max_steps,
            )

        with ThreadPoolExecutor(max_workers=max(1, settings.threads)) as executor:
            results = list(executor.map(run, chunks))
        self._count(s_grid.size)

        gammas = np.concatenate([result[0] for result in results])
        steps_used = max(result[1] for result in results)
        ode_error = max(result[2] for result in results)
        sigmas = np.linalg.svd(gammas - self.boundary.P, compute_uv=False)
        return gammas, sigmas, steps_used, ode_error

    def _monodromy_at(self, B1: CoefficientPath, B2: CoefficientPath, s: float, steps: int) -> np.ndarray:
        gamma, _, _ = segment_monodromies(B1, B2, [s], steps=steps, verify=False)
        self._count(1)
        return gamma[0]

    def _singular_values(self, B1: CoefficientPath, B2: CoefficientPath, s: float, steps: int) -> np.ndarray:
        return np.linalg.svd(self._monodromy_at(B1, B2, s, steps) - self.boundary.P, compute_uv=False)

    def _vertex(self, B1: CoefficientPath, B2: CoefficientPath, s_star: float, lo: float, hi: float,
                steps: int) -> float:
        """Apex of the V that sigma_min traces through a transversal zero, from two side samples."""
        delta = min(VERTEX_STEP, 0.25 * (hi - lo))
        left = max(lo, s_star - delta)
        right = min(hi, s_star + delta)
        if right - left <= 0.0:
            return s_star
        sigma_left = self._singular_values(B1, B2, left, steps)[-1]
        sigma_right = self._singular_values(B1, B2, right, steps)[-1]
        slope = (sigma_left + sigma_right) / (right - left)
        if slope <= 0.0:
            return s_star
        middle = 0.5 * (left + right)
        return float(np.clip(middle + (sigma_left - sigma_right) / (2.0 * slope), lo, hi))

    def scan(self, B1: CoefficientPath, B2: CoefficientPath, grid: Optional[int] = None,
             include_start: bool = True, check_order: bool = True) -> CrossingList:
        """Crossings over [0, 1) (or (0, 1) with include_start=False), each with its nullity."""
        settings = self.settings
        if check_order:
            margin = ordering_margin(B1, B2, settings.quad_points)
            if margin < ORDERING_EPSILON:
                raise OrderingViolated(margin)

        grid = grid or settings.grid
        with self._lock:
            self.scans += 1
        while True:
            try:
                crossings = self._scan_grid(B1, B2, grid, include_start)
                break
            except UnresolvedCrossing as e:
                if 2 * grid > settings.max_grid:
                    raise
                logger.info(f"{e}; doubling grid to {2 * grid}")
                with self._lock:
                    self.grid_doublings += 1
                grid *= 2

        total = sum(c.nu for c in crossings)
        logger.info(f"Crossing scan on grid {grid}: {len(crossings)} crossings, total {total}")
        return CrossingList(crossings=crossings, total=total, grid=grid, include_start=include_start)

    def _scan_grid(self, B1: CoefficientPath, B2: CoefficientPath, grid: int,
                   include_start: bool) -> List[Crossing]:
        settings = self.settings
        P = self.boundary.P
        s_grid = np.linspace(0.0, 1.0, grid + 1)
        gammas, sigmas, steps, ode_error = self._grid_sigmas(B1, B2, s_grid)
        sigma_min = sigmas[:, -1]

        # Singular values are Lipschitz in s with the constant of s -> gamma_s(1)
        lipschitz = float(np.max(np.linalg.norm(np.diff(gammas, axis=0), ord=2, axis=(1, 2)))) * grid
        tau = max(
            settings.tol * max(1.0, float(np.max(sigmas[:, 0]))),
            DECISION_SAFETY * (lipschitz * REFINE_XATOL + ode_error),
        )
        logger.debug(f"Grid {grid}: Lipschitz bound {lipschitz:.3e}, ODE error {ode_error:.3e}, tau {tau:.3e}")

        crossings: List[Crossing] = []
        start_nu = int(np.count_nonzero(sigmas[0] <= tau))
        if include_start and start_nu > 0:
            crossings.append(Crossing(s=0.0, nu=start_nu, refined_width=0.0, sigma_min=float(sigma_min[0])))

        # A zero of sigma_min lies within one grid cell of some grid point
        threshold = 2.0 * float(np.max(np.abs(np.diff(sigma_min))))
        candidates = [
            i for i in range(grid + 1)
            if sigma_min[i] <= threshold
            and (i == 0 or sigma_min[i] <= sigma_min[i - 1])
            and (i == grid or sigma_min[i] <= sigma_min[i + 1])
        ]

        last_bracket_end = -1
        for i in candidates:
            lo, hi = max(i - 1, 0), min(i + 1, grid)
            if lo < last_bracket_end:
                raise UnresolvedCrossing(f"overlapping crossing brackets near s={s_grid[i]:.6f}")
            last_bracket_end = hi

            result = minimize_scalar(
                lambda s: float(self._singular_values(B1, B2, s, steps)[-1]),
                bounds=(s_grid[lo], s_grid[hi]),
                method="bounded",
                options={"xatol": REFINE_XATOL, "maxiter": 500},
            )
            with self._lock:
                self.refinements += 1
            s_star = float(result.x)
            s_vertex = self._vertex(B1, B2, s_star, s_grid[lo], s_grid[hi], steps)
            values = self._singular_values(B1, B2, s_vertex, steps)
            if values[-1] > result.fun:
                s_vertex, values = s_star, self._singular_values(B1, B2, s_star, steps)
            nu = int(np.count_nonzero(values <= tau))
            logger.debug(
                f"Bracket [{s_grid[lo]:.6f}, {s_grid[hi]:.6f}] -> s*={s_vertex:.12f}, "
                f"sigma_min={values[-1]:.3e}, nu={nu}"
            )
            if nu == 0:
                ends = min(sigma_min[lo], sigma_min[hi])
                if values[-1] < COLLAPSE_RATIO * ends and values[-1] < COLLAPSE_FLOOR:
                    raise UnresolvedCrossing(
                        f"sigma_min fell to {values[-1]:.3e} near s={s_vertex:.6f} without reaching tau={tau:.1e}"
                    )
                continue
            if s_vertex <= ENDPOINT_TOL or s_vertex >= 1.0 - ENDPOINT_TOL:
                continue
            interior = s_grid[lo] + ENDPOINT_TOL < s_vertex < s_grid[hi] - ENDPOINT_TOL
            if not interior and 0 < lo and hi < grid:
                raise UnresolvedCrossing(f"minimum escaped its bracket near s={s_vertex:.6f}")
            if crossings and s_vertex - crossings[-1].s <= 2.0 * REFINE_XATOL:
                raise UnresolvedCrossing(f"two crossings within one bracket near s={s_vertex:.6f}")
            crossings.append(Crossing(s=s_vertex, nu=nu, refined_width=REFINE_XATOL, sigma_min=float(values[-1])))

        return crossings

    def get_statistics(self) -> Dict:
        """Get scanner statistics."""
        return {
            "scans": self.scans,
            "monodromy_evaluations": self.monodromy_evaluations,
            "grid_doublings": self.grid_doublings,
            "refinements": self.refinements,
            "uptime": time.time() - self.start_time,
        }


def crossing_scan(boundary: SymplecticBoundary, B1: CoefficientPath, B2: CoefficientPath,
                  grid: Optional[int] = None, settings: Optional[SolverSettings] = None) -> CrossingList:
    return CrossingScanner(boundary, settings).scan(B1, B2, grid=grid)


def relative_index_report(boundary: SymplecticBoundary, B1: CoefficientPath, B2: CoefficientPath,
                          settings: Optional[SolverSettings] = None) -> Dict[str, Any]:
    """Crossing sum next to the index difference; the two must agree exactly."""
    crossings = crossing_scan(boundary, B1, B2, settings=settings)
    lower = maslov_index(boundary, B1, settings=settings)
    upper = maslov_index(boundary, B2, settings=settings)
    difference = upper.i_P - lower.i_P
    if crossings.total != difference:
        raise TheoremMismatch(crossings.total, difference)
    return {
        "relative_index": crossings.total,
        "crossings": crossings.to_dict(),
        "from": lower.to_dict(),
        "to": upper.to_dict(),
    }


def relative_index(boundary: SymplecticBoundary, B1: CoefficientPath, B2: CoefficientPath,
                   settings: Optional[SolverSettings] = None) -> int:
    """I_P(B1, B2), checked against i_P(B2) - i_P(B1)."""
    return relative_index_report(boundary, B1, B2, settings)["relative_index"]


def additivity_check(boundary: SymplecticBoundary, B1: CoefficientPath, B2: CoefficientPath,
                     B3: CoefficientPath, settings: Optional[SolverSettings] = None) -> Dict[str, Any]:
    """I(B1, B2) + I(B2, B3) = I(B1, B3) for an ordered triple."""
    scanner = CrossingScanner(boundary, settings)
    first = scanner.scan(B1, B2).total
    second = scanner.scan(B2, B3).total
    whole = scanner.scan(B1, B3).total
    return {"first": first, "second": second, "whole": whole, "passed": first + second == whole}
