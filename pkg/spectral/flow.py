"""Fundamental solutions of y' = J B(t) y on [0, 1] and the Floquet-side nullity."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from common.errors import AccuracyNotReached, DimensionMismatch, IntegrationError, PreconditionViolated
from common.model import CoefficientPath, SymplecticBoundary, combine, constant_path, frame_path
from common.numerics import kernel_dimension, max_abs, standard_symplectic, symmetrize

logger = logging.getLogger(__name__)

MIN_STEPS = 64
DRIFT_LIMIT = 1e-7
DET_LIMIT = 1e-7


@dataclass(frozen=True, eq=False)
class Monodromy:
    """gamma(1) with its error estimate; `samples` holds gamma at every step point when recorded."""
    gamma_1: np.ndarray
    ode_error_estimate: float
    steps: int
    symplectic_drift: float
    det_error: float
    times: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None

    def at(self, t: float) -> np.ndarray:
        if self.samples is None:
            raise PreconditionViolated("monodromy was computed without recording samples")
        index = int(round(t * (self.times.size - 1)))
        return self.samples[index]


def _generator_grid(path: CoefficientPath, steps: int) -> np.ndarray:
    """J B(t) on the half-step grid of `steps` RK4 steps (2 * steps + 1 points)."""
    J = standard_symplectic(path.n)
    return J @ path.evaluate(np.linspace(0.0, 1.0, 2 * steps + 1))


def _rk4(A1: np.ndarray, A2: Optional[np.ndarray] = None, s: Optional[np.ndarray] = None,
         record: bool = False):
    """Classical RK4 for gamma' = A(t) gamma, gamma(0) = I.

    A1 (and A2) are sampled on the half-step grid. With A2 given, the generator
    is (1 - s) A1 + s A2 for every entry of s and gamma is batched over s.
    """
    steps = (A1.shape[0] - 1) // 2
    h = 1.0 / steps
    d = A1.shape[-1]
    if A2 is None:
        batch = 1
        weights = None
    else:
        s = np.asarray(s, dtype=float)
        batch = s.size
        weights = ((1.0 - s)[:, None, None], s[:, None, None])

    def generator(index: int) -> np.ndarray:
        if weights is None:
            return A1[index]
        return weights[0] * A1[index] + weights[1] * A2[index]

    gamma = np.broadcast_to(np.eye(d), (batch, d, d)).copy()
    history = [gamma.copy()] if record else None
    for i in range(steps):
        a0 = generator(2 * i)
        a_half = generator(2 * i + 1)
        a1 = generator(2 * i + 2)
        k1 = a0 @ gamma
        k2 = a_half @ (gamma + 0.5 * h * k1)
        k3 = a_half @ (gamma + 0.5 * h * k2)
        k4 = a1 @ (gamma + h * k3)
        gamma = gamma + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if record:
            history.append(gamma.copy())
    if record:
        return gamma, np.stack(history)
    return gamma


def _drift(gamma: np.ndarray) -> Tuple[float, float]:
    d = gamma.shape[-1]
    J = standard_symplectic(d // 2)
    drift = max_abs(np.swapaxes(gamma, -1, -2) @ J @ gamma - J)
    det_error = float(np.max(np.abs(np.linalg.det(gamma) - 1.0)))
    return drift, det_error


def verify_monodromy(gamma: np.ndarray) -> Tuple[float, float]:
    """Symplectic drift and determinant error of gamma(1), raising when either exceeds its limit."""
    drift, det_error = _drift(gamma)
    if det_error > DET_LIMIT:
        raise IntegrationError(f"det(gamma) deviates from 1 by {det_error:.3e}")
    if drift > DRIFT_LIMIT:
        raise AccuracyNotReached(f"symplectic drift {drift:.3e} exceeds {DRIFT_LIMIT:.0e}")
    return drift, det_error


def fundamental_solution(B: CoefficientPath, steps: int = 2048, tolerance: float = 1e-9,
                         max_steps: int = 32768, record: bool = False) -> Monodromy:
    """Fixed-step RK4 with a Richardson check against twice the steps."""
    if steps < MIN_STEPS:
        raise PreconditionViolated(f"steps must be at least {MIN_STEPS}, got {steps}")

    while True:
        fine_grid = _generator_grid(B, 2 * steps)
        coarse = _rk4(fine_grid[::2])[0]
        if record:
            fine, history = _rk4(fine_grid, record=True)
            fine = fine[0]
            history = history[:, 0]
        else:
            fine = _rk4(fine_grid)[0]
            history = None

        estimate = max_abs(coarse - fine) / 15.0
        logger.debug(f"RK4 with {steps} steps: Richardson estimate {estimate:.3e}")
        if estimate <= tolerance:
            break
        if 2 * steps > max_steps:
            raise AccuracyNotReached(
                f"Richardson estimate {estimate:.3e} above {tolerance:.1e} at {steps} steps"
            )
        steps *= 2

    drift, det_error = verify_monodromy(fine)

    times = np.linspace(0.0, 1.0, 2 * steps + 1) if record else None
    return Monodromy(
        gamma_1=fine,
        ode_error_estimate=estimate,
        steps=2 * steps,
        symplectic_drift=drift,
        det_error=det_error,
        times=times,
        samples=history,
    )


def segment_monodromies(B1: CoefficientPath, B2: CoefficientPath, s_values, steps: int = 2048,
                        tolerance: float = 1e-9, max_steps: int = 32768,
                        verify: bool = True) -> Tuple[np.ndarray, int, float]:
    """gamma_s(1) for the generators (1 - s) B1 + s B2, batched over s.

    Returns the monodromies, the step count used and the worst Richardson estimate
    (0.0 when `verify` is off).
    """
    if B1.n != B2.n:
        raise DimensionMismatch("segment endpoints must share the half-dimension")
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))

    while True:
        if not verify:
            grid1 = _generator_grid(B1, steps)
            grid2 = _generator_grid(B2, steps)
            return _rk4(grid1, grid2, s_values), steps, 0.0

        grid1 = _generator_grid(B1, 2 * steps)
        grid2 = _generator_grid(B2, 2 * steps)
        coarse = _rk4(grid1[::2], grid2[::2], s_values)
        fine = _rk4(grid1, grid2, s_values)
        estimate = max_abs(coarse - fine) / 15.0
        logger.debug(f"Batched RK4 over {s_values.size} parameters at {steps} steps: estimate {estimate:.3e}")
        if estimate <= tolerance:
            verify_monodromy(fine)
            return fine, 2 * steps, estimate
        if 2 * steps > max_steps:
            raise AccuracyNotReached(
                f"batched Richardson estimate {estimate:.3e} above {tolerance:.1e} at {steps} steps"
            )
        steps *= 2


def floquet_nullity(boundary: SymplecticBoundary, B: CoefficientPath, steps: int = 2048,
                    tol: float = 1e-8, tolerance: float = 1e-9, max_steps: int = 32768) -> Tuple[int, float]:
    """nu_P(B) = dim ker(gamma(1) - P) with the spectral gap of the decision."""
    if boundary.n != B.n:
        raise DimensionMismatch(f"boundary n={boundary.n} but path n={B.n}")
    monodromy = fundamental_solution(B, steps=steps, tolerance=tolerance, max_steps=max_steps)
    return kernel_dimension(monodromy.gamma_1 - boundary.P, tol)


def tilde_transform(boundary: SymplecticBoundary, B: CoefficientPath) -> CoefficientPath:
    """B~(t) = J M1 + exp(t M1)^T B(t) exp(t M1), the generator of gamma_P(t)^{-1} gamma_B(t)."""
    if boundary.n != B.n:
        raise DimensionMismatch(f"boundary n={boundary.n} but path n={B.n}")
    correction = constant_path(symmetrize(boundary.J @ boundary.M1))
    conjugated = frame_path(B, -boundary.M1)
    return combine([correction, conjugated], [1.0, 1.0], label=f"tilde({B.label})")
