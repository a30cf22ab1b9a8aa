"""P-solutions of x' = J H'(t, x), x(1) = P x(0) by multi-start Newton shooting.

Starts are integrated together as one batch: the state (S, 2n) and the
variational matrices (S, 2n, 2n) advance through the same RK4 steps.
"""

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import qmc

from common.errors import AccuracyNotReached, BlowUp, EquivarianceBroken, PreconditionViolated
from common.model import (
    HamiltonianSpec,
    SolverSettings,
    SymplecticBoundary,
    check_equivariance,
    constant_path,
    sampled_path,
)
from common.numerics import kernel_dimension, max_abs, standard_symplectic
from common.problem_io import dumps_json, to_jsonable
from spectral.index import IndexPair, maslov_index

logger = logging.getLogger(__name__)

BLOWUP_RADIUS = 1e6
ACCEPT_RESIDUAL = 1e-10
DEDUP_DISTANCE = 1e-6
TRIVIAL_NORM = 1e-8
START_RADII = (0.5, 1.0, 2.0, 5.0, 10.0)
MAX_NEWTON = 60
SLOW_CONTRACTION = 0.5
SEGMENTS = 4
TRAJECTORY_SAMPLES = 257
BATCH_SIZE = 50
MAX_MULTIPLE_PER_BATCH = 4


@dataclass
class PSolution:
    x0: np.ndarray
    trajectory: np.ndarray
    residual: float
    action_like_norm: float
    is_trivial: bool
    energy_drift: Optional[float] = 0.0
    kernel_dimension: int = 0
    index_pair: Optional[IndexPair] = None
    orbit: int = -1
    method: str = "single"

    @property
    def degenerate(self) -> bool:
        return self.kernel_dimension > 0

    def to_dict(self, include_trajectory: bool = True) -> Dict[str, Any]:
        data = {
            "x0": self.x0.tolist(),
            "residual": self.residual,
            "action_like_norm": self.action_like_norm,
            "is_trivial": self.is_trivial,
            "energy_drift": self.energy_drift,
            "kernel_dimension": self.kernel_dimension,
            "degenerate": self.degenerate,
            "index_pair": self.index_pair.to_dict() if self.index_pair else None,
            "orbit": self.orbit,
            "method": self.method,
        }
        if include_trajectory:
            data["trajectory"] = self.trajectory.tolist()
        return data


def _rk4_flow(H: HamiltonianSpec, x0: np.ndarray, steps: int, duration: float = 1.0,
              variational: bool = True, record: int = 0, t0=0.0) -> Tuple[np.ndarray, Optional[np.ndarray], np.ndarray, Optional[np.ndarray]]:
    """Integrate a batch of starts; rows leaving the radius 1e6 ball are frozen and flagged.

    Rows start at time t0 (scalar or one per row). Returns (x(duration), Phi(duration),
    blown_up_mask, samples) where samples holds `record` + 1 evenly spaced states when record > 0.
    """
    x = np.array(x0, dtype=float, copy=True)
    S, dim = x.shape
    J = standard_symplectic(dim // 2)
    Phi = np.broadcast_to(np.eye(dim), (S, dim, dim)).copy() if variational else None
    blown = np.zeros(S, dtype=bool)
    h = duration / steps
    stride = steps // record if record else 0
    samples = [x.copy()] if record else None
    start = np.broadcast_to(np.asarray(t0, dtype=float), (S,))

    def rhs(y, t):
        return H.gradient(y, t) @ J.T

    def rhs_phi(y, M, t):
        return J @ H.hessian(y, t) @ M

    for step in range(steps):
        t, t_half, t_end = start + step * h, start + (step + 0.5) * h, start + (step + 1) * h
        if variational:
            k1, m1 = rhs(x, t), rhs_phi(x, Phi, t)
            x2, P2 = x + 0.5 * h * k1, Phi + 0.5 * h * m1
            k2, m2 = rhs(x2, t_half), rhs_phi(x2, P2, t_half)
            x3, P3 = x + 0.5 * h * k2, Phi + 0.5 * h * m2
            k3, m3 = rhs(x3, t_half), rhs_phi(x3, P3, t_half)
            x4, P4 = x + h * k3, Phi + h * m3
            k4, m4 = rhs(x4, t_end), rhs_phi(x4, P4, t_end)
            Phi = Phi + (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
        else:
            k1 = rhs(x, t)
            k2 = rhs(x + 0.5 * h * k1, t_half)
            k3 = rhs(x + 0.5 * h * k2, t_half)
            k4 = rhs(x + h * k3, t_end)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        escaped = ~(np.linalg.norm(x, axis=1) <= BLOWUP_RADIUS)
        if np.any(escaped & ~blown):
            blown |= escaped
            x[blown] = 0.0
            if variational:
                Phi[blown] = 0.0
        if record and (step + 1) % stride == 0:
            samples.append(x.copy())

    return x, Phi, blown, (np.stack(samples, axis=1) if record else None)


def _shoot_batch(H: HamiltonianSpec, boundary: SymplecticBoundary, x0: np.ndarray, steps: int,
                 variational: bool = True) -> Tuple[np.ndarray, Optional[np.ndarray], np.ndarray]:
    x1, Phi, blown, _ = _rk4_flow(H, x0, steps, variational=variational)
    residual = x1 - x0 @ boundary.P.T
    jacobian = Phi - boundary.P if variational else None
    return residual, jacobian, blown


def shoot_residual(H: HamiltonianSpec, boundary: SymplecticBoundary, x0,
                   settings: Optional[SolverSettings] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(x(1) - P x0, Phi(1) - P) with Richardson-verified RK4 steps."""
    settings = settings if settings is not None else SolverSettings()
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    steps = settings.steps
    while True:
        coarse, _, blown_coarse = _shoot_batch(H, boundary, x0, steps // 2, variational=False)
        residual, jacobian, blown = _shoot_batch(H, boundary, x0, steps)
        if blown[0] or blown_coarse[0]:
            raise BlowUp(f"trajectory from {x0[0]} left the ball of radius {BLOWUP_RADIUS:g}")
        estimate = max_abs(residual - coarse) / 15.0
        if estimate <= settings.ode_tolerance * max(1.0, max_abs(x0)):
            return residual[0], jacobian[0]
        if 2 * steps > settings.max_steps:
            raise AccuracyNotReached(f"shooting error estimate {estimate:.3e} at {steps} steps")
        logger.debug(f"Shooting estimate {estimate:.3e} at {steps} steps; doubling")
        steps *= 2


def jacobian_fd_error(H: HamiltonianSpec, boundary: SymplecticBoundary, x0, settings: Optional[SolverSettings] = None,
                      step: float = 1e-6) -> float:
    """Relative error of the variational Jacobian against central finite differences."""
    settings = settings if settings is not None else SolverSettings()
    x0 = np.asarray(x0, dtype=float)
    dim = x0.size
    h = step * max(1.0, np.linalg.norm(x0))
    probes = np.concatenate([x0 + h * np.eye(dim), x0 - h * np.eye(dim)])
    residuals, _, _ = _shoot_batch(H, boundary, probes, settings.steps, variational=False)
    fd = ((residuals[:dim] - residuals[dim:]) / (2.0 * h)).T
    _, jacobian = shoot_residual(H, boundary, x0, settings)
    return float(np.linalg.norm(fd - jacobian) / max(1.0, np.linalg.norm(jacobian)))


class PSolutionFinder:
    """Multi-start Newton shooting with deflation and symmetry-orbit grouping."""

    def __init__(self, H: HamiltonianSpec, boundary: SymplecticBoundary, settings: Optional[SolverSettings] = None):
        self.H = H
        self.boundary = boundary
        self.settings = settings if settings is not None else SolverSettings()

        # Statistics
        self.starts_tried = 0
        self.converged = 0
        self.blown_up = 0
        self.newton_iterations = 0
        self.multiple_shooting_runs = 0
        self.start_time = time.time()
        self._lock = threading.Lock()

        logger.info(f"PSolutionFinder initialized (n={boundary.n}, hamiltonian={H.kind})")

    def initial_points(self, starts: int, seed: int) -> np.ndarray:
        """Scrambled Halton points in balls of radius 0.5, 1, 2, 5, 10 (cycled)."""
        dim = 2 * self.boundary.n
        unit = qmc.Halton(d=dim, scramble=True, seed=seed).random(starts)
        cube = 2.0 * unit - 1.0
        norms = np.maximum(1.0, np.linalg.norm(cube, axis=1, keepdims=True))
        radii = np.array([START_RADII[i % len(START_RADII)] for i in range(starts)])[:, None]
        return radii * cube / norms

    def _newton_batch(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Damped Newton on a batch; returns (points, residual norms, slow-contraction mask).

        A start is slow when its last accepted step reduced the residual by less than half.
        """
        steps = self.settings.steps
        residual, jacobian, blown = _shoot_batch(self.H, self.boundary, x, steps)
        norms = np.where(blown, np.inf, np.linalg.norm(residual, axis=1))
        active = ~blown & (norms > ACCEPT_RESIDUAL)
        slow = np.zeros(x.shape[0], dtype=bool)

        for _ in range(MAX_NEWTON):
            if not np.any(active):
                break
            idx = np.flatnonzero(active)
            delta = -np.einsum("sij,sj->si", np.linalg.pinv(jacobian[idx], rcond=1e-12), residual[idx])

            alpha = np.ones(idx.size)
            accepted = np.zeros(idx.size, dtype=bool)
            new_norms = norms[idx].copy()
            for _ in range(8):
                pending = np.flatnonzero(~accepted)
                if not pending.size:
                    break
                trial = x[idx[pending]] + alpha[pending, None] * delta[pending]
                trial_residual, _, trial_blown = _shoot_batch(self.H, self.boundary, trial, steps, variational=False)
                trial_norm = np.where(trial_blown, np.inf, np.linalg.norm(trial_residual, axis=1))
                better = trial_norm < norms[idx[pending]]
                accepted[pending[better]] = True
                new_norms[pending[better]] = trial_norm[better]
                alpha[pending[~better]] *= 0.5
            with self._lock:
                self.newton_iterations += idx.size

            # A stalled line search ends the run for that start
            active[idx[~accepted]] = False
            moved = idx[accepted]
            if not moved.size:
                break
            x[moved] = x[moved] + alpha[accepted, None] * delta[accepted]
            slow[moved] = new_norms[accepted] > SLOW_CONTRACTION * norms[moved]

            residual[moved], jacobian[moved], blown_now = _shoot_batch(self.H, self.boundary, x[moved], steps)
            norms[moved] = np.where(blown_now, np.inf, np.linalg.norm(residual[moved], axis=1))
            active[moved] = ~blown_now & (norms[moved] > ACCEPT_RESIDUAL)

        slow &= np.isfinite(norms) & (norms > ACCEPT_RESIDUAL)
        return x, norms, slow

    def _multiple_shooting(self, x0: np.ndarray) -> Tuple[np.ndarray, float]:
        """Newton on (y_0, ..., y_3): flow over 1/4 matches the next node, the last one matches P y_0."""
        dim = x0.size
        steps = max(1, self.settings.steps // SEGMENTS)
        _, _, _, samples = _rk4_flow(self.H, x0[None, :], self.settings.steps, variational=False, record=SEGMENTS)
        y = samples[0, :SEGMENTS].copy()
        P = self.boundary.P
        with self._lock:
            self.multiple_shooting_runs += 1
        node_times = np.arange(SEGMENTS) / SEGMENTS

        def defects(nodes):
            ends, Phi, blown, _ = _rk4_flow(self.H, nodes, steps, duration=1.0 / SEGMENTS, t0=node_times)
            targets = np.concatenate([nodes[1:], (P @ nodes[0])[None, :]])
            return (ends - targets).ravel(), Phi, bool(np.any(blown))

        F, Phi, blown = defects(y)
        norm = np.inf if blown else float(np.linalg.norm(F))
        for _ in range(MAX_NEWTON):
            if norm <= ACCEPT_RESIDUAL:
                break
            G = np.zeros((SEGMENTS * dim, SEGMENTS * dim))
            for i in range(SEGMENTS):
                rows = slice(i * dim, (i + 1) * dim)
                G[rows, rows] = Phi[i]
                if i < SEGMENTS - 1:
                    G[rows, (i + 1) * dim:(i + 2) * dim] = -np.eye(dim)
                else:
                    G[rows, 0:dim] -= P
            delta = np.linalg.lstsq(G, -F, rcond=None)[0].reshape(SEGMENTS, dim)
            alpha = 1.0
            for _ in range(8):
                F_trial, Phi_trial, blown = defects(y + alpha * delta)
                trial_norm = np.inf if blown else float(np.linalg.norm(F_trial))
                if trial_norm < norm:
                    y, F, Phi, norm = y + alpha * delta, F_trial, Phi_trial, trial_norm
                    break
                alpha *= 0.5
            else:
                break
        return y[0], norm

    def _run_batch(self, starts: np.ndarray) -> List[Tuple[np.ndarray, str]]:
        points, norms, slow = self._newton_batch(starts.copy())
        found = [(points[i], "single") for i in np.flatnonzero(norms <= ACCEPT_RESIDUAL)]
        # Closest slow starts first
        slow_starts = np.flatnonzero(slow)
        slow_starts = slow_starts[np.argsort(norms[slow_starts], kind="stable")][:MAX_MULTIPLE_PER_BATCH]
        for i in slow_starts:
            candidate, norm = self._multiple_shooting(points[i])
            if norm <= ACCEPT_RESIDUAL:
                found.append((candidate, "multiple"))
        with self._lock:
            self.starts_tried += starts.shape[0]
            self.blown_up += int(np.count_nonzero(~np.isfinite(norms)))
        return found

    def _polish(self, x0: np.ndarray, method: str) -> Optional[PSolution]:
        """Verified residual, trajectory samples, energy drift and kernel dimension."""
        settings = self.settings
        try:
            residual, jacobian = shoot_residual(self.H, self.boundary, x0, settings)
        except (BlowUp, AccuracyNotReached) as e:
            logger.debug(f"Rejected candidate {x0}: {e}")
            return None
        residual_norm = float(np.linalg.norm(residual))
        if residual_norm > ACCEPT_RESIDUAL:
            return None
        record = TRAJECTORY_SAMPLES - 1
        steps = max(settings.steps, record) // record * record
        _, _, _, samples = _rk4_flow(self.H, x0[None, :], steps, variational=False, record=record)
        trajectory = samples[0]
        drift = None
        if self.H.is_autonomous:
            energies = np.asarray(self.H.value(trajectory))
            drift = float(np.max(np.abs(energies - energies[0])))
        peak = float(np.max(np.linalg.norm(trajectory, axis=1)))
        nullity, _ = kernel_dimension(jacobian, settings.tol)
        return PSolution(
            x0=x0,
            trajectory=trajectory,
            residual=residual_norm,
            action_like_norm=peak,
            is_trivial=peak <= TRIVIAL_NORM,
            energy_drift=drift,
            kernel_dimension=nullity,
            method=method,
        )

    def find(self, starts: Optional[int] = None, seed: Optional[int] = None,
             label_indices: bool = True) -> List[PSolution]:
        """Converged, deduplicated P-solutions sorted by x0, each labelled with its orbit and index pair."""
        settings = self.settings
        starts = settings.starts if starts is None else starts
        seed = settings.seed if seed is None else seed
        if starts < 1:
            raise PreconditionViolated(f"starts must be at least 1, got {starts}")

        points = self.initial_points(starts, seed)
        # The trivial candidate always joins the search
        points = np.concatenate([np.zeros((1, points.shape[1])), points])
        batches = [points[i:i + BATCH_SIZE] for i in range(0, points.shape[0], BATCH_SIZE)]
        with ThreadPoolExecutor(max_workers=max(1, settings.threads)) as executor:
            results = list(executor.map(self._run_batch, batches))

        candidates = [item for batch in results for item in batch]
        # Snap near-zero points so the trivial solution is exactly representable
        candidates = [(np.where(np.abs(x) <= 1e-14, 0.0, x), method) for x, method in candidates]
        candidates.sort(key=lambda item: tuple(np.round(item[0], 12)))

        unique: List[Tuple[np.ndarray, str]] = []
        for x, method in candidates:
            if all(np.linalg.norm(x - kept) > DEDUP_DISTANCE for kept, _ in unique):
                unique.append((x, method))

        solutions = [s for s in (self._polish(x, method) for x, method in unique) if s is not None]
        with self._lock:
            self.converged = len(solutions)
        group_orbits(solutions, self.H)

        for solution in solutions:
            if solution.is_trivial and solution.degenerate:
                logger.warning(f"Trivial solution is degenerate: kernel dimension {solution.kernel_dimension}")
        if label_indices:
            for solution in solutions:
                solution.index_pair = solution_index(self.H, self.boundary, solution, settings)

        orbits = len({s.orbit for s in solutions if not s.is_trivial})
        logger.info(f"Found {len(solutions)} P-solutions from {starts} starts ({orbits} nontrivial orbits)")
        return solutions

    def get_statistics(self) -> Dict:
        """Get finder statistics."""
        return {
            "starts_tried": self.starts_tried,
            "converged": self.converged,
            "blown_up": self.blown_up,
            "newton_iterations": self.newton_iterations,
            "multiple_shooting_runs": self.multiple_shooting_runs,
            "uptime": time.time() - self.start_time,
        }


def find_solutions(H: HamiltonianSpec, boundary: SymplecticBoundary, starts: int, seed: int,
                   settings: Optional[SolverSettings] = None) -> List[PSolution]:
    return PSolutionFinder(H, boundary, settings).find(starts, seed)


def _canonical(x: np.ndarray) -> np.ndarray:
    """Representative of x under x -> exp(phi J) x: the first significant complex coordinate made real positive."""
    n = x.size // 2
    z = x[:n] + 1j * x[n:]
    significant = np.flatnonzero(np.abs(z) > TRIVIAL_NORM)
    if significant.size:
        z = z * np.exp(-1j * np.angle(z[significant[0]]))
    return np.concatenate([z.real, z.imag])


def group_orbits(solutions: Sequence[PSolution], H: HamiltonianSpec) -> Dict[str, int]:
    """Assign orbit ids; radial H identifies solutions related by exp(phi J), other H keeps every point apart."""
    representatives: List[np.ndarray] = []
    for solution in solutions:
        key = _canonical(solution.x0) if H.is_radial else solution.x0
        for orbit, rep in enumerate(representatives):
            if np.linalg.norm(key - rep) <= 1e-5 * max(1.0, np.linalg.norm(rep)):
                solution.orbit = orbit
                break
        else:
            solution.orbit = len(representatives)
            representatives.append(key)
    nontrivial = [s for s in solutions if not s.is_trivial]
    return {
        "points": len(nontrivial),
        "orbits": len({s.orbit for s in nontrivial}),
    }


def solution_index(H: HamiltonianSpec, boundary: SymplecticBoundary, solution: PSolution,
                   settings: Optional[SolverSettings] = None) -> IndexPair:
    """Maslov P-index of B(t) = H''(x(t)) along the solution."""
    settings = settings if settings is not None else SolverSettings()
    times = np.linspace(0.0, 1.0, solution.trajectory.shape[0])
    hessians = H.hessian(solution.trajectory, times)
    if max_abs(hessians - hessians[0]) <= 1e-13 * max(1.0, max_abs(hessians[0])):
        path = constant_path(hessians[0], label="H''(x)")
    else:
        path = sampled_path(times, hessians, label="H''(x(t))")

    report = check_equivariance(boundary, path)
    if not report["passed"]:
        raise EquivarianceBroken(f"H''(x(1)) != P H''(x(0)) P^T (violation {report['max_violation']:.3e})")
    return maslov_index(boundary, path, settings=settings)


def solutions_report(solutions: Sequence[PSolution], include_trajectory: bool = False) -> Dict[str, Any]:
    nontrivial = [s for s in solutions if not s.is_trivial]
    return {
        "points": len(nontrivial),
        "orbits": len({s.orbit for s in nontrivial}),
        "trivial_found": any(s.is_trivial for s in solutions),
        "degenerate_trivial": any(s.is_trivial and s.degenerate for s in solutions),
        "max_residual": max((s.residual for s in solutions), default=0.0),
        "max_energy_drift": max((s.energy_drift for s in solutions if s.energy_drift is not None), default=0.0),
        "solutions": [s.to_dict(include_trajectory) for s in solutions],
    }


def export_solutions_json(solutions: Sequence[PSolution], path: str):
    """One object per solution, trajectory included, floats at full precision."""
    with open(path, "w") as f:
        f.write(dumps_json(to_jsonable([s.to_dict() for s in solutions])))
    logger.info(f"Exported {len(solutions)} solutions to {path}")


def export_solutions_csv(solutions: Sequence[PSolution], path: str):
    """One row per trajectory sample: solution, orbit, t, x_0 ... x_{2n-1}."""
    frames = []
    for number, solution in enumerate(solutions):
        samples = solution.trajectory
        frame = pd.DataFrame(samples, columns=[f"x_{i}" for i in range(samples.shape[1])])
        frame.insert(0, "t", np.linspace(0.0, 1.0, samples.shape[0]))
        frame.insert(0, "orbit", solution.orbit)
        frame.insert(0, "solution", number)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["solution", "orbit", "t"])
    table.to_csv(path, index=False)
    logger.info(f"Exported {len(table)} trajectory samples to {path}")
