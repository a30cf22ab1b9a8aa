import logging
from typing import List, Tuple

import numpy as np
from scipy.stats import unitary_group

from common.model import (
    CoefficientPath,
    SymplecticBoundary,
    combine,
    constant_path,
    frame_path,
    make_rotation_boundary,
    trig_path,
    validate_boundary,
)
from common.numerics import from_unitary, symmetrize

logger = logging.getLogger(__name__)


class ProblemGenerator:
    def __init__(self, seed: int = 0):
        """Initialize the random problem generator."""
        self.rng = np.random.default_rng(seed)

        # Rotation angles used by the closed-form suites
        self.rotation_angles = [np.pi / 2, 1.0, 2.5]

    def random_symmetric(self, size: int, scale: float = 1.0) -> np.ndarray:
        """Generate a symmetric matrix with entries of order `scale`."""
        A = self.rng.standard_normal((size, size))
        return scale * symmetrize(A) / np.sqrt(size)

    def random_psd(self, size: int, scale: float = 1.0) -> np.ndarray:
        """Generate a positive semidefinite matrix."""
        A = self.rng.standard_normal((size, size)) / np.sqrt(size)
        return scale * (A @ A.T)

    def random_j_commuting(self, n: int, scale: float = 1.0) -> np.ndarray:
        """Generate a symmetric matrix [[X, -Y], [Y, X]] (X symmetric, Y antisymmetric)."""
        X = symmetrize(self.rng.standard_normal((n, n)))
        Y = self.rng.standard_normal((n, n))
        Y = 0.5 * (Y - Y.T)
        return scale * np.block([[X, -Y], [Y, X]]) / np.sqrt(n)

    def random_boundary(self, n: int) -> SymplecticBoundary:
        """Generate an orthogonal symplectic P from a random unitary with random eigenphases."""
        phases = self.rng.uniform(-0.95 * np.pi, 0.95 * np.pi, size=n)
        if n == 1:
            return make_rotation_boundary(1, float(phases[0]))
        Q = unitary_group.rvs(n, random_state=self.rng)
        U = Q @ np.diag(np.exp(1j * phases)) @ Q.conj().T
        return validate_boundary(from_unitary(U))

    def random_rotation_boundary(self, n: int) -> SymplecticBoundary:
        """Generate a block rotation exp(theta J) with theta from the closed-form angles."""
        theta = self.rotation_angles[self.rng.integers(len(self.rotation_angles))]
        return make_rotation_boundary(n, theta)

    def random_periodic_path(self, n: int, degree: int = 2, scale: float = 1.0) -> CoefficientPath:
        """Generate a 1-periodic trig path of the given Fourier degree."""
        size = 2 * n
        terms = [
            (2.0 * np.pi * k, self.random_symmetric(size, scale / k), self.random_symmetric(size, scale / k))
            for k in range(1, degree + 1)
        ]
        return trig_path(self.random_symmetric(size, scale), terms)

    def random_equivariant_path(self, boundary: SymplecticBoundary, degree: int = 2,
                                scale: float = 1.0) -> CoefficientPath:
        """Generate B(t) = exp(t M1) C(t) exp(t M1)^T with C 1-periodic, so P^T B(t+1) P = B(t)."""
        degree = int(self.rng.integers(0, degree + 1))
        base = self.random_periodic_path(boundary.n, degree=degree, scale=scale)
        return frame_path(base, boundary.M1, label="random")

    def random_ordered_pair(self, boundary: SymplecticBoundary, gap: float = 0.1,
                            scale: float = 1.0) -> Tuple[CoefficientPath, CoefficientPath]:
        """Generate B1 < B2 with B2 - B1 >= gap I everywhere."""
        lower = self.random_equivariant_path(boundary, scale=scale)
        bump = frame_path(constant_path(self.random_psd(2 * boundary.n, scale)), boundary.M1)
        extra = float(self.rng.uniform(0.0, 2.0 * scale))
        upper = combine([lower, bump], [1.0, 1.0], shift=gap + extra, label="random+")
        return lower, upper

    def random_ordered_triple(self, boundary: SymplecticBoundary, gap: float = 0.1,
                              scale: float = 1.0) -> Tuple[CoefficientPath, CoefficientPath, CoefficientPath]:
        """Generate B1 < B2 < B3."""
        lower, middle = self.random_ordered_pair(boundary, gap=gap, scale=scale)
        bump = frame_path(constant_path(self.random_psd(2 * boundary.n, scale)), boundary.M1)
        upper = combine([middle, bump], [1.0, 1.0], shift=gap + float(self.rng.uniform(0.0, 2.0 * scale)))
        return lower, middle, upper

    def random_problem(self, n_max: int = 3) -> Tuple[SymplecticBoundary, CoefficientPath]:
        """Generate a random (boundary, equivariant path) pair."""
        n = int(self.rng.integers(1, n_max + 1))
        # Mostly general unitaries, sometimes the closed-form rotations
        generator = self.rng.choice(["unitary", "rotation"], p=[0.7, 0.3])
        if generator == "rotation":
            boundary = self.random_rotation_boundary(n)
        else:
            boundary = self.random_boundary(n)
        return boundary, self.random_equivariant_path(boundary, scale=float(self.rng.uniform(0.5, 3.0)))

    def generate_suite(self, count: int, n_max: int = 3) -> List[Tuple[SymplecticBoundary, CoefficientPath]]:
        """Generate `count` random problems."""
        suite = [self.random_problem(n_max) for _ in range(count)]
        logger.info(f"Generated {count} random problems (n <= {n_max})")
        return suite
