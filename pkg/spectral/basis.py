"""Spectral basis of W_P = {z : z(t+1) = P z(t)} and the quadratic forms <Ax, y>, <Bx, y>.

Basis functions are e_{j,a}(t) = cos(lam t) v_a + sin(lam t) J v_a with lam = 2 pi j + phi_a,
where (phi_a, v_a) are eigenpairs of -J M1.  Equivalently e_{j,a}(t) = exp(t M1) exp(2 pi j t J) v_a.
They are L2-orthonormal and A e = lam e, so the A-form is diagonal.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from common.errors import PreconditionViolated, QuadratureNotConverged
from common.model import CoefficientPath, SymplecticBoundary
from common.numerics import max_abs, quadrature_nodes, symmetrize

logger = logging.getLogger(__name__)

PHASE_MATCH_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class WPBasis:
    boundary: SymplecticBoundary
    m: int
    j_index: np.ndarray
    a_index: np.ndarray
    a_eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.boundary.n

    @property
    def dim(self) -> int:
        return self.a_eigenvalues.size

    def evaluate(self, t) -> np.ndarray:
        """Basis values, shape (T, 2n, dim): column i is e_i(t)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        vectors = self.boundary.phase_vectors[:, self.a_index]
        rotated = self.boundary.J @ vectors
        angles = t[:, None] * self.a_eigenvalues[None, :]
        return np.cos(angles)[:, None, :] * vectors[None] + np.sin(angles)[:, None, :] * rotated[None]

    def shell_counts(self) -> Dict[int, int]:
        """Eigenvalue counts in the shells [2 pi s - pi, 2 pi s + pi), interior shells only."""
        shells = np.floor((self.a_eigenvalues + np.pi) / (2.0 * np.pi)).astype(int)
        return {s: int(np.count_nonzero(shells == s)) for s in range(-self.m + 1, self.m)}

    def shells_consistent(self) -> bool:
        return all(count == 2 * self.n for count in self.shell_counts().values())


def build_basis(boundary: SymplecticBoundary, m: int) -> WPBasis:
    """Fourier band |j| <= m; dim = 2n(2m + 1), ordered by ascending A-eigenvalue."""
    if m < 1:
        raise PreconditionViolated(f"truncation m must be at least 1, got {m}")
    size = 2 * boundary.n
    js = np.repeat(np.arange(-m, m + 1), size)
    a_s = np.tile(np.arange(size), 2 * m + 1)
    lambdas = 2.0 * np.pi * js + boundary.phases[a_s]

    order = np.lexsort((a_s, js, lambdas))
    return WPBasis(
        boundary=boundary,
        m=m,
        j_index=js[order],
        a_index=a_s[order],
        a_eigenvalues=lambdas[order],
    )


def assemble_A_form(basis: WPBasis) -> np.ndarray:
    """<Ax, y> = int (-J x', y) dt is exactly diag(lam) on this basis."""
    return np.diag(basis.a_eigenvalues)


def quadrature_form(basis: WPBasis, matrix_fn: Callable[[np.ndarray], np.ndarray], quad_points: int = 256,
                    tolerance: float = 1e-9, max_points: int = 4096) -> Tuple[np.ndarray, float, int]:
    """Gauss-Legendre assembly of int (M(t) e_i, e_j) dt with point doubling.

    Returns the form, the change between the last two doublings and the point count used.
    """
    # Resolve the highest basis frequency before the first comparison
    highest = float(np.max(np.abs(basis.a_eigenvalues)))
    points = max(quad_points, int(np.ceil(highest)) + 16)

    previous = None
    while True:
        nodes, weights = quadrature_nodes(points)
        E = basis.evaluate(nodes)
        ME = matrix_fn(nodes) @ E
        form = symmetrize(np.einsum("q,qki,qkj->ij", weights, E, ME))
        if previous is not None:
            change = max_abs(form - previous)
            logger.debug(f"Quadrature with {points} points: change {change:.3e}")
            if change <= tolerance * max(1.0, max_abs(form)):
                return form, change, points
        if 2 * points > max_points:
            raise QuadratureNotConverged(f"form still changing at {points} Gauss points")
        previous = form
        points *= 2


def _commutes_with_phases(boundary: SymplecticBoundary, C: np.ndarray) -> bool:
    S = boundary.generator
    J = boundary.J
    scale = max(1.0, max_abs(C))
    return max_abs(C @ J - J @ C) <= 1e-12 * scale and max_abs(C @ S - S @ C) <= 1e-10 * scale


def exact_constant_form(basis: WPBasis, C: np.ndarray) -> np.ndarray:
    """Closed form for a constant C commuting with J and M1: delta_{jj'} delta_{phi phi'} (C v_a, v_b)."""
    vectors = basis.boundary.phase_vectors
    pairing = vectors.T @ C @ vectors
    phases = basis.boundary.phases
    same_j = basis.j_index[:, None] == basis.j_index[None, :]
    same_phase = np.abs(phases[basis.a_index][:, None] - phases[basis.a_index][None, :]) <= PHASE_MATCH_TOL
    form = np.where(same_j & same_phase, pairing[basis.a_index][:, basis.a_index], 0.0)
    return symmetrize(form)


def assemble_B_form(basis: WPBasis, B: CoefficientPath, quad_points: int = 256,
                    tolerance: float = 1e-9, max_points: int = 4096) -> np.ndarray:
    """<Bx, y> = int (B(t) x, y) dt on the basis."""
    constant = B.constant_value()
    if constant is not None and _commutes_with_phases(basis.boundary, constant):
        return exact_constant_form(basis, constant)
    form, _, _ = quadrature_form(basis, B.evaluate, quad_points, tolerance, max_points)
    return form


def l2_gram(basis: WPBasis, quad_points: int = 256) -> np.ndarray:
    """int (e_i, e_j) dt; the identity up to quadrature error."""
    size = 2 * basis.n
    form, _, _ = quadrature_form(basis, lambda t: np.broadcast_to(np.eye(size), (t.size, size, size)),
                                 quad_points=quad_points, tolerance=1e-12)
    return form
