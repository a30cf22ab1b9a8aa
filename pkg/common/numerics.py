"""Dense linear-algebra kernels shared by every index computation.

All routines are pure functions on small dense matrices (2n <= 12 for flows,
a few hundred for Galerkin forms).  Integer outputs that come from a rank or
sign decision always travel together with a spectral gap so callers can tell
a clean answer from a borderline one.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg

from common.errors import MatrixOverflow, NoConvergence, NotSymmetric, PreconditionViolated

logger = logging.getLogger(__name__)

DEFAULT_TOL_SCALE = 1e-8
PHASE_SNAP = 1e-9


@dataclass(frozen=True)
class SpectrumResult:
    """Ascending eigenvalues, orthonormal eigenvectors and the worst residual."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float


def standard_symplectic(n: int) -> np.ndarray:
    """J = [[0, -I], [I, 0]] on R^{2n}."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


def rotation(n: int, theta: float) -> np.ndarray:
    """exp(theta J), evaluated as cos(theta) I + sin(theta) J since J^2 = -I."""
    return np.cos(theta) * np.eye(2 * n) + np.sin(theta) * standard_symplectic(n)


def max_abs(M: np.ndarray) -> float:
    M = np.asarray(M)
    return float(np.max(np.abs(M))) if M.size else 0.0


def symmetrize(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def min_eigenvalue(S: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of a symmetric matrix or of a stack of them."""
    return np.linalg.eigvalsh(symmetrize(S))[..., 0]


def sym_eig(S: np.ndarray, tol: float = 1e-10) -> SpectrumResult:
    """Full spectrum of a symmetric matrix with a reproducible eigenvector sign."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {S.shape}")

    scale = max(1.0, max_abs(S))
    asymmetry = max_abs(S - S.T)
    if asymmetry > tol * scale:
        raise NotSymmetric(f"asymmetry {asymmetry:.3e} exceeds {tol * scale:.3e}")

    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(symmetrize(S))
    except np.linalg.LinAlgError as e:
        raise NoConvergence(f"symmetric eigensolver failed: {e}") from e

    # First significant component of every eigenvector is made positive
    for col in range(eigenvectors.shape[1]):
        v = eigenvectors[:, col]
        significant = np.flatnonzero(np.abs(v) > 1e-12)
        if significant.size and v[significant[0]] < 0:
            eigenvectors[:, col] = -v

    residual = max_abs(S @ eigenvectors - eigenvectors * eigenvalues)
    return SpectrumResult(eigenvalues=eigenvalues, eigenvectors=eigenvectors, residual=residual)


def kernel_dimension(M: np.ndarray, tol_scale: float = DEFAULT_TOL_SCALE) -> Tuple[int, float]:
    """Numerical kernel dimension and the gap of the first retained singular value.

    A singular value counts as zero when it is below tau = tol_scale * max(1, sigma_max).
    The gap is sigma_retained_min / tau (infinite when everything is in the kernel).
    """
    M = np.asarray(M, dtype=float)
    singular_values = scipy.linalg.svdvals(M)
    sigma_max = float(singular_values[0]) if singular_values.size else 0.0
    tau = tol_scale * max(1.0, sigma_max)

    dim = int(np.count_nonzero(singular_values <= tau))
    retained = singular_values[singular_values > tau]
    gap = float(retained.min() / tau) if retained.size else float("inf")
    return dim, gap


def expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise MatrixOverflow("matrix exponential of a non-finite matrix")
    result = scipy.linalg.expm(M)
    if not np.all(np.isfinite(result)):
        raise MatrixOverflow(f"matrix exponential overflowed (norm {np.linalg.norm(M):.3e})")
    return result


def to_unitary(P: np.ndarray) -> np.ndarray:
    """Identify a J-commuting real matrix [[X, -Y], [Y, X]] with X + iY on C^n."""
    n = P.shape[0] // 2
    return P[:n, :n] + 1j * P[n:, :n]


def from_unitary(U: np.ndarray) -> np.ndarray:
    X, Y = U.real, U.imag
    return np.block([[X, -Y], [Y, X]])


def logm_unitary(P: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Principal logarithm of an orthogonal matrix commuting with J.

    The result M1 is skew-symmetric, commutes with J and has eigenphases in (-pi, pi].
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] % 2:
        raise PreconditionViolated(f"expected an even-dimensional square matrix, got {P.shape}")

    n = P.shape[0] // 2
    J = standard_symplectic(n)
    orthogonality = max_abs(P.T @ P - np.eye(2 * n))
    commutation = max_abs(P @ J - J @ P)
    if orthogonality > tol or commutation > tol:
        raise PreconditionViolated(
            f"P must be orthogonal and commute with J (errors {orthogonality:.3e}, {commutation:.3e})"
        )

    # U is normal, so its complex Schur form is diagonal up to rounding
    T, Z = scipy.linalg.schur(to_unitary(P), output="complex")
    phases = np.angle(np.diag(T))
    phases[phases <= -np.pi + PHASE_SNAP] = np.pi

    L = (Z * (1j * phases)) @ Z.conj().T
    L = 0.5 * (L - L.conj().T)
    return from_unitary(L)


def quadrature_nodes(count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(count)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def skew_flow(M: np.ndarray, t: np.ndarray) -> np.ndarray:
    """exp(tM) for a skew-symmetric M commuting with J, vectorized over t.

    With S = -J M symmetric, exp(tM) = V cos(phi t) V^T + J V sin(phi t) V^T.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0] // 2
    J = standard_symplectic(n)
    spectrum = sym_eig(symmetrize(-J @ M), tol=1e-8)
    V, phases = spectrum.eigenvectors, spectrum.eigenvalues

    t = np.atleast_1d(np.asarray(t, dtype=float))
    angles = t[:, None] * phases[None, :]
    cos_part = np.einsum("ia,ta,ja->tij", V, np.cos(angles), V)
    sin_part = np.einsum("ia,ta,ja->tij", V, np.sin(angles), V)
    return cos_part + J @ sin_part
