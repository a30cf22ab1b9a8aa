"""Domain types: symplectic boundaries, coefficient paths, Hamiltonians and settings."""

import logging
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from common.errors import (
    DimensionMismatch,
    LogFailed,
    NotOrthogonal,
    NotSymplectic,
    PreconditionViolated,
    ProblemParseError,
)
from common.numerics import (
    expm,
    kernel_dimension,
    logm_unitary,
    max_abs,
    min_eigenvalue,
    quadrature_nodes,
    rotation,
    skew_flow,
    standard_symplectic,
    sym_eig,
    symmetrize,
)

logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-8
ORDER_TOL = 1e-8
EQUIVARIANCE_TOL = 1e-8


# ---------------------------------------------------------------------------
# Boundary
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SymplecticBoundary:
    """Orthogonal symplectic P = exp(M1) together with its derived data."""
    n: int
    P: np.ndarray
    M1: np.ndarray
    k: Optional[int]
    dim_ker_P_minus_I: int
    phases: np.ndarray
    phase_vectors: np.ndarray
    warnings: Tuple[str, ...] = ()

    @property
    def J(self) -> np.ndarray:
        return standard_symplectic(self.n)

    @property
    def generator(self) -> np.ndarray:
        """The constant symmetric matrix -J M1 whose flow is gamma_P(t) = exp(t M1)."""
        return symmetrize(-self.J @ self.M1)

    def gamma(self, t) -> np.ndarray:
        return skew_flow(self.M1, t)

    def power(self, q: int) -> np.ndarray:
        if q >= 0:
            return np.linalg.matrix_power(self.P, q)
        return np.linalg.matrix_power(self.P.T, -q)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "P": self.P.tolist(),
            "M1_phases": [float(p) for p in self.phases[::2]],
            "k": self.k,
            "dim_ker_P_minus_I": self.dim_ker_P_minus_I,
            "warnings": list(self.warnings),
        }


def _detect_order(P: np.ndarray, k_max: int) -> Optional[int]:
    power = np.eye(P.shape[0])
    for k in range(1, k_max + 1):
        power = power @ P
        if max_abs(power - np.eye(P.shape[0])) <= ORDER_TOL:
            return k
    return None


def _build_boundary(P: np.ndarray, M1: np.ndarray, k_max: int) -> SymplecticBoundary:
    n = P.shape[0] // 2
    J = standard_symplectic(n)

    reconstruction = max_abs(expm(M1) - P)
    if reconstruction > RECONSTRUCTION_TOL:
        raise LogFailed(f"exp(M1) misses P by {reconstruction:.3e}")
    if max_abs(M1 + M1.T) > ORTHOGONALITY_TOL or max_abs(M1 @ J - J @ M1) > ORTHOGONALITY_TOL:
        raise LogFailed("logarithm is not skew-symmetric and J-commuting")

    spectrum = sym_eig(symmetrize(-J @ M1), tol=1e-8)
    warnings = []
    if np.any(np.abs(spectrum.eigenvalues) >= np.pi - 1e-6):
        warnings.append("P has eigenvalue -1: principal logarithm sits on its branch cut")
        logger.warning("Boundary has eigenphase pi; logarithm is discontinuous there")

    dim_ker, _ = kernel_dimension(P - np.eye(2 * n))
    return SymplecticBoundary(
        n=n,
        P=P,
        M1=M1,
        k=_detect_order(P, k_max),
        dim_ker_P_minus_I=dim_ker,
        phases=spectrum.eigenvalues,
        phase_vectors=spectrum.eigenvectors,
        warnings=tuple(warnings),
    )


def validate_boundary(P, k_max: int = 64) -> SymplecticBoundary:
    """Check that P is orthogonal symplectic and compute its principal logarithm."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] % 2 or P.shape[0] == 0:
        raise DimensionMismatch(f"boundary must be square and even-dimensional, got {P.shape}")

    n = P.shape[0] // 2
    J = standard_symplectic(n)
    orthogonality = max_abs(P.T @ P - np.eye(2 * n))
    if orthogonality > ORTHOGONALITY_TOL:
        raise NotOrthogonal(f"||P^T P - I||_max = {orthogonality:.3e}")
    symplecticity = max_abs(P.T @ J @ P - J)
    if symplecticity > ORTHOGONALITY_TOL:
        raise NotSymplectic(f"||P^T J P - J||_max = {symplecticity:.3e}")

    try:
        M1 = logm_unitary(P, tol=ORTHOGONALITY_TOL)
    except PreconditionViolated as e:
        raise LogFailed(str(e)) from e
    return _build_boundary(P, M1, k_max)


def make_rotation_boundary(n: int, theta: float, k_max: int = 64) -> SymplecticBoundary:
    """P = exp(theta J) with M1 = theta' J, theta' the principal representative in (-pi, pi]."""
    if n < 1:
        raise DimensionMismatch(f"half-dimension must be positive, got {n}")
    principal = float(np.pi - np.mod(np.pi - theta, 2.0 * np.pi))
    return _build_boundary(rotation(n, theta), principal * standard_symplectic(n), k_max)


def identity_boundary(n: int) -> SymplecticBoundary:
    return make_rotation_boundary(n, 0.0)


# ---------------------------------------------------------------------------
# Coefficient paths
# ---------------------------------------------------------------------------

PATH_KINDS = ("constant", "trig", "samples", "combination", "frame")


@dataclass(frozen=True, eq=False)
class TrigTerm:
    omega: float
    cos: np.ndarray
    sin: np.ndarray


@dataclass(frozen=True, eq=False)
class CoefficientPath:
    """Symmetric B(t) on [0, 1]; the kind decides how `payload` is read."""
    n: int
    kind: str
    payload: Dict[str, Any]
    label: str = ""
    _spline: Any = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise ProblemParseError(f"unknown coefficient path kind '{self.kind}'")
        if self.kind == "samples":
            times = np.asarray(self.payload["times"], dtype=float)
            values = symmetrize(np.asarray(self.payload["values"], dtype=float))
            object.__setattr__(self, "_spline", CubicSpline(times, values, axis=0))

    @property
    def dim(self) -> int:
        return 2 * self.n

    def _raw(self, t: np.ndarray) -> np.ndarray:
        d = self.dim
        if self.kind == "constant":
            return np.broadcast_to(self.payload["matrix"], (t.size, d, d)).copy()

        if self.kind == "trig":
            values = np.broadcast_to(self.payload["offset"], (t.size, d, d)).copy()
            for term in self.payload["terms"]:
                values += np.cos(term.omega * t)[:, None, None] * term.cos
                values += np.sin(term.omega * t)[:, None, None] * term.sin
            return values

        if self.kind == "samples":
            return self._spline(t)

        if self.kind == "combination":
            values = np.zeros((t.size, d, d))
            for path, weight in zip(self.payload["paths"], self.payload["weights"]):
                if weight:
                    values += weight * path._raw(t)
            return values + self.payload["shift"] * np.eye(d)

        # frame: exp(tM) C(t) exp(tM)^T
        flow = skew_flow(self.payload["generator"], t)
        base = self.payload["base"]._raw(t)
        return flow @ base @ np.swapaxes(flow, -1, -2)

    def evaluate(self, t) -> np.ndarray:
        """B(t) for scalar or array t inside [0, 1] (formula kinds accept any t)."""
        t_arr = np.asarray(t, dtype=float)
        values = symmetrize(self._raw(np.atleast_1d(t_arr).ravel()))
        return values.reshape(t_arr.shape + (self.dim, self.dim))

    def extended(self, t, boundary: "SymplecticBoundary") -> np.ndarray:
        """Equivariant extension B(t + q) = P^q B(t) (P^q)^T from the values on [0, 1]."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        shifts = np.where((t_arr >= 0.0) & (t_arr <= 1.0), 0, np.floor(t_arr)).astype(int)
        values = self.evaluate(t_arr - shifts)
        for q in np.unique(shifts):
            if q == 0:
                continue
            Pq = boundary.power(int(q))
            mask = shifts == q
            values[mask] = Pq @ values[mask] @ Pq.T
        return values.reshape(np.shape(t) + (self.dim, self.dim))

    def constant_value(self) -> Optional[np.ndarray]:
        """The matrix when B does not depend on t, else None."""
        if self.kind == "constant":
            return self.payload["matrix"]
        if self.kind == "trig" and not self.payload["terms"]:
            return self.payload["offset"]
        if self.kind == "combination":
            total = self.payload["shift"] * np.eye(self.dim)
            for path, weight in zip(self.payload["paths"], self.payload["weights"]):
                value = path.constant_value()
                if value is None:
                    return None
                total = total + weight * value
            return total
        if self.kind == "frame":
            base = self.payload["base"].constant_value()
            M = self.payload["generator"]
            if base is not None and max_abs(M @ base - base @ M) <= 1e-12 * max(1.0, max_abs(base)):
                return base
        return None

    def sup_norm(self, points: int = 257) -> float:
        values = self.evaluate(np.linspace(0.0, 1.0, points))
        return float(np.max(np.abs(np.linalg.eigvalsh(values))))

    def j_commutation(self, points: int = 65) -> float:
        J = standard_symplectic(self.n)
        values = self.evaluate(np.linspace(0.0, 1.0, points))
        return max_abs(values @ J - J @ values)

    def shifted(self, s: float) -> "CoefficientPath":
        return combine([self], [1.0], shift=s)

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "constant":
            return {"kind": "constant", "matrix": self.payload["matrix"].tolist()}
        if self.kind == "trig":
            return {
                "kind": "trig",
                "offset": self.payload["offset"].tolist(),
                "terms": [
                    {"omega": term.omega, "cos": term.cos.tolist(), "sin": term.sin.tolist()}
                    for term in self.payload["terms"]
                ],
            }
        if self.kind == "samples":
            return {
                "kind": "samples",
                "times": np.asarray(self.payload["times"]).tolist(),
                "values": np.asarray(self.payload["values"]).tolist(),
            }
        if self.kind == "combination":
            return {
                "kind": "combination",
                "weights": list(self.payload["weights"]),
                "shift": self.payload["shift"],
                "paths": [path.to_dict() for path in self.payload["paths"]],
            }
        return {
            "kind": "frame",
            "generator": self.payload["generator"].tolist(),
            "base": self.payload["base"].to_dict(),
        }


def _check_symmetric(name: str, C: np.ndarray) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] % 2:
        raise DimensionMismatch(f"{name}: expected an even square matrix, got {C.shape}")
    if max_abs(C - C.T) > 1e-12 * max(1.0, max_abs(C)):
        raise DimensionMismatch(f"{name}: matrix is not symmetric")
    return symmetrize(C)


def constant_path(C, label: str = "") -> CoefficientPath:
    C = _check_symmetric("constant path", C)
    return CoefficientPath(n=C.shape[0] // 2, kind="constant", payload={"matrix": C}, label=label)


def scalar_path(n: int, b: float, label: str = "") -> CoefficientPath:
    """B(t) = b I."""
    return constant_path(b * np.eye(2 * n), label=label or f"{b}I")


def trig_path(offset, terms: Sequence[Tuple[float, Any, Any]], label: str = "") -> CoefficientPath:
    """B(t) = C0 + sum_k cos(omega_k t) C_k + sin(omega_k t) S_k."""
    offset = _check_symmetric("trig offset", offset)
    parsed = [
        TrigTerm(float(omega), _check_symmetric("trig cos", C), _check_symmetric("trig sin", S))
        for omega, C, S in terms
    ]
    for term in parsed:
        if term.cos.shape != offset.shape or term.sin.shape != offset.shape:
            raise DimensionMismatch("trig terms must match the offset dimension")
    return CoefficientPath(n=offset.shape[0] // 2, kind="trig", payload={"offset": offset, "terms": parsed}, label=label)


def sampled_path(times, values, label: str = "") -> CoefficientPath:
    """Cubic-spline interpolation of symmetric samples on [0, 1]."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim != 3 or values.shape[0] != times.size or values.shape[1] != values.shape[2]:
        raise DimensionMismatch(f"samples must have shape (T, 2n, 2n) matching times, got {values.shape}")
    if times.size < 4 or np.any(np.diff(times) <= 0):
        raise DimensionMismatch("sample times must be strictly increasing with at least 4 points")
    if times[0] > 0.0 or times[-1] < 1.0:
        raise DimensionMismatch("sample times must cover [0, 1]")
    return CoefficientPath(
        n=values.shape[1] // 2, kind="samples", payload={"times": times, "values": values}, label=label
    )


def combine(paths: Sequence[CoefficientPath], weights: Sequence[float], shift: float = 0.0,
            label: str = "") -> CoefficientPath:
    """sum_i w_i B_i(t) + shift I."""
    if not paths or len(paths) != len(weights):
        raise DimensionMismatch("combine needs one weight per path")
    n = paths[0].n
    if any(path.n != n for path in paths):
        raise DimensionMismatch("combined paths must share the half-dimension")
    return CoefficientPath(
        n=n,
        kind="combination",
        payload={"paths": list(paths), "weights": [float(w) for w in weights], "shift": float(shift)},
        label=label,
    )


def frame_path(base: CoefficientPath, generator, label: str = "") -> CoefficientPath:
    """exp(tM) C(t) exp(tM)^T for a skew J-commuting generator M."""
    generator = np.asarray(generator, dtype=float)
    if generator.shape != (base.dim, base.dim):
        raise DimensionMismatch("frame generator must match the base path dimension")
    J = standard_symplectic(base.n)
    if max_abs(generator + generator.T) > 1e-10 or max_abs(generator @ J - J @ generator) > 1e-10:
        raise PreconditionViolated("frame generator must be skew-symmetric and commute with J")
    return CoefficientPath(n=base.n, kind="frame", payload={"base": base, "generator": generator}, label=label)


def rotating_path(theta: float, C, label: str = "") -> CoefficientPath:
    """B(t) = R(theta t) C R(theta t)^T written exactly as a trig path.

    The J-commuting half of C is fixed by the rotation; the anticommuting half
    rotates at frequency 2 theta.
    """
    C = _check_symmetric("rotating path", C)
    J = standard_symplectic(C.shape[0] // 2)
    commuting = 0.5 * (C - J @ C @ J)
    anticommuting = 0.5 * (C + J @ C @ J)
    if max_abs(anticommuting) == 0.0:
        return trig_path(commuting, [], label=label)
    return trig_path(commuting, [(2.0 * theta, anticommuting, J @ anticommuting)], label=label)


def check_equivariance(boundary: SymplecticBoundary, path: CoefficientPath,
                       points: int = 64) -> Dict[str, Any]:
    """Compare B on [1, 2] with its equivariant extension P B(t) P^T.

    Sampled paths are only defined on [0, 1], so only the seam B(1) = P B(0) P^T is checked.
    """
    if boundary.n != path.n:
        raise DimensionMismatch(f"boundary n={boundary.n} but path n={path.n}")
    P = boundary.P
    violation = max_abs(P @ path.evaluate(0.0) @ P.T - path.evaluate(1.0))
    checked = 1
    if not _contains_samples(path):
        t = np.linspace(1.0, 2.0, points + 1)[1:]
        beyond = symmetrize(path._raw(t))
        violation = max(violation, max_abs(beyond - path.extended(t, boundary)))
        checked += t.size
    scale = max(1.0, path.sup_norm(points=17))
    return {
        "passed": bool(violation <= EQUIVARIANCE_TOL * scale),
        "max_violation": float(violation),
        "points": checked,
    }


def _contains_samples(path: CoefficientPath) -> bool:
    if path.kind == "samples":
        return True
    if path.kind == "combination":
        return any(_contains_samples(p) for p in path.payload["paths"])
    if path.kind == "frame":
        return _contains_samples(path.payload["base"])
    return False


def ordering_margin(lower: CoefficientPath, upper: CoefficientPath, quad_points: int = 64) -> float:
    """min over Gauss nodes and endpoints of the smallest eigenvalue of upper(t) - lower(t)."""
    if lower.n != upper.n:
        raise DimensionMismatch("ordered paths must share the half-dimension")
    nodes, _ = quadrature_nodes(quad_points)
    t = np.concatenate(([0.0], nodes, [1.0]))
    return float(np.min(min_eigenvalue(upper.evaluate(t) - lower.evaluate(t))))


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """H(t, x), 1-periodic in t.

    Radial: H = (1 + e cos 2 pi k t) h(|x|^2) with h(r) = a r + c (1 - e^{-alpha r}) + q r^2,
    autonomous when the modulation amplitude e is zero. Callbacks take x, or (t, x) when
    `time_dependent` is set.
    """
    n: int
    kind: str = "radial"
    a: float = 0.0
    c: float = 0.0
    alpha: float = 1.0
    q: float = 0.0
    modulation: float = 0.0
    frequency: int = 1
    value_fn: Optional[Callable[..., float]] = None
    gradient_fn: Optional[Callable[..., np.ndarray]] = None
    hessian_fn: Optional[Callable[..., np.ndarray]] = None
    time_dependent: bool = False

    def __post_init__(self):
        if self.kind not in ("radial", "callback"):
            raise ProblemParseError(f"unknown hamiltonian kind '{self.kind}'")
        if self.kind == "callback" and None in (self.value_fn, self.gradient_fn, self.hessian_fn):
            raise ProblemParseError("callback hamiltonian needs value, gradient and hessian")
        if int(self.frequency) != self.frequency or self.frequency < 1:
            raise ProblemParseError(f"modulation frequency must be a positive integer, got {self.frequency}")
        if abs(self.modulation) >= 1.0:
            raise ProblemParseError(f"modulation amplitude must lie in (-1, 1), got {self.modulation}")

    @property
    def is_radial(self) -> bool:
        return self.kind == "radial"

    @property
    def is_autonomous(self) -> bool:
        if self.kind == "callback":
            return not self.time_dependent
        return self.modulation == 0.0

    def _h_derivatives(self, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        decay = np.exp(-self.alpha * r)
        h = self.a * r + self.c * (1.0 - decay) + self.q * r * r
        dh = np.asarray(self.a + self.c * self.alpha * decay + 2.0 * self.q * r)
        d2h = np.asarray(-self.c * self.alpha ** 2 * decay + 2.0 * self.q)
        return h, dh, d2h

    def _factor(self, x: np.ndarray, t) -> np.ndarray:
        """1 + e cos(2 pi k t), broadcast over the rows of x."""
        times = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
        return 1.0 + self.modulation * np.cos(2.0 * np.pi * self.frequency * times)

    def _call(self, fn: Callable[..., Any], x: np.ndarray, t, tail: Tuple[int, ...]) -> np.ndarray:
        """Apply a callback row by row, passing each row's time when H depends on t."""
        if x.ndim == 1:
            return np.asarray(fn(float(t), x) if self.time_dependent else fn(x), dtype=float)
        rows = x.reshape(-1, x.shape[-1])
        times = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1]).ravel()
        if self.time_dependent:
            out = [fn(float(ti), row) for ti, row in zip(times, rows)]
        else:
            out = [fn(row) for row in rows]
        return np.asarray(out, dtype=float).reshape(x.shape[:-1] + tail)

    def value(self, x, t=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "callback":
            values = self._call(self.value_fn, x, t, ())
            return float(values) if x.ndim == 1 else values
        h, _, _ = self._h_derivatives(np.sum(x * x, axis=-1))
        return self._factor(x, t) * h

    def gradient(self, x, t=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "callback":
            return self._call(self.gradient_fn, x, t, (x.shape[-1],))
        _, dh, _ = self._h_derivatives(np.sum(x * x, axis=-1))
        return (2.0 * self._factor(x, t) * dh)[..., None] * x

    def hessian(self, x, t=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "callback":
            return symmetrize(self._call(self.hessian_fn, x, t, (x.shape[-1], x.shape[-1])))
        _, dh, d2h = self._h_derivatives(np.sum(x * x, axis=-1))
        factor = self._factor(x, t)[..., None, None]
        eye = np.eye(x.shape[-1])
        outer = x[..., :, None] * x[..., None, :]
        return factor * (2.0 * dh[..., None, None] * eye + 4.0 * d2h[..., None, None] * outer)

    def check_consistency(self, samples: int = 100, seed: int = 0, scale: float = 2.0) -> Dict[str, Any]:
        """Central finite differences in x of H against H' and of H' against H'', at random times."""
        rng = np.random.default_rng(seed)
        points = scale * rng.standard_normal((samples, 2 * self.n))
        times = rng.uniform(0.0, 1.0, samples)
        eye = np.eye(2 * self.n)
        gradient_error = 0.0
        hessian_error = 0.0
        for x, t in zip(points, times):
            step = 1e-5 * (1.0 + np.linalg.norm(x))
            fd_gradient = np.array([
                (self.value(x + step * e, t) - self.value(x - step * e, t)) / (2.0 * step) for e in eye
            ])
            fd_hessian = np.array([
                (self.gradient(x + step * e, t) - self.gradient(x - step * e, t)) / (2.0 * step) for e in eye
            ])
            gradient = self.gradient(x, t)
            hessian = self.hessian(x, t)
            gradient_error = max(gradient_error,
                                 np.linalg.norm(fd_gradient - gradient) / max(1.0, np.linalg.norm(gradient)))
            hessian_error = max(hessian_error,
                                np.linalg.norm(fd_hessian - hessian) / max(1.0, np.linalg.norm(hessian)))
        return {
            "gradient_error": float(gradient_error),
            "hessian_error": float(hessian_error),
            "passed": bool(gradient_error <= 1e-6 and hessian_error <= 1e-5),
        }

    def check_equivariance(self, boundary: SymplecticBoundary, samples: int = 100, seed: int = 0) -> Dict[str, Any]:
        """|H(t + 1, Px) - H(t, x)| at random (t, x), relative to max(1, |H(t, x)|)."""
        if boundary.n != self.n:
            raise DimensionMismatch(f"boundary n={boundary.n} but hamiltonian n={self.n}")
        rng = np.random.default_rng(seed)
        points = 3.0 * rng.standard_normal((samples, 2 * self.n))
        times = rng.uniform(0.0, 1.0, samples)
        values = np.asarray(self.value(points, times))
        rotated = np.asarray(self.value(points @ boundary.P.T, times + 1.0))
        violation = float(np.max(np.abs(rotated - values) / np.maximum(1.0, np.abs(values))))
        return {"passed": bool(violation <= 1e-10), "max_violation": violation}

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "callback":
            return {"kind": "callback", "n": self.n, "time_dependent": self.time_dependent}
        data = {"kind": "radial", "n": self.n, "a": self.a, "c": self.c, "alpha": self.alpha, "q": self.q}
        if self.modulation:
            data["modulation"] = {"amplitude": self.modulation, "frequency": self.frequency}
        return data


def radial_hamiltonian(n: int, a: float = 0.0, c: float = 0.0, alpha: float = 1.0, q: float = 0.0,
                       modulation: float = 0.0, frequency: int = 1) -> HamiltonianSpec:
    return HamiltonianSpec(n=n, kind="radial", a=a, c=c, alpha=alpha, q=q, modulation=modulation, frequency=frequency)


def quadratic_hamiltonian(n: int, b: float) -> HamiltonianSpec:
    """H(x) = (b/2)|x|^2, whose Hessian is b I everywhere."""
    return radial_hamiltonian(n, a=0.5 * b)


def acceptance_hamiltonian(n: int = 1) -> HamiltonianSpec:
    """H(x) = 0.05|x|^2 + 4.45(1 - e^{-|x|^2}): Hessian 9I at the origin, 0.1I at infinity."""
    return radial_hamiltonian(n, a=0.05, c=4.45, alpha=1.0)


# ---------------------------------------------------------------------------
# Settings and problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverSettings:
    """Every tolerance and size used by the solvers."""
    m: int = 8
    tol: float = 1e-8
    grid: int = 512
    max_grid: int = 8192
    steps: int = 2048
    max_steps: int = 32768
    ode_tolerance: float = 1e-9
    quad_points: int = 256
    max_quad_points: int = 4096
    quad_tolerance: float = 1e-9
    k_max: int = 64
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    seed: int = 0
    starts: int = 200
    l: Optional[float] = None
    r: Optional[float] = None

    def merged(self, **overrides) -> "SolverSettings":
        """Copy with every non-None override applied."""
        applied = {key: value for key, value in overrides.items() if value is not None}
        unknown = set(applied) - set(asdict(self))
        if unknown:
            raise ProblemParseError(f"unknown settings: {sorted(unknown)}")
        return replace(self, **applied)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ProblemFile:
    """One boundary, named coefficient paths, an optional Hamiltonian and settings."""
    boundary: SymplecticBoundary
    paths: Dict[str, CoefficientPath]
    hamiltonian: Optional[HamiltonianSpec] = None
    settings: SolverSettings = field(default_factory=SolverSettings)
    source: Optional[str] = None

    def __post_init__(self):
        n = self.boundary.n
        for name, path in self.paths.items():
            if path.n != n:
                raise DimensionMismatch(f"path '{name}' has n={path.n}, boundary has n={n}")
        if self.hamiltonian is not None and self.hamiltonian.n != n:
            raise DimensionMismatch(f"hamiltonian has n={self.hamiltonian.n}, boundary has n={n}")

    @property
    def n(self) -> int:
        return self.boundary.n

    def path(self, name: str) -> CoefficientPath:
        if name not in self.paths:
            raise ProblemParseError(f"unknown coefficient path '{name}' (known: {sorted(self.paths)})")
        return self.paths[name]

    def has_paths(self, names: List[str]) -> bool:
        return all(name in self.paths for name in names)
