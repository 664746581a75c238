"""Linear symplectic algebra: certified matrices, diamond products, spectra.

Conventions: phase space R^(2n) is ordered (x_1..x_n, y_1..y_n) and the
standard structure is J = [[0, -I], [I, 0]].  The complex identification
z = x + i y turns J into multiplication by i, which several routines exploit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULT, Tolerances

__all__ = [
    "SymplecticError",
    "SymplecticMatrix",
    "SpectrumReport",
    "standard_J",
    "diamond",
    "nullity_omega",
    "elliptic_height",
    "spectrum",
    "basic_normal_form",
    "symplectic_inverse",
    "random_symplectic",
    "random_symplectic_orthogonal",
]


class SymplecticError(ValueError):
    """A matrix failed a symplecticity or spectral certification."""


def standard_J(n: int) -> "SymplecticMatrix":
    """The standard symplectic structure [[0, -I_n], [I_n, 0]]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return SymplecticMatrix(_J(n), tol=DEFAULT)


def _J(n: int) -> np.ndarray:
    Z, I = np.zeros((n, n)), np.eye(n)
    return np.block([[Z, -I], [I, Z]])


def _as_array(M) -> np.ndarray:
    if isinstance(M, SymplecticMatrix):
        return M.array
    return np.asarray(M, dtype=float)


def symplectic_defect(A: np.ndarray) -> float:
    """Operator norm of A^T J A - J."""
    n = A.shape[0] // 2
    J = _J(n)
    return float(np.linalg.norm(A.T @ J @ A - J, 2))


def symplectic_inverse(M) -> np.ndarray:
    """Inverse via -J M^T J; exact up to the symplectic defect, never a solve."""
    A = _as_array(M)
    n = A.shape[0] // 2
    J = _J(n)
    return -J @ A.T @ J


@dataclass(frozen=True)
class SymplecticMatrix:
    """A 2n x 2n real matrix certified to be symplectic at construction.

    The certificate is the operator norm of M^T J M - J, kept on the instance
    as ``symplectic_defect``.  Determinant positivity is checked as well.
    """

    array: np.ndarray
    symplectic_defect: float = field(default=0.0)
    dim_n: int = field(default=0)

    def __init__(self, array, tol: Tolerances = DEFAULT):
        A = np.asarray(array, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
            raise SymplecticError(f"expected a 2n x 2n matrix, got shape {A.shape}")
        defect = symplectic_defect(A)
        bound = tol.sp_defect_rel * (1.0 + np.linalg.norm(A, 2))
        if defect > bound:
            raise SymplecticError(
                f"symplectic defect {defect:.3e} exceeds bound {bound:.3e}")
        if np.linalg.det(A) <= 0:
            raise SymplecticError("symplectic matrices have positive determinant")
        A = A.copy()
        A.flags.writeable = False
        object.__setattr__(self, "array", A)
        object.__setattr__(self, "symplectic_defect", defect)
        object.__setattr__(self, "dim_n", A.shape[0] // 2)

    @property
    def n(self) -> int:
        return self.dim_n

    def inverse(self) -> "SymplecticMatrix":
        return SymplecticMatrix(symplectic_inverse(self.array))

    def __matmul__(self, other) -> "SymplecticMatrix":
        return SymplecticMatrix(self.array @ _as_array(other))

    def to_json(self) -> dict:
        return {"n": self.dim_n, "rows": [list(map(float, r)) for r in self.array]}

    @classmethod
    def from_json(cls, obj: dict, tol: Tolerances = DEFAULT) -> "SymplecticMatrix":
        rows = np.asarray(obj["rows"], dtype=float)
        if rows.shape != (2 * obj["n"], 2 * obj["n"]):
            raise SymplecticError("rows do not match the declared half-dimension n")
        return cls(rows, tol=tol)

    def __repr__(self) -> str:
        return f"SymplecticMatrix(n={self.dim_n}, defect={self.symplectic_defect:.2e})"


def diamond(*blocks) -> np.ndarray:
    """Block-interleaved product: diag on the (x, x), (x, y), (y, x), (y, y) blocks.

    For 2x2 blocks this is the usual normal-form assembly; the result of
    diamond-ing symplectic matrices is symplectic.
    """
    mats = [_as_array(b) for b in blocks]
    if len(mats) == 1 and isinstance(blocks[0], (list, tuple)):
        mats = [_as_array(b) for b in blocks[0]]
    n_tot = sum(m.shape[0] // 2 for m in mats)
    out = np.zeros((2 * n_tot, 2 * n_tot), dtype=np.result_type(*mats))
    off = 0
    for m in mats:
        k = m.shape[0] // 2
        a, b = slice(off, off + k), slice(n_tot + off, n_tot + off + k)
        out[a, a] = m[:k, :k]
        out[a, b] = m[:k, k:]
        out[b, a] = m[k:, :k]
        out[b, b] = m[k:, k:]
        off += k
    return out


def nullity_omega(M, omega: complex, tol: Tolerances = DEFAULT) -> int:
    """Complex kernel dimension of M - omega I by singular value thresholding."""
    A = _as_array(M).astype(complex)
    sv = np.linalg.svd(A - omega * np.eye(A.shape[0]), compute_uv=False)
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    return int(np.sum(sv < tol.rank_rel * scale))


def twisted_nullity(M, P, omega: complex, tol: Tolerances = DEFAULT) -> int:
    """dim ker(M - omega P); the twisted-boundary nullity."""
    A = _as_array(M).astype(complex)
    B = _as_array(P).astype(complex)
    sv = np.linalg.svd(A - omega * B, compute_uv=False)
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    return int(np.sum(sv < tol.rank_rel * scale))


@dataclass(frozen=True)
class SpectrumReport:
    """Clustered eigenvalues with integral multiplicities."""

    eigenvalues: tuple  # of (complex, int)
    unit_circle_part: tuple  # sub-tuple with | |lambda| - 1 | <= tol.circle

    @property
    def total_multiplicity(self) -> int:
        return sum(m for _, m in self.eigenvalues)

    def to_json(self) -> dict:
        return {
            "eigenvalues": [[z.real, z.imag, m] for z, m in self.eigenvalues],
            "unit_circle": [[z.real, z.imag, m] for z, m in self.unit_circle_part],
        }


def _cluster(vals: np.ndarray, radius: float):
    """Greedy clustering of complex values; returns (centers, counts)."""
    order = np.lexsort((vals.imag, vals.real))
    centers, counts = [], []
    for v in vals[order]:
        placed = False
        for i, c in enumerate(centers):
            if abs(v - c) <= radius:
                centers[i] = (c * counts[i] + v) / (counts[i] + 1)
                counts[i] += 1
                placed = True
                break
        if not placed:
            centers.append(v)
            counts.append(1)
    return centers, counts


def spectrum(M, tol: Tolerances = DEFAULT) -> SpectrumReport:
    """Eigenvalues of M clustered to integral multiplicities."""
    A = _as_array(M)
    vals = np.linalg.eigvals(A)
    centers, counts = _cluster(vals, tol.cluster)
    pairs = tuple((complex(c), int(m)) for c, m in zip(centers, counts))
    on_u = tuple((z, m) for z, m in pairs if abs(abs(z) - 1.0) <= tol.circle)
    return SpectrumReport(eigenvalues=pairs, unit_circle_part=on_u)


def elliptic_height(M, tol: Tolerances = DEFAULT) -> int:
    """Total algebraic multiplicity of the eigenvalues on the unit circle.

    Eigenvalues falling in the ambiguity band between ``tol.circle`` and
    ``tol.circle_band * tol.circle`` raise instead of being classified.
    """
    A = _as_array(M)
    vals = np.linalg.eigvals(A)
    dist = np.abs(np.abs(vals) - 1.0)
    band_lo, band_hi = tol.circle, tol.circle_band * tol.circle
    ambiguous = (dist > band_lo) & (dist <= band_hi)
    if np.any(ambiguous):
        raise SymplecticError(
            f"eigenvalue at distance {dist[ambiguous].min():.3e} from the unit "
            f"circle falls in the ambiguity band ({band_lo:.1e}, {band_hi:.1e}]")
    e = int(np.sum(dist <= band_lo))
    if e % 2:
        raise SymplecticError(f"odd unit-circle multiplicity {e}; spectrum is inconsistent")
    return e


def rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def basic_normal_form(kind: str, *params, tol: Tolerances = DEFAULT) -> SymplecticMatrix:
    """The standard 2x2 / 4x4 building blocks.

    kind "D": D(lambda) = diag(lambda, 1/lambda), lambda = +-2.
    kind "N1": N1(lambda, b) = [[lambda, b], [0, lambda]], lambda = +-1, b in {-1, 0, 1}.
    kind "R": R(theta), theta in (0, pi) u (pi, 2 pi).
    kind "N2": [[R(theta), B], [0, R(theta)]] with b2 != b3; symplecticity of the
    assembled matrix is what validates B.
    """
    kind = kind.upper()
    if kind == "D":
        (lam,) = params
        if lam not in (2, -2, 2.0, -2.0):
            raise ValueError("D(lambda) requires lambda = +-2")
        return SymplecticMatrix(np.diag([float(lam), 1.0 / lam]), tol=tol)
    if kind == "N1":
        lam, b = params
        if lam not in (1, -1, 1.0, -1.0) or b not in (1, -1, 0, 1.0, -1.0, 0.0):
            raise ValueError("N1(lambda, b) requires lambda = +-1 and b in {-1, 0, 1}")
        return SymplecticMatrix(np.array([[lam, b], [0.0, lam]]), tol=tol)
    if kind == "R":
        (theta,) = params
        theta = float(theta)
        if not (0 < theta < 2 * np.pi) or abs(theta - np.pi) < 1e-15:
            raise ValueError("R(theta) requires theta in (0, pi) u (pi, 2 pi)")
        return SymplecticMatrix(rotation2(theta), tol=tol)
    if kind == "N2":
        theta, B = params
        theta = float(theta)
        if not (0 < theta < 2 * np.pi) or abs(theta - np.pi) < 1e-15:
            raise ValueError("N2 requires theta in (0, pi) u (pi, 2 pi)")
        B = np.asarray(B, dtype=float)
        if B.shape != (2, 2) or B[0, 1] == B[1, 0]:
            raise ValueError("N2 requires a 2x2 block with b2 != b3")
        R = rotation2(theta)
        M = np.block([[R, B], [np.zeros((2, 2)), R]])
        # constructor validates the b-constraint through the defect check
        return SymplecticMatrix(M, tol=tol)
    raise ValueError(f"unknown normal form kind {kind!r}")


def realify(U: np.ndarray) -> np.ndarray:
    """Real 2n x 2n form of a complex n x n matrix under z = x + i y."""
    X, Y = U.real, U.imag
    return np.block([[X, -Y], [Y, X]])


def random_symplectic(n: int, rng: np.random.Generator, scale: float = 0.4) -> SymplecticMatrix:
    """exp(J S) for a random symmetric S; mildly conditioned test matrices."""
    from scipy.linalg import expm

    S = rng.normal(size=(2 * n, 2 * n))
    S = scale * (S + S.T) / 2
    return SymplecticMatrix(expm(_J(n) @ S))


def random_symplectic_orthogonal(n: int, rng: np.random.Generator) -> SymplecticMatrix:
    """Real form of a Haar-ish random unitary; orthogonal and symplectic."""
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, R = np.linalg.qr(Z)
    Q = Q * (np.diagonal(R) / np.abs(np.diagonal(R)))[None, :].conj()
    return SymplecticMatrix(realify(Q))
