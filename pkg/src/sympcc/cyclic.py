"""Normal form of cyclic symplectic orthogonal matrices.

A symplectic orthogonal P commutes with J and therefore corresponds to a
unitary matrix under z = x + i y.  Diagonalizing that unitary splits P into a
diamond product of plane rotations, conjugated by a symplectic orthogonal Q.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import schur

from .config import DEFAULT, Tolerances
from .core import SymplecticMatrix, SymplecticError, diamond, realify, rotation2, _as_array

__all__ = ["CyclicSymmetry", "decompose_cyclic", "check_ker_condition", "rotation_symmetry"]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CyclicSymmetry:
    """A symmetry matrix P with P^k = I together with its rotation normal form.

    ``conjugator_Q @ P @ conjugator_Q^-1`` equals the diamond product of
    R(angles[i]); angles are sorted ascending in [0, 2 pi).
    """

    P: SymplecticMatrix
    order_k: int
    conjugator_Q: SymplecticMatrix
    angles: tuple

    @property
    def n(self) -> int:
        return self.P.dim_n

    @property
    def k(self) -> int:
        return self.order_k

    def normal_form(self) -> np.ndarray:
        return diamond([rotation2(t) for t in self.angles])

    def reconstruction_defect(self) -> float:
        Q = self.conjugator_Q.array
        lhs = Q @ self.P.array @ symji(Q)
        return float(np.linalg.norm(lhs - self.normal_form(), 2))

    def power(self, l: int) -> np.ndarray:
        return np.linalg.matrix_power(self.P.array, l % self.order_k)

    def to_json(self) -> dict:
        return {
            "k": self.order_k,
            "matrix": self.P.to_json(),
            "angles": [float(a) for a in self.angles],
        }


def symji(Q: np.ndarray) -> np.ndarray:
    from .core import symplectic_inverse

    return symplectic_inverse(Q)


def _check_cyclic_input(A: np.ndarray, k: int, tol: Tolerances) -> None:
    m = A.shape[0]
    n = m // 2
    bound = 1e-8 * (1.0 + np.linalg.norm(A, 2))
    if np.linalg.norm(A.T @ A - np.eye(m), 2) > bound:
        raise SymplecticError("P is not orthogonal")
    from .core import _J

    J = _J(n)
    if np.linalg.norm(A @ J - J @ A, 2) > bound:
        raise SymplecticError("P does not commute with J")
    if np.linalg.norm(np.linalg.matrix_power(A, k) - np.eye(m), 2) > k * bound:
        raise SymplecticError(f"P^{k} differs from the identity")


def decompose_cyclic(P, k: int, tol: Tolerances = DEFAULT) -> CyclicSymmetry:
    """Split a symplectic orthogonal P with P^k = I into plane rotations.

    Returns the conjugator Q (symplectic orthogonal) and the rotation angles,
    sorted ascending with multiplicity.  Each angle satisfies
    k * theta = 0 (mod 2 pi) within ``tol.angle``.
    """
    if k < 2:
        raise ValueError("order k must be >= 2")
    Pm = P if isinstance(P, SymplecticMatrix) else SymplecticMatrix(P)
    A = Pm.array
    n = Pm.dim_n
    _check_cyclic_input(A, k, tol)

    U = A[:n, :n] + 1j * A[n:, :n]
    # Schur form of a unitary matrix is diagonal; the Schur basis is unitary.
    T, Z = schur(U, output="complex")
    angles = np.mod(np.angle(np.diagonal(T)), TWO_PI)
    angles = np.where(angles > TWO_PI - tol.angle, 0.0, angles)
    order = np.argsort(angles, kind="stable")
    angles = angles[order]
    V = Z[:, order]

    for th in angles:
        res = abs(k * th / TWO_PI - round(k * th / TWO_PI)) * TWO_PI / k
        if res > tol.angle:
            raise SymplecticError(f"angle {th:.12f} is not a multiple of 2 pi / {k}")

    Q = SymplecticMatrix(realify(V.conj().T))
    sym = CyclicSymmetry(P=Pm, order_k=k, conjugator_Q=Q, angles=tuple(map(float, angles)))
    defect = sym.reconstruction_defect()
    if defect > tol.normal_form:
        raise SymplecticError(f"normal form reconstruction defect {defect:.3e}")
    return sym


def check_ker_condition(sym: CyclicSymmetry, tol: Tolerances = DEFAULT) -> bool:
    """True iff ker(P^l - I) = 0 for every 1 <= l < k.

    In angle terms: l * theta_i is never a multiple of 2 pi.
    """
    for l in range(1, sym.order_k):
        for th in sym.angles:
            x = l * th / TWO_PI
            if abs(x - round(x)) * TWO_PI <= tol.angle * l:
                return False
    return True


def rotation_symmetry(n: int, k: int) -> CyclicSymmetry:
    """The canonical symmetry: rotation by 2 pi / k in every coordinate plane."""
    if n < 2 or k < 2:
        raise ValueError("rotation symmetry requires n >= 2 and k >= 2")
    theta = TWO_PI / k
    P = SymplecticMatrix(diamond([rotation2(theta)] * n))
    Q = SymplecticMatrix(np.eye(2 * n))
    return CyclicSymmetry(P=P, order_k=k, conjugator_Q=Q, angles=tuple([theta] * n))


def symmetry_from_matrix(P, k: int, tol: Tolerances = DEFAULT) -> CyclicSymmetry:
    """Build a CyclicSymmetry from a raw matrix, via decomposition."""
    return decompose_cyclic(_as_array(P), k, tol=tol)
