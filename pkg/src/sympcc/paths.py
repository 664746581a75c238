"""Symplectic paths: closed-form families, integrated flows, iterates.

Every path starts at the identity and can be evaluated at any time in
[0, tau] (the refinement contract).  Evaluation is pure, so paths are safe to
share across threads.  ``convex_certified`` marks paths known to solve
z' = J A(t) z with A(t) positive definite; the crossing-count index rules in
:mod:`sympcc.indices` require it.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm, logm

from .config import DEFAULT, Tolerances
from .core import SymplecticMatrix, SymplecticError, diamond, rotation2, _J, symplectic_inverse, _as_array

__all__ = [
    "SymplecticPath",
    "RotationShearPath",
    "DiamondPath",
    "ConjugatedPath",
    "IteratedPath",
    "FundamentalSolutionPath",
    "SampledPath",
    "path_to_endpoint",
    "rotation_path",
    "iterate_path",
]

# norm of R(pi/4) - I; the per-step rotation budget of adaptive grids
_STEP_NORM = 2.0 * np.sin(np.pi / 8.0)


class SymplecticPath:
    """Base class; subclasses implement ``_eval(t) -> ndarray``."""

    tau: float
    n: int
    convex_certified: bool
    sample_times: np.ndarray
    segment_tau: float  # period scale used for crossing-time tolerances

    def _eval(self, t: float) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def eval(self, t: float) -> np.ndarray:
        return self._eval(float(t))

    def eval_many(self, ts) -> np.ndarray:
        return np.stack([self._eval(float(t)) for t in np.asarray(ts).ravel()])

    def end(self) -> np.ndarray:
        return self.eval(self.tau)

    def end_matrix(self) -> SymplecticMatrix:
        return SymplecticMatrix(self.end(), tol=DEFAULT.with_(sp_defect_rel=1e-6))

    def samples(self) -> list:
        return [(float(t), self.eval(t)) for t in self.sample_times]

    def certify_samples(self, tol: Tolerances = DEFAULT) -> float:
        """Max symplectic defect over the sample grid; raises above the bound."""
        G = self.eval_many(self.sample_times)
        J = _J(self.n)
        defects = np.linalg.norm(np.transpose(G, (0, 2, 1)) @ J @ G - J, axis=(1, 2))
        worst = float(defects.max())
        norms = 1.0 + np.linalg.norm(G, axis=(1, 2))
        if worst > tol.path_defect * float(norms.max()):
            raise SymplecticError(f"path sample defect {worst:.3e} above bound")
        return worst

    def to_json(self, samples: int = 0) -> dict:
        ts = self.sample_times if not samples else np.linspace(0.0, self.tau, samples)
        return {
            "tau": float(self.tau),
            "convex_certified": bool(self.convex_certified),
            "samples": [
                {"t": float(t), "matrix": {"n": self.n, "rows": self.eval(t).tolist()}}
                for t in ts
            ],
        }


def _adaptive_times(eval_fn, tau: float, n: int, start: np.ndarray) -> np.ndarray:
    """Subdivide until consecutive samples differ by at most a pi/4 rotation.

    The criterion is |gamma(t2) gamma(t1)^-1 - I| <= |R(pi/4) - I| with the
    symplectic inverse, a parametrization-free bound on how far any rotation
    coordinate can move between samples.
    """
    ts = list(map(float, start))
    mats = {t: eval_fn(t) for t in ts}
    i = 0
    guard = 0
    while i < len(ts) - 1:
        guard += 1
        if guard > 100000:
            raise RuntimeError("adaptive grid failed to settle")
        a, b = ts[i], ts[i + 1]
        E = mats[b] @ symplectic_inverse(mats[a])
        if np.linalg.norm(E - np.eye(2 * n), 2) <= _STEP_NORM or (b - a) < 1e-9 * tau:
            i += 1
            continue
        m = 0.5 * (a + b)
        ts.insert(i + 1, m)
        mats[m] = eval_fn(m)
    return np.asarray(ts)


class RotationShearPath(SymplecticPath):
    """gamma(t) = R(f t / tau) U(g t / tau) with U the upper unipotent shear.

    The driving Hamiltonian matrix has eigenvalues {f', f' - g'} / tau, so the
    path is convex exactly when f > max(g, 0); the constructor enforces it.
    """

    def __init__(self, angle_total: float, shear_total: float = 0.0, tau: float = 1.0):
        if angle_total <= 0 or angle_total <= shear_total:
            raise ValueError("convexity requires angle_total > max(shear_total, 0)")
        self.f, self.g = float(angle_total), float(shear_total)
        self.tau = float(tau)
        self.n = 1
        self.convex_certified = True
        self.segment_tau = self.tau
        k = max(65, int(np.ceil(8.0 * self.f / np.pi)) + 1)
        self.sample_times = np.linspace(0.0, self.tau, k)

    def _eval(self, t: float) -> np.ndarray:
        x = t / self.tau
        c, s = np.cos(self.f * x), np.sin(self.f * x)
        g = self.g * x
        return np.array([[c, g * c - s], [s, g * s + c]])

    def eval_many(self, ts) -> np.ndarray:
        x = np.asarray(ts, dtype=float).ravel() / self.tau
        c, s = np.cos(self.f * x), np.sin(self.f * x)
        g = self.g * x
        out = np.empty((x.size, 2, 2))
        out[:, 0, 0] = c
        out[:, 0, 1] = g * c - s
        out[:, 1, 0] = s
        out[:, 1, 1] = g * s + c
        return out


def rotation_path(angle_total: float, tau: float = 1.0) -> RotationShearPath:
    """Pure rotation path ending at R(angle_total)."""
    return RotationShearPath(angle_total, 0.0, tau)


def path_to_endpoint(angle: float, shear: float, tau: float = 1.0,
                     min_turns: int = 1) -> RotationShearPath:
    """Convex path ending at R(angle) U(shear), padding with full turns.

    Extra turns shift every omega-index by the same constant, which cancels in
    splitting numbers; they are added until the convexity constraint holds.
    """
    f = float(angle) % (2.0 * np.pi)
    turns = max(1, int(min_turns))
    while f + 2.0 * np.pi * turns <= abs(shear) + 0.5:
        turns += 1
    return RotationShearPath(f + 2.0 * np.pi * turns, shear, tau)


class DiamondPath(SymplecticPath):
    """Diamond product of same-span blocks; convex iff every block is."""

    def __init__(self, blocks):
        blocks = list(blocks)
        taus = {round(b.tau, 12) for b in blocks}
        if len(taus) != 1:
            raise ValueError("diamond blocks must share the time span")
        self.blocks = blocks
        self.tau = blocks[0].tau
        self.n = sum(b.n for b in blocks)
        self.convex_certified = all(b.convex_certified for b in blocks)
        self.segment_tau = min(b.segment_tau for b in blocks)
        self.sample_times = np.unique(np.concatenate([b.sample_times for b in blocks]))

    def _eval(self, t: float) -> np.ndarray:
        return diamond([b.eval(t) for b in self.blocks])

    def eval_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts).ravel()
        parts = [b.eval_many(ts) for b in self.blocks]
        out = np.zeros((ts.size, 2 * self.n, 2 * self.n))
        off = 0
        for part in parts:
            k = part.shape[1] // 2
            a, b = slice(off, off + k), slice(self.n + off, self.n + off + k)
            out[:, a, a] = part[:, :k, :k]
            out[:, a, b] = part[:, :k, k:]
            out[:, b, a] = part[:, k:, :k]
            out[:, b, b] = part[:, k:, k:]
            off += k
        return out


class ConjugatedPath(SymplecticPath):
    """Q gamma(t) Q^-1; preserves convexity (congruence keeps A(t) definite)."""

    def __init__(self, base: SymplecticPath, Q):
        self.base = base
        self.Q = _as_array(Q)
        self.Qi = symplectic_inverse(self.Q)
        self.tau, self.n = base.tau, base.n
        self.convex_certified = base.convex_certified
        self.segment_tau = base.segment_tau
        self.sample_times = base.sample_times

    def _eval(self, t: float) -> np.ndarray:
        return self.Q @ self.base.eval(t) @ self.Qi

    def eval_many(self, ts) -> np.ndarray:
        return self.Q @ self.base.eval_many(ts) @ self.Qi


class IteratedPath(SymplecticPath):
    """The m-fold twisted iteration P^j gamma(t - j tau) (P^-1 gamma(tau))^j.

    With P = I this is the plain iteration.  The iterate of a convex path is
    again the fundamental solution of a positive-definite system (the
    coefficient gets conjugated segment by segment), so certification carries
    over for any symplectic P.
    """

    def __init__(self, base: SymplecticPath, P, m: int):
        if m < 1:
            raise ValueError("iteration count must be >= 1")
        self.base, self.m = base, int(m)
        A = _as_array(P)
        if A.shape[0] != 2 * base.n:
            raise ValueError("symmetry matrix dimension does not match the path")
        self.P = A
        end = base.end()
        C = symplectic_inverse(A) @ end
        self.Pp = [np.linalg.matrix_power(A, j) for j in range(self.m)]
        self.Cp = [np.linalg.matrix_power(C, j) for j in range(self.m)]
        self.tau = base.tau * self.m
        self.n = base.n
        self.convex_certified = base.convex_certified
        self.segment_tau = base.segment_tau
        tb = base.sample_times
        self.sample_times = np.concatenate(
            [tb[:-1] + j * base.tau for j in range(self.m)] + [[self.tau]])

    def _segment(self, t: float) -> int:
        return min(int(t // self.base.tau), self.m - 1)

    def _eval(self, t: float) -> np.ndarray:
        j = self._segment(t)
        return self.Pp[j] @ self.base.eval(t - j * self.base.tau) @ self.Cp[j]

    def eval_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float).ravel()
        segs = np.minimum((ts // self.base.tau).astype(int), self.m - 1)
        out = np.empty((ts.size, 2 * self.n, 2 * self.n))
        for j in np.unique(segs):
            sel = segs == j
            local = self.base.eval_many(ts[sel] - j * self.base.tau)
            out[sel] = self.Pp[j] @ local @ self.Cp[j]
        return out


def iterate_path(gamma: SymplecticPath, P, m: int) -> SymplecticPath:
    """Public alias for the twisted iteration; m = 1 returns gamma itself."""
    if m == 1:
        return gamma
    return IteratedPath(gamma, P, m)


class FundamentalSolutionPath(SymplecticPath):
    """Fundamental solution of z' = J A(t) z integrated with defect control.

    ``coeff`` maps t to the symmetric coefficient A(t).  The integrator is
    re-run with tighter tolerances until the symplectic defect over the sample
    grid meets the bound; positive definiteness of A is spot-checked on the
    grid when ``convex`` is requested.
    """

    def __init__(self, coeff, tau: float, n: int, convex: bool = True,
                 tol: Tolerances = DEFAULT, min_samples: int = 97):
        self.coeff = coeff
        self.tau = float(tau)
        self.n = int(n)
        self.segment_tau = self.tau
        J = _J(n)
        dim = 2 * n

        def rhs(t, z):
            return (J @ coeff(t) @ z.reshape(dim, dim)).ravel()

        rtol, atol = tol.ode_rtol, tol.ode_atol
        for attempt in range(3):
            sol = solve_ivp(rhs, (0.0, self.tau), np.eye(dim).ravel(),
                            method="DOP853", rtol=rtol, atol=atol, dense_output=True)
            if not sol.success:
                raise RuntimeError(f"linearized flow integration failed: {sol.message}")
            self._sol = sol.sol
            base = np.unique(np.concatenate(
                [sol.t, np.linspace(0.0, self.tau, min_samples)]))
            self.sample_times = _adaptive_times(self._eval, self.tau, n, base)
            try:
                self.certify_samples(tol)
                break
            except SymplecticError:
                if attempt == 2:
                    raise
                rtol, atol = rtol * 1e-1, atol * 1e-1
        if convex:
            for t in np.linspace(0.0, self.tau, 33):
                A = coeff(float(t))
                if np.linalg.eigvalsh((A + A.T) / 2).min() <= 0:
                    raise SymplecticError(
                        f"coefficient matrix not positive definite at t={t:.6f}")
        self.convex_certified = bool(convex)

    def _eval(self, t: float) -> np.ndarray:
        dim = 2 * self.n
        return self._sol(t).reshape(dim, dim)

    def eval_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float).ravel()
        dim = 2 * self.n
        flat = self._sol(ts)  # (dim*dim, K)
        return flat.T.reshape(ts.size, dim, dim)


class SampledPath(SymplecticPath):
    """Path reconstructed from stored samples; refines by log-linear interpolation.

    Between samples gamma(t) is gamma(t_i) exp(s L) with L the matrix logarithm
    of the increment; accuracy is limited by the stored density, which the
    pi/4-per-step invariant keeps honest.
    """

    def __init__(self, tau: float, times, mats, convex_certified: bool = False,
                 tol: Tolerances = DEFAULT):
        times = np.asarray(times, dtype=float)
        order = np.argsort(times)
        self._ts = times[order]
        self._ms = [np.asarray(mats[i], dtype=float) for i in order]
        if abs(self._ts[0]) > 1e-12 * tau:
            raise ValueError("sampled path must start at t = 0")
        if np.linalg.norm(self._ms[0] - np.eye(self._ms[0].shape[0])) > 1e-8:
            raise ValueError("sampled path must start at the identity")
        self.tau = float(tau)
        self.n = self._ms[0].shape[0] // 2
        self.convex_certified = bool(convex_certified)
        self.segment_tau = self.tau
        self.sample_times = self._ts
        self._logs = {}

    @classmethod
    def from_json(cls, obj: dict, tol: Tolerances = DEFAULT) -> "SampledPath":
        times = [s["t"] for s in obj["samples"]]
        mats = [np.asarray(s["matrix"]["rows"], dtype=float) for s in obj["samples"]]
        return cls(obj["tau"], times, mats,
                   convex_certified=obj.get("convex_certified", False), tol=tol)

    def _eval(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self._ts, t, side="right") - 1)
        i = max(0, min(i, len(self._ts) - 2))
        t0, t1 = self._ts[i], self._ts[i + 1]
        if t <= t0:
            return self._ms[i]
        if t >= t1:
            return self._ms[i + 1]
        L = self._logs.get(i)
        if L is None:
            E = self._ms[i + 1] @ symplectic_inverse(self._ms[i])
            L = logm(E)
            L = np.real(L)
            self._logs[i] = L
        s = (t - t0) / (t1 - t0)
        return np.real(expm(s * L)) @ self._ms[i]
