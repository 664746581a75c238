"""Convex cyclic-symmetric hypersurfaces: gauges, Hamiltonians, duals.

Two families are provided.  The ellipsoid has closed forms throughout.  The
perturbed ellipsoid adds a degree-2-homogeneous harmonic term
eps * Re((x_1 + i x_{n+1})^k) / q(x)^{(k-2)/2} to the squared gauge, which is
invariant under the canonical rotation-by-2pi/k symmetry; its polar gauge and
Fenchel data are computed by a warm-started Newton solve of the tangency
system, batched over evaluation points.
"""
from __future__ import annotations

import numpy as np

from .config import DEFAULT, Tolerances
from .core import _J
from .cyclic import CyclicSymmetry, rotation_symmetry, symmetry_from_matrix
from .orbits import ClosedCharacteristic, TRACE_SAMPLES

__all__ = ["HypersurfaceModel", "Ellipsoid", "PerturbedEllipsoid", "model_from_json"]


def _batched(X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    return (X[None, :] if single else X), single


class HypersurfaceModel:
    """Common structure: H_alpha = gauge^alpha and the dual quantities."""

    n: int
    alpha: float
    symmetry: CyclicSymmetry

    def __init__(self, radii_sq, alpha: float, symmetry: CyclicSymmetry):
        self.radii_sq = np.asarray(radii_sq, dtype=float)
        self.n = len(self.radii_sq)
        if not (1.0 < alpha <= 2.0):
            raise ValueError("alpha must lie in (1, 2]; 2 is for oracle use only")
        self.alpha = float(alpha)
        self.beta = alpha / (alpha - 1.0)
        self._cstar = (alpha - 1.0) * alpha ** (-self.beta)
        if symmetry.n != self.n:
            raise ValueError("symmetry dimension does not match the model")
        self.symmetry = symmetry
        self.qd = np.concatenate([1.0 / self.radii_sq] * 2)

    # squared-gauge interface implemented by subclasses -------------------
    def _F(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _F_grad(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def _F_hess(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    # gauge ----------------------------------------------------------------
    def gauge(self, x):
        X, single = _batched(x)
        out = np.sqrt(self._F(X))
        return float(out[0]) if single else out

    def gauge_grad(self, x):
        X, single = _batched(x)
        j = np.sqrt(self._F(X))
        out = self._F_grad(X) / (2.0 * j[:, None])
        return out[0] if single else out

    def gauge_hess(self, x):
        X, single = _batched(x)
        j = np.sqrt(self._F(X))
        G = self._F_grad(X)
        H = self._F_hess(X)
        out = H / (2.0 * j[:, None, None]) \
            - np.einsum("bi,bj->bij", G, G) / (4.0 * j[:, None, None] ** 3)
        return out[0] if single else out

    # Hamiltonian H = gauge^alpha -------------------------------------------
    def hamiltonian(self, x):
        X, single = _batched(x)
        out = np.sqrt(self._F(X)) ** self.alpha
        return float(out[0]) if single else out

    def ham_grad(self, x):
        X, single = _batched(x)
        al = self.alpha
        j = np.sqrt(self._F(X))
        gj = self._F_grad(X) / (2.0 * j[:, None])
        out = al * j[:, None] ** (al - 1.0) * gj
        return out[0] if single else out

    def ham_hess(self, x):
        X, single = _batched(x)
        al = self.alpha
        j = np.sqrt(self._F(X))
        gj = self._F_grad(X) / (2.0 * j[:, None])
        hj = self._F_hess(X) / (2.0 * j[:, None, None]) \
            - np.einsum("bi,bj->bij", self._F_grad(X), self._F_grad(X)) \
            / (4.0 * j[:, None, None] ** 3)
        out = al * (al - 1.0) * j[:, None, None] ** (al - 2.0) * \
            np.einsum("bi,bj->bij", gj, gj) + al * j[:, None, None] ** (al - 1.0) * hj
        return out[0] if single else out

    # dual quantities --------------------------------------------------------
    def _polar_with_argmax(self, Y: np.ndarray):  # pragma: no cover - abstract
        raise NotImplementedError

    def polar_gauge(self, y):
        Y, single = _batched(y)
        p, _ = self._polar_with_argmax(Y)
        return float(p[0]) if single else p

    def fenchel(self, y):
        """Convex conjugate of H at y: cstar * polar(y)^beta."""
        Y, single = _batched(y)
        p, _ = self._polar_with_argmax(Y)
        out = self._cstar * p ** self.beta
        return float(out[0]) if single else out

    def fenchel_grad(self, y):
        """Gradient of the conjugate; equals the maximizer of x.y - H(x)."""
        Y, single = _batched(y)
        p, xs = self._polar_with_argmax(Y)
        coef = self._cstar * self.beta * np.where(p > 0, p, 1.0) ** (self.beta - 1.0)
        out = np.where(p[:, None] > 0, coef[:, None] * xs, 0.0)
        return out[0] if single else out

    def fenchel_1d_check(self, y) -> float:
        """Independent value by maximizing rho * polar(y) - rho^alpha over rho."""
        from scipy.optimize import minimize_scalar

        p = self.polar_gauge(np.asarray(y, dtype=float))
        if p == 0:
            return 0.0
        res = minimize_scalar(lambda r: -(r * p - r ** self.alpha),
                              bounds=(0.0, (2 * p) ** (1 / (self.alpha - 1))),
                              method="bounded", options={"xatol": 1e-13})
        return float(-res.fun)

    # geometry ----------------------------------------------------------------
    def diameter(self) -> float:
        rng = np.random.default_rng(0)
        D = rng.normal(size=(4096, 2 * self.n))
        D /= np.linalg.norm(D, axis=1, keepdims=True)
        axes = np.eye(2 * self.n)
        D = np.vstack([D, axes, -axes])
        return float(2.0 * np.max(1.0 / np.sqrt(self._F(D))))

    def certify_symmetry(self, samples: int = 256, tol: float = 1e-12) -> float:
        rng = np.random.default_rng(1)
        X = rng.normal(size=(samples, 2 * self.n))
        P = self.symmetry.P.array
        worst = float(np.max(np.abs(self.gauge(X @ P.T) - self.gauge(X))))
        if worst > tol * float(np.max(self.gauge(X))):
            raise ValueError(f"gauge is not invariant under the symmetry ({worst:.2e})")
        return worst

    def certify_convexity(self, samples: int = 10000, seed: int = 2) -> dict:
        """Sampled positive definiteness of the Hessian on tangent spaces of Sigma."""
        rng = np.random.default_rng(seed)
        D = rng.normal(size=(samples, 2 * self.n))
        D /= np.linalg.norm(D, axis=1, keepdims=True)
        X = D / np.sqrt(self._F(D))[:, None]  # points on Sigma
        H = self.ham_hess(X)
        G = self.gauge_grad(X)
        worst = np.inf
        for i in range(len(X)):
            g = G[i] / np.linalg.norm(G[i])
            Q, _ = np.linalg.qr(np.eye(2 * self.n) - np.outer(g, g))
            T = Q[:, :2 * self.n - 1]
            ev = np.linalg.eigvalsh(T.T @ H[i] @ T)
            worst = min(worst, float(ev.min()))
        return {"min_tangent_eig": worst, "certified": worst > 0.0,
                "method": "sampled", "samples": samples}

    def known_orbits(self):
        raise NotImplementedError(
            "analytic orbits are only available for the ellipsoid family")

    def to_json(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


class Ellipsoid(HypersurfaceModel):
    """Gauge j(x)^2 = sum (x_i^2 + x_{n+i}^2) / r_i^2; fully closed-form."""

    kind = "ellipsoid"

    def __init__(self, radii_sq, alpha: float = 1.5,
                 symmetry: CyclicSymmetry | None = None):
        radii_sq = np.asarray(radii_sq, dtype=float)
        symmetry = symmetry or rotation_symmetry(len(radii_sq), 2)
        super().__init__(radii_sq, alpha, symmetry)
        self.qdi = 1.0 / self.qd

    def _F(self, X):
        return np.einsum("bi,i,bi->b", X, self.qd, X)

    def _F_grad(self, X):
        return 2.0 * X * self.qd[None, :]

    def _F_hess(self, X):
        return np.broadcast_to(np.diag(2.0 * self.qd), (len(X), 2 * self.n, 2 * self.n)).copy()

    def _polar_with_argmax(self, Y):
        p = np.sqrt(np.einsum("bi,i,bi->b", Y, self.qdi, Y))
        safe = np.where(p > 0, p, 1.0)
        xs = (Y * self.qdi[None, :]) / safe[:, None]
        return p, xs

    def diameter(self) -> float:
        return float(2.0 * np.sqrt(self.radii_sq.max()))

    def known_orbits(self):
        """The planar circular characteristics, one per coordinate plane.

        Requires pairwise distinct radii (repeated radii give a continuum of
        orbits).  Orbits carry the energy-one Hamiltonian parametrization with
        period 2 pi r^2 / alpha.
        """
        r2 = self.radii_sq
        if len(set(np.round(r2, 12))) != len(r2):
            raise ValueError("repeated radii give a continuum of closed characteristics")
        out = []
        ts = np.arange(TRACE_SAMPLES) / TRACE_SAMPLES
        for j in range(self.n):
            r = float(np.sqrt(r2[j]))
            omega = self.alpha / r2[j]
            tau = 2.0 * np.pi / omega

            def ev(t, j=j, r=r, omega=omega):
                y = np.zeros(2 * self.n)
                y[j] = r * np.cos(omega * t)
                y[self.n + j] = r * np.sin(omega * t)
                return y

            samples = np.zeros((TRACE_SAMPLES, 2 * self.n))
            samples[:, j] = r * np.cos(2 * np.pi * ts)
            samples[:, self.n + j] = r * np.sin(2 * np.pi * ts)
            grad = self.ham_grad(samples)
            J = _J(self.n)
            # residual: |y' - J grad H| with y' known in closed form
            yd = np.zeros_like(samples)
            yd[:, j] = -r * omega * np.sin(2 * np.pi * ts)
            yd[:, self.n + j] = r * omega * np.cos(2 * np.pi * ts)
            res = float(np.max(np.linalg.norm(yd - grad @ J.T, axis=1)))
            out.append(ClosedCharacteristic(
                tau=tau, samples=samples, model=self, residual=res,
                closure_defect=0.0, multiplicity_m=1, evaluator=ev,
                label=f"plane-{j + 1} circle"))
        return out

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "radii_sq": [float(r) for r in self.radii_sq],
            "alpha": self.alpha,
            "symmetry": {"type": "rotation", "k": self.symmetry.order_k},
        }


class PerturbedEllipsoid(HypersurfaceModel):
    """Ellipsoid plus a k-fold harmonic perturbation in the first plane."""

    kind = "perturbed_ellipsoid"

    def __init__(self, radii_sq, alpha: float = 1.5, epsilon: float = 0.05,
                 harmonic: int = 3, symmetry: CyclicSymmetry | None = None):
        radii_sq = np.asarray(radii_sq, dtype=float)
        if harmonic < 3:
            raise ValueError("harmonic order must be >= 3")
        symmetry = symmetry or rotation_symmetry(len(radii_sq), harmonic)
        super().__init__(radii_sq, alpha, symmetry)
        self.epsilon = float(epsilon)
        self.harmonic = int(harmonic)
        r1 = float(np.sqrt(radii_sq[0]))
        if abs(epsilon) * r1 ** harmonic >= 0.5:
            raise ValueError("perturbation too large for a positive squared gauge")
        self.certify_symmetry()

    # squared gauge F = q + eps * Re(w^k) q^(-p), w in the first plane -------
    def _w(self, X):
        return X[:, 0] + 1j * X[:, self.n]

    def _q(self, X):
        return np.einsum("bi,i,bi->b", X, self.qd, X)

    def _F(self, X):
        q = self._q(X)
        w = self._w(X)
        p = (self.harmonic - 2) / 2.0
        return q + self.epsilon * np.real(w ** self.harmonic) * q ** (-p)

    def _F_grad(self, X):
        k, eps, n = self.harmonic, self.epsilon, self.n
        q = self._q(X)
        w = self._w(X)
        p = (k - 2) / 2.0
        u = np.real(w ** k)
        du = np.zeros_like(X)
        wk1 = k * w ** (k - 1)
        du[:, 0] = np.real(wk1)
        du[:, n] = -np.imag(wk1)
        v = q ** (-p)
        Qx = X * self.qd[None, :]
        dv = -2.0 * p * q[:, None] ** (-p - 1.0) * Qx
        return 2.0 * Qx + eps * (v[:, None] * du + u[:, None] * dv)

    def _F_hess(self, X):
        k, eps, n = self.harmonic, self.epsilon, self.n
        m = len(X)
        q = self._q(X)
        w = self._w(X)
        p = (k - 2) / 2.0
        u = np.real(w ** k)
        wk1 = k * w ** (k - 1)
        du = np.zeros_like(X)
        du[:, 0] = np.real(wk1)
        du[:, n] = -np.imag(wk1)
        wk2 = k * (k - 1) * w ** (k - 2)
        d2u = np.zeros((m, 2 * self.n, 2 * self.n))
        d2u[:, 0, 0] = np.real(wk2)
        d2u[:, 0, n] = d2u[:, n, 0] = -np.imag(wk2)
        d2u[:, n, n] = -np.real(wk2)
        v = q ** (-p)
        Qx = X * self.qd[None, :]
        dv = -2.0 * p * q[:, None] ** (-p - 1.0) * Qx
        d2v = 4.0 * p * (p + 1.0) * q[:, None, None] ** (-p - 2.0) * \
            np.einsum("bi,bj->bij", Qx, Qx) \
            - 2.0 * p * q[:, None, None] ** (-p - 1.0) * np.diag(self.qd)[None, :, :]
        H = 2.0 * np.broadcast_to(np.diag(self.qd), (m, 2 * self.n, 2 * self.n)).copy()
        H += eps * (v[:, None, None] * d2u + u[:, None, None] * d2v
                    + np.einsum("bi,bj->bij", du, dv)
                    + np.einsum("bi,bj->bij", dv, du))
        return H

    def _polar_with_argmax(self, Y):
        """Support data by Newton on the tangency system, ellipsoid-seeded.

        Solves y = mu * grad F(x), F(x) = 1 for (x, mu) batched over rows of
        Y; the multi-start fallback perturbs the seed when Newton stalls.
        """
        m = len(Y)
        p = np.zeros(m)
        xs = np.zeros_like(Y)
        norms = np.linalg.norm(Y, axis=1)
        act = norms > 1e-300
        if not np.any(act):
            return p, xs
        Ya = Y[act]
        x, mu, ok = self._support_newton(Ya, seed_rot=0.0)
        if not np.all(ok):
            for rot in (0.2, -0.2, 0.5):
                x2, mu2, ok2 = self._support_newton(Ya, seed_rot=rot)
                fix = (~ok) & ok2
                x[fix], mu[fix], ok[fix] = x2[fix], mu2[fix], True
                if np.all(ok):
                    break
        if not np.all(ok):
            raise RuntimeError("support-function Newton failed to converge")
        pa = np.einsum("bi,bi->b", x, Ya)
        p[act] = pa
        xs[act] = x
        return p, xs

    def _support_newton(self, Y, seed_rot: float, iters: int = 60, tol: float = 1e-12):
        n2 = 2 * self.n
        qdi = 1.0 / self.qd
        x = Y * qdi[None, :]
        if seed_rot:
            c, s = np.cos(seed_rot), np.sin(seed_rot)
            x0, xn = x[:, 0].copy(), x[:, self.n].copy()
            x[:, 0] = c * x0 - s * xn
            x[:, self.n] = s * x0 + c * xn
        x /= np.sqrt(self._F(x))[:, None]
        g = self._F_grad(x)
        mu = np.einsum("bi,bi->b", Y, g) / np.einsum("bi,bi->b", g, g)
        scale = np.linalg.norm(Y, axis=1)
        for _ in range(iters):
            g = self._F_grad(x)
            F = self._F(x)
            r1 = Y - mu[:, None] * g
            r2 = F - 1.0
            res = np.sqrt(np.sum(r1 ** 2, axis=1) + r2 ** 2) / (1.0 + scale)
            if np.all(res < tol):
                break
            H = self._F_hess(x)
            Jac = np.zeros((len(Y), n2 + 1, n2 + 1))
            Jac[:, :n2, :n2] = -mu[:, None, None] * H
            Jac[:, :n2, n2] = -g
            Jac[:, n2, :n2] = g
            rhs = np.concatenate([-r1, -r2[:, None]], axis=1)
            try:
                step = np.linalg.solve(Jac, rhs)
            except np.linalg.LinAlgError:
                return x, mu, res < tol
            step = np.clip(step, -0.5, 0.5)
            x = x - step[:, :n2]
            mu = mu - step[:, n2]
        g = self._F_grad(x)
        F = self._F(x)
        r1 = Y - mu[:, None] * g
        res = np.sqrt(np.sum(r1 ** 2, axis=1) + (F - 1.0) ** 2) / (1.0 + scale)
        return x, mu, res < 1e-9

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "radii_sq": [float(r) for r in self.radii_sq],
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "harmonic": self.harmonic,
            "symmetry": {"type": "rotation", "k": self.symmetry.order_k},
        }


def _symmetry_from_json(obj: dict, n: int) -> CyclicSymmetry:
    if obj.get("type", "rotation") == "rotation":
        return rotation_symmetry(n, int(obj["k"]))
    if obj["type"] == "matrix":
        rows = np.asarray(obj["matrix"]["rows"], dtype=float)
        return symmetry_from_matrix(rows, int(obj["k"]))
    raise ValueError(f"unknown symmetry type {obj.get('type')!r}")


def model_from_json(obj: dict) -> HypersurfaceModel:
    """Build a model from its config form (the CLI / service wire format)."""
    kind = obj["kind"]
    radii = obj["radii_sq"]
    alpha = float(obj.get("alpha", 1.5))
    sym = _symmetry_from_json(obj.get("symmetry", {"type": "rotation", "k": 2}),
                              len(radii))
    if kind == "ellipsoid":
        return Ellipsoid(radii, alpha=alpha, symmetry=sym)
    if kind == "perturbed_ellipsoid":
        return PerturbedEllipsoid(radii, alpha=alpha,
                                  epsilon=float(obj.get("epsilon", 0.05)),
                                  harmonic=int(obj.get("harmonic", 3)),
                                  symmetry=sym)
    raise ValueError(f"unknown model kind {kind!r}")
