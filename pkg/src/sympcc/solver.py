"""Closed characteristics by dual-action minimization over mean-zero loops.

The dual action Phi(u) = int (1/2) Ju . Mu + H*(-Ju) dt is evaluated on real
Fourier loops: the quadratic pairing is exact in coefficients, the conjugate
term by trapezoidal quadrature on a uniform grid (spectrally accurate).  The
gradient is the exact gradient of that discretization, so quasi-Newton descent
and the Newton-Krylov polish see a consistent objective.  Critical loops with
higher Morse index (iterates, long orbits) are reached by the polish stage,
which solves the criticality system instead of descending.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize as _scipy_minimize
from scipy.optimize import newton_krylov, NoConvergence

from .config import DEFAULT, Tolerances
from .core import _J, spectrum, elliptic_height, SpectrumReport
from .models import HypersurfaceModel
from .orbits import ClosedCharacteristic, TRACE_SAMPLES
from .paths import FundamentalSolutionPath, SymplecticPath, iterate_path

__all__ = [
    "DualLoop",
    "LoopSpace",
    "SolverOptions",
    "dual_action",
    "dual_action_gradient",
    "minimize_action",
    "extract_orbit",
    "linearized_path",
    "floquet",
    "find_orbits",
    "orbit_seed_loop",
    "loop_transform",
]


@dataclass
class DualLoop:
    """Mean-zero loop as real cosine/sine coefficients, shape (N, 2n) each.

    The complex coefficient at frequency +k is (cos_k - i sin_k) / 2, its
    reality partner at -k the conjugate; frequency zero is absent by
    construction.
    """

    cos: np.ndarray
    sin: np.ndarray

    @property
    def N(self) -> int:
        return self.cos.shape[0]

    @property
    def dim(self) -> int:
        return self.cos.shape[1]

    def pack(self) -> np.ndarray:
        return np.concatenate([self.cos.ravel(), self.sin.ravel()])

    @classmethod
    def unpack(cls, theta: np.ndarray, N: int, dim: int) -> "DualLoop":
        half = theta.size // 2
        return cls(theta[:half].reshape(N, dim).copy(),
                   theta[half:].reshape(N, dim).copy())

    def coefficient(self, k: int) -> np.ndarray:
        """Complex coefficient at nonzero integer frequency k."""
        if k == 0 or abs(k) > self.N:
            raise KeyError("frequencies are the nonzero integers in [-N, N]")
        c = 0.5 * (self.cos[abs(k) - 1] - 1j * self.sin[abs(k) - 1])
        return c if k > 0 else np.conj(c)

    def norm(self) -> float:
        return float(np.sqrt(0.5 * (np.sum(self.cos ** 2) + np.sum(self.sin ** 2))))


class LoopSpace:
    """Grids and transforms for loops of a fixed truncation order."""

    def __init__(self, n: int, N: int = 64, quad_points: int | None = None):
        self.n, self.N = int(n), int(N)
        self.M = int(quad_points) if quad_points else max(8 * N, 256)
        if self.M < 8 * N:
            raise ValueError("quadrature grid must have at least 8 N points")
        self.J = _J(n)
        self.t = np.arange(self.M) / self.M
        self._k = np.arange(1, N + 1)

    def zero(self) -> DualLoop:
        return DualLoop(np.zeros((self.N, 2 * self.n)), np.zeros((self.N, 2 * self.n)))

    def values(self, loop: DualLoop, M: int | None = None) -> np.ndarray:
        M = M or self.M
        spec = np.zeros((M // 2 + 1, 2 * self.n), dtype=complex)
        spec[1:self.N + 1] = 0.5 * (loop.cos - 1j * loop.sin) * M
        return np.fft.irfft(spec, n=M, axis=0)

    def from_values(self, V: np.ndarray) -> DualLoop:
        spec = np.fft.rfft(V, axis=0) / V.shape[0]
        return DualLoop(2.0 * spec[1:self.N + 1].real, -2.0 * spec[1:self.N + 1].imag)

    def primitive(self, loop: DualLoop) -> DualLoop:
        """Coefficients of the mean-zero antiderivative (frequency-k divide)."""
        k = self._k[:, None]
        return DualLoop(-loop.sin / (2 * np.pi * k), loop.cos / (2 * np.pi * k))

    def eval_series(self, loop: DualLoop, s: np.ndarray, shift: np.ndarray | None = None):
        """Evaluate the loop at arbitrary phases s in [0, 1)."""
        ang = 2.0 * np.pi * np.outer(s, self._k)
        out = np.cos(ang) @ loop.cos + np.sin(ang) @ loop.sin
        if shift is not None:
            out = out - shift[None, :]
        return out

    def quad_term(self, loop: DualLoop) -> float:
        vals = np.einsum("ki,ij,kj->k", loop.cos, self.J, loop.sin)
        return float(np.sum(vals / (4 * np.pi * self._k)))

    def quad_grad(self, loop: DualLoop) -> DualLoop:
        k = self._k[:, None]
        return DualLoop((loop.sin @ self.J.T) / (4 * np.pi * k),
                        (loop.cos @ self.J) / (4 * np.pi * k))


@dataclass
class SolverOptions:
    n_fourier: int = 64
    quad_points: int | None = None
    max_descent: int = 200
    max_newton: int = 60
    grad_tol: float = DEFAULT.grad


def dual_action(model: HypersurfaceModel, ls: LoopSpace, loop: DualLoop,
                check_resolution: bool = False) -> float:
    """Phi(u); with ``check_resolution`` the conjugate quadrature is doubled
    and a relative change above 1e-8 raises."""
    U = ls.values(loop)
    value = ls.quad_term(loop) + float(np.mean(model.fenchel(-U @ ls.J.T)))
    if check_resolution:
        U2 = ls.values(loop, M=2 * ls.M)
        v2 = ls.quad_term(loop) + float(np.mean(model.fenchel(-U2 @ ls.J.T)))
        if abs(v2 - value) > 1e-8 * max(1e-12, abs(value)):
            raise RuntimeError(
                f"quadrature under-resolved: doubling moves Phi by {abs(v2 - value):.2e}")
    return value


def dual_action_gradient(model: HypersurfaceModel, ls: LoopSpace,
                         loop: DualLoop) -> DualLoop:
    """L2 representative of Phi'(u), truncated to the loop space."""
    U = ls.values(loop)
    W = model.fenchel_grad(-U @ ls.J.T) @ ls.J.T  # J grad H*(-Ju) as rows
    g_h = ls.from_values(W)
    g_q = ls.quad_grad(loop)
    # quad_grad holds d Phi / d theta; the L2 representative doubles it
    return DualLoop(2.0 * g_q.cos + g_h.cos, 2.0 * g_q.sin + g_h.sin)


def _theta_fun(model, ls):
    N, dim = ls.N, 2 * ls.n

    def fval(theta):
        return dual_action(model, ls, DualLoop.unpack(theta, N, dim))

    def fgrad(theta):
        g = dual_action_gradient(model, ls, DualLoop.unpack(theta, N, dim))
        return 0.5 * g.pack()  # d Phi / d theta

    return fval, fgrad


def ray_rescale(model: HypersurfaceModel, ls: LoopSpace, loop: DualLoop) -> DualLoop:
    """Scale the seed to the exact minimizer of Phi along its ray."""
    q0 = ls.quad_term(loop)
    U = ls.values(loop)
    h0 = float(np.mean(model.fenchel(-U @ ls.J.T)))
    if q0 >= 0 or h0 <= 0:
        return loop
    rho = (-2.0 * q0 / (model.beta * h0)) ** (1.0 / (model.beta - 2.0))
    return DualLoop(loop.cos * rho, loop.sin * rho)


def minimize_action(model: HypersurfaceModel, ls: LoopSpace, seed: DualLoop,
                    opts: SolverOptions | None = None) -> DualLoop | None:
    """Descend Phi, then polish to a critical point of any Morse index.

    Returns None when the run ends at the origin, at a positive action value,
    or above the gradient tolerance; those seeds simply contribute nothing.
    """
    opts = opts or SolverOptions()
    fval, fgrad = _theta_fun(model, ls)
    theta0 = seed.pack()
    res = _scipy_minimize(lambda th: (fval(th), fgrad(th)), theta0, jac=True,
                          method="L-BFGS-B",
                          options={"maxiter": opts.max_descent,
                                   "ftol": 1e-18, "gtol": 1e-12})
    theta = res.x
    try:
        with np.errstate(invalid="ignore", divide="ignore"):
            theta = newton_krylov(fgrad, theta, f_tol=opts.grad_tol / 64.0,
                                  maxiter=opts.max_newton, method="lgmres")
    except NoConvergence as exc:
        theta = np.asarray(exc.args[0])
    except (ValueError, np.linalg.LinAlgError):
        return None
    loop = DualLoop.unpack(theta, ls.N, 2 * ls.n)
    # |Phi'|_L2 = sqrt(2 sum g_theta^2) by Parseval
    grad_norm = float(np.sqrt(2.0 * np.sum(fgrad(theta) ** 2)))
    if grad_norm > opts.grad_tol:
        return None
    if fval(theta) >= -1e-12:
        return None
    if loop.norm() < 1e-8:
        return None
    return loop


def extract_orbit(model: HypersurfaceModel, ls: LoopSpace, loop: DualLoop,
                  tol: Tolerances = DEFAULT) -> ClosedCharacteristic:
    """Rescale a critical loop to a closed characteristic on the hypersurface.

    The constant making the primitive solve the fixed-period problem is the
    mean of Mu - grad H*(-Ju); energy constancy, the pointwise flow defect and
    an independent re-integration certify the result.
    """
    U = ls.values(loop)
    X = ls.values(ls.primitive(loop))
    Gh = model.fenchel_grad(-U @ ls.J.T)
    xi = np.mean(X - Gh, axis=0)
    Xu = X - xi

    H = model.hamiltonian(Xu)
    h = float(np.mean(H))
    if float(H.max() - H.min()) > tol.orbit * max(1.0, h):
        raise RuntimeError(
            f"energy varies by {float(H.max() - H.min()):.2e} along the critical loop")

    # minimal period 1/m of the primitive by grid self-matching
    scale = float(np.max(np.abs(Xu))) or 1.0
    thr = tol.period_detect * scale
    m = 1
    residuals = {}
    for d in range(2, ls.M + 1):
        if ls.M % d:
            continue
        sh = ls.M // d
        residuals[d] = float(np.max(np.abs(np.roll(Xu, -sh, axis=0) - Xu)))
    matched = [d for d, r in residuals.items() if r < thr]
    near = [d for d, r in residuals.items() if thr <= r < 10 * thr]
    if near:
        raise RuntimeError(f"ambiguous minimal period: divisors {near} are borderline")
    if matched:
        m = max(matched)

    al = model.alpha
    tau = (1.0 / m) * h ** ((al - 2.0) / al)
    prim = ls.primitive(loop)
    speed = h ** ((2.0 - al) / al)

    def evaluator(t: float) -> np.ndarray:
        s = np.atleast_1d((speed * t) % 1.0)
        return (ls.eval_series(prim, s, shift=xi) * h ** (-1.0 / al))[0]

    ts = tau * np.arange(TRACE_SAMPLES) / TRACE_SAMPLES
    s_grid = (speed * ts) % 1.0
    samples = ls.eval_series(prim, s_grid, shift=xi) * h ** (-1.0 / al)

    # pointwise defect of y' = J grad H(y)
    yd = ls.eval_series(loop, s_grid) * h ** ((1.0 - al) / al)
    defect = yd - model.ham_grad(samples) @ ls.J.T
    residual = float(np.max(np.linalg.norm(defect, axis=1)))
    if residual > tol.orbit:
        raise RuntimeError(f"orbit residual {residual:.2e} above tolerance")

    sol = solve_ivp(lambda t, y: ls.J @ model.ham_grad(y), (0.0, tau), samples[0],
                    method="DOP853", rtol=tol.ode_rtol, atol=tol.ode_atol)
    if not sol.success:
        raise RuntimeError("re-integration of the orbit failed")
    closure = float(np.linalg.norm(sol.y[:, -1] - samples[0]))
    if closure > tol.orbit:
        raise RuntimeError(f"re-integrated closure defect {closure:.2e} above tolerance")

    return ClosedCharacteristic(
        tau=tau, samples=samples, model=model, residual=residual,
        closure_defect=closure, multiplicity_m=m, evaluator=evaluator,
        action_value=dual_action(model, ls, loop))


def linearized_path(model: HypersurfaceModel, orbit: ClosedCharacteristic,
                    m: int = 1, tol: Tolerances = DEFAULT) -> SymplecticPath:
    """Fundamental solution of the flow linearized along the orbit, iterated m times."""
    base = FundamentalSolutionPath(
        lambda t: model.ham_hess(orbit.y(t)), orbit.tau, model.n,
        convex=True, tol=tol)
    return iterate_path(base, np.eye(2 * model.n), m)


def floquet(orbit: ClosedCharacteristic, path: SymplecticPath | None = None,
            tol: Tolerances = DEFAULT):
    """Floquet multipliers of the orbit with the hyperbolicity verdict."""
    path = path or linearized_path(orbit.model, orbit, 1, tol=tol)
    M = path.end()
    rep = spectrum(M, tol=tol)
    e = elliptic_height(M, tol=tol)
    return {"spectrum": rep, "elliptic_height": e, "hyperbolic": e == 2}


def loop_transform(loop: DualLoop, A: np.ndarray) -> DualLoop:
    """The loop t -> A u(t)."""
    return DualLoop(loop.cos @ A.T, loop.sin @ A.T)


def orbit_seed_loop(model: HypersurfaceModel, ls: LoopSpace,
                    orbit: ClosedCharacteristic, m: int = 1) -> DualLoop:
    """The critical loop generated by the m-th iterate of a known orbit."""
    al = model.alpha
    mtau = m * orbit.tau
    ts = mtau * ls.t
    pts = np.stack([orbit.y(t) for t in ts])
    yd = model.ham_grad(pts) @ ls.J.T
    U = mtau ** ((1.0 - al) / (2.0 - al)) * yd
    return ls.from_values(U)


def _plane_seeds(ls: LoopSpace, amplitudes=(0.5, 1.5)):
    """Frequency-one circular loops in each coordinate plane, flow-oriented."""
    out = []
    for j in range(ls.n):
        for amp in amplitudes:
            loop = ls.zero()
            loop.cos[0, j] = amp
            loop.sin[0, ls.n + j] = amp
            out.append(loop)
    return out


def _random_seed(ls: LoopSpace, rng: np.random.Generator) -> DualLoop:
    loop = ls.zero()
    loop.cos[0] = rng.normal(size=2 * ls.n)
    loop.sin[0] = rng.normal(size=2 * ls.n)
    loop.cos[1] = 0.3 * rng.normal(size=2 * ls.n)
    loop.sin[1] = 0.3 * rng.normal(size=2 * ls.n)
    return loop


def find_orbits(model: HypersurfaceModel, starts: int = 20, seed: int = 42,
                opts: SolverOptions | None = None,
                tol: Tolerances = DEFAULT) -> list:
    """Multi-start search for closed characteristics.

    Seeding: per-plane circular loops, then random low-frequency loops up to
    ``starts``, then symmetry images of every critical loop found (which makes
    asymmetric partners show up without extra luck).  Deterministic for a
    fixed seed.
    """
    opts = opts or SolverOptions()
    ls = LoopSpace(model.n, N=opts.n_fourier, quad_points=opts.quad_points)
    rng = np.random.default_rng(seed)
    seeds = _plane_seeds(ls)[:starts]
    while len(seeds) < starts:
        seeds.append(_random_seed(ls, rng))

    P = model.symmetry.P.array
    found_loops: list[DualLoop] = []
    orbits: list[ClosedCharacteristic] = []

    def run(seed_loop: DualLoop) -> None:
        loop = minimize_action(model, ls, ray_rescale(model, ls, seed_loop), opts)
        if loop is None:
            return
        try:
            orbit = extract_orbit(model, ls, loop, tol=tol)
        except RuntimeError:
            return
        found_loops.append(loop)
        orbits.append(orbit)

    for s in seeds:
        run(s)
    for loop in list(found_loops):
        run(loop_transform(loop, P))
    return orbits
