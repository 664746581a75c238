"""Crossing-count index theory for convex symplectic paths.

For the fundamental solution of z' = J A(t) z with A(t) positive definite, the
index at a unit-circle parameter omega is an endpoint offset plus the total
nullity over interior degeneracy times, both for the plain boundary condition
(gamma(s) - omega I singular) and for the twisted one (gamma(s) - omega P).
Degeneracy times are located by certified interval bisection on the smallest
singular value, then polished to the apex of its local V shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .config import DEFAULT, SWEEP_EPSILONS, Tolerances
from .core import nullity_omega, twisted_nullity, elliptic_height, symplectic_inverse, _as_array
from .paths import SymplecticPath, IteratedPath, iterate_path

__all__ = [
    "CrossingError",
    "crossing_sum",
    "omega_index_convex",
    "p_omega_index_convex",
    "p_nullity",
    "splitting_numbers_perturbative",
    "p_splitting_numbers",
    "bott_check",
    "BottCheck",
    "mean_index_circle_average",
    "IndexData",
    "ConvexIndexEngine",
    "index_iterates",
]

TWO_PI = 2.0 * np.pi


class CrossingError(RuntimeError):
    """Crossing detection could not certify its answer."""


def _require_convex(path: SymplecticPath) -> None:
    if not getattr(path, "convex_certified", False):
        raise CrossingError("index rules apply to convex-certified paths only")


def _apex(f, a: float, b: float, lo: float, hi: float, scale: float) -> float:
    """Apex of the V-shaped dip of f inside [a, b].

    A bounded Brent pass gets close; the apex is then the intersection of the
    two support lines sampled h away, which resolves the kink far below
    Brent's own accuracy.  Probing may step slightly outside [a, b] but stays
    inside the path domain [lo, hi].
    """
    res = minimize_scalar(f, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-11 * scale, "maxiter": 200})
    s = float(res.x)
    h = 1e-6 * scale
    if s - h <= lo:
        g1, g2 = f(s + h), f(s + 2 * h)
        c = (g2 - g1) / h
        cands = [s, s + h - g1 / c] if c > 0 else [s]
    elif s + h >= hi:
        g1, g2 = f(s - h), f(s - 2 * h)
        c = (g2 - g1) / h
        cands = [s, s - h + g1 / c] if c > 0 else [s]
    else:
        # exact three-point solve of the local V, one candidate per side of
        # the kink relative to s; the lower evaluation wins
        g0, gm, gp = f(s), f(s - h), f(s + h)
        cands = [s]
        if gm > g0:
            cands.append(s + g0 * h / (gm - g0))
        if gp > g0:
            cands.append(s - g0 * h / (gp - g0))
    cands = [min(max(x, lo), hi) for x in cands]
    return min(cands, key=f)


def crossing_sum(path: SymplecticPath, target, tol: Tolerances = DEFAULT,
                 budget: int = 500000):
    """Interior degeneracy times of gamma(s) - target with multiplicities.

    Returns (total nullity, [(time, multiplicity), ...]).  The search
    subdivides the sample grid, discarding intervals certified zero-free by a
    local Lipschitz bound, until every surviving bracket isolates one dip.
    Times at the path endpoints are excluded; two crossings that cannot be
    separated raise :class:`CrossingError`.
    """
    tau = path.tau
    seg = getattr(path, "segment_tau", tau)
    target = np.asarray(target, dtype=complex)

    def f(t: float) -> float:
        sv = np.linalg.svd(path.eval(t).astype(complex) - target, compute_uv=False)
        return float(sv[-1] / max(1.0, sv[0]))

    # the gap is normalized by the local matrix scale so that its Lipschitz
    # constant stays bounded on iterates whose norms grow with the depth
    ts = np.asarray(path.sample_times)
    G = path.eval_many(ts)
    sv_all = np.linalg.svd(G.astype(complex) - target[None, :, :], compute_uv=False)
    scale_all = np.maximum(1.0, sv_all[:, 0])
    g = sv_all[:, -1] / scale_all
    dts = np.diff(ts)
    inc = np.linalg.norm(np.diff(G, axis=0), axis=(1, 2))
    rel_slope = 3.0 * inc / np.minimum(scale_all[:-1], scale_all[1:]) / dts
    k = len(dts)
    stack = []
    for i in range(k):
        Lloc = 2.0 * float(rel_slope[max(0, i - 1):min(k, i + 2)].max()) + 1e-12
        if min(g[i], g[i + 1]) <= 0.6 * Lloc * dts[i]:
            stack.append((ts[i], ts[i + 1], g[i], g[i + 1], Lloc))

    # level-synchronous subdivision: all midpoints of a level are evaluated
    # in one batched pass, so the cost is a few dozen vector calls
    w_min = tol.crossing_bracket_rel * seg
    brackets = []
    n_evals = 0
    level = stack
    while level:
        keep = []
        for item in level:
            a, b, ga, gb, L = item
            if min(ga, gb) > 0.6 * L * (b - a):
                continue
            if b - a <= w_min:
                brackets.append((a, b))
                continue
            keep.append(item)
        if not keep:
            break
        n_evals += len(keep)
        if n_evals > budget:
            raise CrossingError("crossing search budget exceeded")
        mids = np.array([0.5 * (a + b) for a, b, *_ in keep])
        Gm = path.eval_many(mids).astype(complex) - target[None, :, :]
        svm = np.linalg.svd(Gm, compute_uv=False)
        gms = svm[:, -1] / np.maximum(1.0, svm[:, 0])
        nxt = []
        for (a, b, ga, gb, L), m, gm in zip(keep, mids, gms):
            nxt.append((a, m, ga, gm, L))
            nxt.append((m, b, gm, gb, L))
        level = nxt

    brackets.sort()
    clusters = []
    for a, b in brackets:
        if clusters and a - clusters[-1][1] <= 2 * w_min:
            clusters[-1] = (clusters[-1][0], b)
        else:
            clusters.append((a, b))

    bdry = tol.crossing_boundary_rel * seg
    found = []
    for lo, hi in clusters:
        x0 = _apex(f, max(0.0, lo - w_min), min(tau, hi + w_min), 0.0, tau, seg)
        M = path.eval(x0)
        sv = np.linalg.svd(M.astype(complex) - target, compute_uv=False)
        mult = int(np.sum(sv < tol.rank_rel * max(1.0, np.linalg.norm(M, 2))))
        if mult >= 1 and bdry < x0 < tau - bdry:
            found.append((x0, mult))

    found.sort()
    merged = []
    for s, m in found:
        if merged and abs(s - merged[-1][0]) < tol.crossing_merge_rel * seg:
            merged[-1] = (merged[-1][0], max(merged[-1][1], m))
        elif merged and abs(s - merged[-1][0]) < tol.crossing_separate_rel * seg:
            raise CrossingError(f"two crossings near t={s:.9f} cannot be separated")
        else:
            merged.append((s, m))
    return sum(m for _, m in merged), merged


def omega_index_convex(gamma: SymplecticPath, omega: complex,
                       tol: Tolerances = DEFAULT) -> int:
    """Index at omega: n for omega = 1, plus interior degeneracy nullities."""
    _require_convex(gamma)
    omega = complex(omega)
    total, _ = crossing_sum(gamma, omega * np.eye(2 * gamma.n), tol=tol)
    offset = gamma.n if abs(omega - 1.0) < 1e-13 else 0
    return offset + total


def p_omega_index_convex(gamma: SymplecticPath, P, omega: complex,
                         tol: Tolerances = DEFAULT) -> int:
    """Twisted index: nullity of P^-1 at omega plus interior twisted nullities."""
    _require_convex(gamma)
    omega = complex(omega)
    A = _as_array(P)
    total, _ = crossing_sum(gamma, omega * A.astype(complex), tol=tol)
    return nullity_omega(symplectic_inverse(A), omega, tol=tol) + total


def p_nullity(M, P, omega: complex, tol: Tolerances = DEFAULT) -> int:
    """dim ker(M - omega P)."""
    return twisted_nullity(M, P, omega, tol=tol)


def _stabilized_sweep(fn, omega: complex, epsilons=SWEEP_EPSILONS):
    base = fn(omega)
    vals = []
    for eps in epsilons:
        vals.append((fn(omega * np.exp(1j * eps)) - base,
                     fn(omega * np.exp(-1j * eps)) - base))
        if len(vals) >= 2 and vals[-1] == vals[-2]:
            return vals[-1]
    raise CrossingError(f"splitting sweep failed to stabilize: {vals}")


def splitting_numbers_perturbative(gamma: SymplecticPath, omega: complex,
                                   tol: Tolerances = DEFAULT):
    """(S+, S-) at omega from a shrinking-epsilon index sweep.

    The sweep stops once two consecutive epsilon values agree; both numbers
    are nonnegative and bounded by the endpoint nullity at omega.
    """
    _require_convex(gamma)
    sp, sm = _stabilized_sweep(lambda w: omega_index_convex(gamma, w, tol=tol),
                               complex(omega))
    nu = nullity_omega(gamma.end(), complex(omega), tol=tol)
    if not (0 <= sp <= nu and 0 <= sm <= nu):
        raise CrossingError(f"splitting numbers ({sp}, {sm}) violate 0 <= S <= {nu}")
    return sp, sm


def p_splitting_numbers(gamma: SymplecticPath, P, omega: complex,
                        tol: Tolerances = DEFAULT, cross_check=None):
    """Twisted splitting numbers by sweeping the twisted index.

    ``cross_check`` may carry a pair computed from the difference identity
    S(P^-1 M) - S(P^-1); an integer mismatch is a hard error.
    """
    _require_convex(gamma)
    pair = _stabilized_sweep(
        lambda w: p_omega_index_convex(gamma, P, w, tol=tol), complex(omega))
    if cross_check is not None and tuple(cross_check) != pair:
        raise CrossingError(
            f"twisted splitting numbers {pair} disagree with identity value {tuple(cross_check)}")
    return pair


@dataclass(frozen=True)
class BottCheck:
    index_lhs: int
    index_rhs: int
    nullity_lhs: int
    nullity_rhs: int

    @property
    def ok(self) -> bool:
        return self.index_lhs == self.index_rhs and self.nullity_lhs == self.nullity_rhs


def _roots_of(z: complex, m: int):
    theta = np.angle(z)
    return [np.exp(1j * (theta + TWO_PI * k) / m) for k in range(m)]


def bott_check(gamma: SymplecticPath, P, m: int, z: complex,
               tol: Tolerances = DEFAULT) -> BottCheck:
    """Iterated index at z versus the sum over m-th roots, plus nullities."""
    _require_convex(gamma)
    z = complex(z)
    A = _as_array(P)
    Pm = np.linalg.matrix_power(A, m)
    it = iterate_path(gamma, A, m)
    lhs = p_omega_index_convex(it, Pm, z, tol=tol)
    rhs = sum(p_omega_index_convex(gamma, A, w, tol=tol) for w in _roots_of(z, m))
    end_it = it.end()
    nu_lhs = twisted_nullity(end_it, Pm, z, tol=tol)
    nu_rhs = sum(twisted_nullity(gamma.end(), A, w, tol=tol) for w in _roots_of(z, m))
    return BottCheck(lhs, rhs, nu_lhs, nu_rhs)


def mean_index_circle_average(gamma: SymplecticPath, tol: Tolerances = DEFAULT) -> float:
    """Mean index as the circle average of the omega-index.

    The omega-index is constant on the arcs cut by the monodromy spectrum, so
    the average is an exact finite sum up to eigenvalue-angle accuracy.
    """
    _require_convex(gamma)
    M = gamma.end()
    vals = np.linalg.eigvals(M)
    on_circle = vals[np.abs(np.abs(vals) - 1.0) <= tol.circle]
    angles = np.mod(np.angle(on_circle), TWO_PI)
    cuts = np.unique(np.concatenate([[0.0], angles, [TWO_PI]]))
    keep = [cuts[0]]
    for c in cuts[1:]:
        if c - keep[-1] > 1e-9:
            keep.append(c)
    total = 0.0
    for a, b in zip(keep[:-1], keep[1:]):
        mid = 0.5 * (a + b)
        total += (b - a) * omega_index_convex(gamma, np.exp(1j * mid), tol=tol)
    return total / TWO_PI


@dataclass
class IndexData:
    """Index record of a closed-characteristic path and its iterates."""

    n: int
    i_1: int
    nu_1: int
    splitting_plus: int
    splitting_minus: int
    mean_index: float
    iterates: dict  # m -> (i(y, m), nu(y, m))
    elliptic_height: int
    hyperbolic: bool
    mean_index_estimate: float = 0.0
    mean_index_flagged: bool = False

    def ekeland_index(self, m: int) -> int:
        return self.iterates[m][0] - self.n

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "i1": self.i_1,
            "nu1": self.nu_1,
            "splitting": [self.splitting_plus, self.splitting_minus],
            "mean_index": float(self.mean_index),
            "mean_index_estimate": float(self.mean_index_estimate),
            "mean_index_flagged": self.mean_index_flagged,
            "iterates": {str(m): [i, nu] for m, (i, nu) in sorted(self.iterates.items())},
            "ekeland": {str(m): i - self.n for m, (i, _) in sorted(self.iterates.items())},
            "elliptic_height": self.elliptic_height,
            "hyperbolic": self.hyperbolic,
        }


class ConvexIndexEngine:
    """Memoized index computations on one convex path and its iterates.

    Iterate indices share one crossing scan of a deep plain iterate: the
    index at m is the offset plus the crossings strictly before m tau, so a
    single scan to depth M answers every m <= M.
    """

    def __init__(self, gamma: SymplecticPath, tol: Tolerances = DEFAULT):
        _require_convex(gamma)
        self.gamma = gamma
        self.tol = tol
        self.monodromy = gamma.end()
        self._pow: dict = {0: np.eye(2 * gamma.n)}
        self._omega: dict = {}
        self._depth = 0
        self._crossings: list = []

    def monodromy_power(self, m: int) -> np.ndarray:
        if m not in self._pow:
            self._pow[m] = np.linalg.matrix_power(self.monodromy, m)
        return self._pow[m]

    def omega_index(self, omega: complex) -> int:
        key = (round(complex(omega).real, 14), round(complex(omega).imag, 14))
        if key not in self._omega:
            self._omega[key] = omega_index_convex(self.gamma, omega, tol=self.tol)
        return self._omega[key]

    def _ensure_depth(self, m: int) -> None:
        if m <= self._depth:
            return
        depth = max(m, 2 * self._depth)
        path = iterate_path(self.gamma, np.eye(2 * self.gamma.n), depth)
        _, crossings = crossing_sum(path, np.eye(2 * self.gamma.n, dtype=complex),
                                    tol=self.tol)
        self._depth = depth
        self._crossings = crossings

    def iterate_index(self, m: int) -> int:
        """i at the unit parameter of the m-fold iterate, by prefix counting."""
        if m < 1:
            raise ValueError("iteration count must be >= 1")
        self._ensure_depth(m)
        seg = self.gamma.tau
        cutoff = m * seg - 1e-7 * seg
        return self.gamma.n + sum(mult for s, mult in self._crossings if s < cutoff)

    def iterate_nullity(self, m: int) -> int:
        return nullity_omega(self.monodromy_power(m), 1.0, tol=self.tol)

    def splitting(self):
        return splitting_numbers_perturbative(self.gamma, 1.0, tol=self.tol)

    def mean_index(self) -> float:
        return mean_index_circle_average(self.gamma, tol=self.tol)

    def index_data(self, m_max: int = 12) -> IndexData:
        iterates = {m: (self.iterate_index(m), self.iterate_nullity(m))
                    for m in range(1, m_max + 1)}
        sp, sm = self.splitting()
        mean = self.mean_index()
        half = max(1, m_max // 2)
        est = (iterates[m_max][0] - iterates[half][0]) / (m_max - half) \
            if m_max > half else float(iterates[1][0])
        e = elliptic_height(self.monodromy, tol=self.tol)
        return IndexData(
            n=self.gamma.n,
            i_1=iterates[1][0],
            nu_1=iterates[1][1],
            splitting_plus=sp,
            splitting_minus=sm,
            mean_index=mean,
            iterates=iterates,
            elliptic_height=e,
            hyperbolic=(e == 2),
            mean_index_estimate=est,
            mean_index_flagged=abs(est - mean) > 0.05,
        )


def index_iterates(gamma: SymplecticPath, m_max: int = 12,
                   tol: Tolerances = DEFAULT) -> IndexData:
    """Indices, nullities, splitting numbers and mean index up to m_max."""
    return ConvexIndexEngine(gamma, tol=tol).index_data(m_max)
