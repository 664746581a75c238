"""Orbit census: geometric distinctness and the cyclic-symmetry partition.

Orbits are compared as traces (point sets), never as parametrized curves.  A
census is closed under the symmetry as a set of traces; each orbit is either
symmetric (its trace is carried to itself, with a detected shift exponent) or
grouped with its distinct symmetry images into pairs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .config import DEFAULT, Tolerances
from .cyclic import CyclicSymmetry
from .orbits import ClosedCharacteristic

__all__ = [
    "CensusError",
    "trace_hausdorff",
    "geometrically_distinct",
    "p_image",
    "detect_p_cyclic",
    "build_census",
    "OrbitCensus",
]


class CensusError(RuntimeError):
    pass


def _point_to_curve(p: np.ndarray, orbit: ClosedCharacteristic, t0: float,
                    dt: float) -> float:
    res = minimize_scalar(lambda t: float(np.linalg.norm(p - orbit.y(t))),
                          bounds=(t0 - dt, t0 + dt), method="bounded",
                          options={"xatol": 1e-12 * orbit.tau})
    return float(res.fun)


def _segment_distance(P: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Distance from each point P[i] to the segment A[i]B[i]."""
    AB = B - A
    denom = np.einsum("ij,ij->i", AB, AB)
    t = np.einsum("ij,ij->i", P - A, AB) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = A + t[:, None] * AB
    return np.linalg.norm(P - proj, axis=1)


def _directed(a: ClosedCharacteristic, b: ClosedCharacteristic,
              refine: bool) -> float:
    """sup over the trace of a of the distance to the trace of b.

    The coarse version measures against the closed polyline through b's
    samples (removing the sampling-phase bias); ``refine`` projects each point
    onto the exact curve through the evaluator.
    """
    tree = cKDTree(b.samples)
    dist, idx = tree.query(a.samples)
    k = len(b.samples)
    prev = (idx - 1) % k
    nxt = (idx + 1) % k
    d_seg = np.minimum(
        _segment_distance(a.samples, b.samples[prev], b.samples[idx]),
        _segment_distance(a.samples, b.samples[idx], b.samples[nxt]))
    if not refine:
        return float(d_seg.max())
    dt = 1.5 * b.tau / k
    worst = 0.0
    for p, i in zip(a.samples, idx):
        t0 = b.tau * i / k
        worst = max(worst, _point_to_curve(p, b, t0, dt))
    return worst


def trace_hausdorff(a: ClosedCharacteristic, b: ClosedCharacteristic,
                    refine: bool = False) -> float:
    """Symmetric Hausdorff distance between orbit traces.

    With ``refine`` each sample is projected onto the other curve through its
    evaluator, removing the sampling-gap bias; use it for tight assertions.
    """
    return max(_directed(a, b, refine), _directed(b, a, refine))


def geometrically_distinct(a: ClosedCharacteristic, b: ClosedCharacteristic,
                           tol: Tolerances = DEFAULT) -> bool:
    """True iff the traces differ by more than tol.distinct_rel x diameter."""
    diam = a.model.diameter()
    return trace_hausdorff(a, b, refine=False) > tol.distinct_rel * diam


def p_image(orbit: ClosedCharacteristic, P: np.ndarray,
            label: str = "") -> ClosedCharacteristic:
    """The orbit mapped by the symmetry; the period is preserved exactly.

    The flow defect of the image equals the original plus the equivariance
    defect of the Hamiltonian gradient, which is re-certified here.
    """
    model = orbit.model
    out = orbit.transformed(P, label=label or f"P.{orbit.label}")
    J = np.zeros((2 * model.n, 2 * model.n))
    J[:model.n, model.n:] = -np.eye(model.n)
    J[model.n:, :model.n] = np.eye(model.n)
    g = model.ham_grad(orbit.samples)
    equiv = np.max(np.linalg.norm((g @ P.T - model.ham_grad(orbit.samples @ P.T)) @ J.T,
                                  axis=1))
    new_res = orbit.residual + float(equiv)
    if new_res > 2.0 * max(orbit.residual, 1e-12):
        raise CensusError(
            f"symmetry image degrades the residual to {new_res:.2e}")
    out.residual = new_res
    return out


def detect_p_cyclic(orbit: ClosedCharacteristic, sym: CyclicSymmetry,
                    tol: Tolerances = DEFAULT):
    """Shift exponent l with y(t + tau/k) = P^l y(t), or None if asymmetric.

    The first-return time s of the trace to P y(0) must be j tau / k with j
    coprime to k; violations of either structure are hard errors since they
    contradict the symmetry dichotomy.
    """
    k = sym.order_k
    P = sym.P.array
    target = P @ orbit.y(0.0)
    diam = orbit.model.diameter()
    match_tol = tol.match_rel * diam

    grid = np.linspace(0.0, orbit.tau, 4 * len(orbit.samples), endpoint=False)
    dists = np.linalg.norm(np.stack([orbit.y(t) for t in grid]) - target, axis=1)
    i0 = int(np.argmin(dists))
    dt = orbit.tau / len(grid)
    res = minimize_scalar(lambda t: float(np.linalg.norm(orbit.y(t) - target)),
                          bounds=(grid[i0] - dt, grid[i0] + dt), method="bounded",
                          options={"xatol": 1e-13 * orbit.tau})
    s, d = float(res.x) % orbit.tau, float(res.fun)
    if d > match_tol:
        return None
    j = int(round(s * k / orbit.tau)) % k
    if abs(s - j * orbit.tau / k) > 1e-5 * orbit.tau:
        raise CensusError(
            f"return time {s:.9f} is not a multiple of tau/{k}; census inconsistent")
    if j == 0 or gcd(j, k) != 1:
        raise CensusError(
            f"return step {j} is not coprime to {k}; symmetry dichotomy violated")
    l = pow(j, -1, k)
    shift = orbit.tau / k
    Pl = sym.power(l)
    worst = 0.0
    for t in np.linspace(0.0, orbit.tau, 64, endpoint=False):
        worst = max(worst, float(np.linalg.norm(orbit.y(t + shift) - Pl @ orbit.y(t))))
    if worst > 10 * match_tol:
        raise CensusError(f"shift identity fails by {worst:.2e} on the grid")
    return int(l)


@dataclass
class OrbitCensus:
    """Distinct closed characteristics with their symmetry bookkeeping.

    ``symmetric`` maps orbit index -> shift exponent l; ``asym_pairs`` lists
    index pairs (i, P i).  For k >= 3 the pair leaders are refined again under
    P^2 into s3 (P^2-symmetric) and s4 (paired with their P^2 image).
    """

    orbits: list
    symmetric: dict
    asym_pairs: list
    s1: int
    s2: int
    s3: int | None
    s4: int | None
    sym: CyclicSymmetry

    @property
    def S(self) -> int:
        return self.s1 + 2 * self.s2

    def to_json(self) -> dict:
        per_orbit = []
        for i, orb in enumerate(self.orbits):
            rec = orb.to_json()
            rec["p_cyclic"] = self.symmetric.get(i)
            per_orbit.append(rec)
        return {
            "orbits": per_orbit,
            "s1": self.s1, "s2": self.s2,
            "s3": self.s3, "s4": self.s4,
            "S": self.S,
        }


def _trace_key(orbit: ClosedCharacteristic):
    pts = np.round(orbit.samples, 6)
    best = min(map(tuple, pts))
    return (round(orbit.tau, 9), best)


def _find_match(orbit, pool, tol):
    for i, other in enumerate(pool):
        if abs(orbit.tau - other.tau) > 1e-6 * max(orbit.tau, other.tau):
            continue
        if not geometrically_distinct(orbit, other, tol):
            return i
    return None


def build_census(orbits, sym: CyclicSymmetry, tol: Tolerances = DEFAULT) -> OrbitCensus:
    """Dedupe, close under the symmetry, and partition a raw orbit list."""
    P = sym.P.array
    distinct: list[ClosedCharacteristic] = []
    for orb in sorted(orbits, key=_trace_key):
        if _find_match(orb, distinct, tol) is None:
            distinct.append(orb)

    symmetric: dict = {}
    asym: list[int] = []
    for i, orb in enumerate(distinct):
        l = detect_p_cyclic(orb, sym, tol)
        if l is None:
            asym.append(i)
        else:
            symmetric[i] = l

    # close the asymmetric part under P, appending analytic images when missing
    i_ptr = 0
    while i_ptr < len(asym):
        orb = distinct[asym[i_ptr]]
        img = p_image(orb, P)
        if _find_match(img, distinct, tol) is None:
            distinct.append(img)
            asym.append(len(distinct) - 1)
        i_ptr += 1

    # pair each asymmetric orbit with its P image
    pairs = []
    used = set()
    for i in asym:
        if i in used:
            continue
        img = p_image(distinct[i], P)
        j = _find_match(img, [distinct[a] for a in asym], tol)
        if j is None:
            raise CensusError("P image of an asymmetric orbit is missing from the census")
        j = asym[j]
        if j == i:
            raise CensusError("orbit matches its own P image but was classified asymmetric")
        if j in used:
            raise CensusError("asymmetric orbit class of odd size cannot be paired")
        used.update((i, j))
        pairs.append((i, j))

    s1, s2 = len(symmetric), len(pairs)
    s3 = s4 = None
    if sym.order_k >= 3:
        P2 = P @ P
        s3, s4 = 0, 0
        seen = set()
        for q, (i, _) in enumerate(pairs):
            if q in seen:
                continue
            img2 = distinct[i].transformed(P2)
            if not geometrically_distinct(distinct[i], img2, tol):
                s3 += 1
                seen.add(q)
                continue
            partner_pair = None
            for q2, (i2, j2) in enumerate(pairs):
                if q2 in (q,) or q2 in seen:
                    continue
                if not geometrically_distinct(distinct[i2], img2, tol) or \
                        not geometrically_distinct(distinct[j2], img2, tol):
                    partner_pair = q2
                    break
            if partner_pair is None:
                raise CensusError("P^2 image of a pair leader is missing from the census")
            seen.update((q, partner_pair))
            s4 += 1

    order = sorted(range(len(distinct)), key=lambda i: _trace_key(distinct[i]))
    remap = {old: new for new, old in enumerate(order)}
    census = OrbitCensus(
        orbits=[distinct[i] for i in order],
        symmetric={remap[i]: l for i, l in symmetric.items()},
        asym_pairs=[(remap[i], remap[j]) for i, j in pairs],
        s1=s1, s2=s2, s3=s3, s4=s4, sym=sym)
    return census
