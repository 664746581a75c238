"""Numerical tolerances used across the package.

All thresholds live here so that every rank decision, clustering radius and
convergence target is visible and overridable in one place.
"""
from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    # linear algebra
    sp_defect_rel: float = 1e-10     # symplectic defect, relative to 1 + |M|
    rank_rel: float = 1e-8           # singular values below rank_rel * max(1, |M|) count as zero
    circle: float = 1e-7             # |  |lambda| - 1  | below this -> on the unit circle
    circle_band: float = 2.0         # ambiguity band multiplier for elliptic height
    cluster: float = 1e-7            # eigenvalue clustering radius

    # cyclic normal form
    normal_form: float = 1e-9        # reconstruction defect bound
    angle: float = 1e-8              # angle equality mod 2 pi

    # crossing detection (all relative to the path's segment span)
    crossing_bracket_rel: float = 1e-8   # bisection bracket floor
    crossing_boundary_rel: float = 1e-10  # crossings closer to an endpoint are the endpoint
    crossing_merge_rel: float = 1e-9     # identical-crossing merge radius
    crossing_separate_rel: float = 3e-8  # distinct crossings closer than this are an error

    # integrator
    ode_rtol: float = 1e-12
    ode_atol: float = 1e-14
    path_defect: float = 1e-9        # symplectic defect bound along integrated paths

    # orbit solver
    grad: float = 1e-9               # dual-action gradient norm at critical points
    orbit: float = 1e-8              # orbit residual / closure / energy constancy
    period_detect: float = 1e-6      # minimal-period autocorrelation threshold (x diameter)

    # census geometry (both relative to the model diameter)
    distinct_rel: float = 1e-4
    match_rel: float = 1e-6

    def with_(self, **kw) -> "Tolerances":
        return replace(self, **kw)


DEFAULT = Tolerances()

SWEEP_EPSILONS = (1e-2, 1e-3, 1e-4)
