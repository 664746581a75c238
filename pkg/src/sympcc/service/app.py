"""FastAPI service exposing the scenario runner, orbit finder and index engine.

Handlers are thin: they translate pydantic payloads into core calls and wrap
the JSON-ready results.  Everything is synchronous and stateless, so the app
scales with workers and the CLI can drive the same handlers in-process.
"""
from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..census import build_census
from ..cyclic import rotation_symmetry, symmetry_from_matrix
from ..indices import ConvexIndexEngine, omega_index_convex, p_omega_index_convex
from ..models import model_from_json
from ..paths import SampledPath
from ..solver import SolverOptions, find_orbits
from ..verify import ScenarioConfig, run_scenario
from .schemas import (FindOrbitsRequest, HealthResponse, IndexRequest,
                      ScenarioRequest)

app = FastAPI(title="sympcc", version=__version__)


def _sym_from_spec(spec, n: int):
    if spec is None:
        return None
    if spec.type == "rotation":
        return rotation_symmetry(n, spec.k)
    return symmetry_from_matrix(np.asarray(spec.matrix.rows, dtype=float), spec.k)


def parse_omega(text: str) -> complex:
    """Accept '1', '-1', 'a+bi' / 'a-bi' forms."""
    t = text.strip().replace(" ", "").replace("i", "j")
    try:
        w = complex(t)
    except ValueError as exc:
        raise ValueError(f"cannot parse omega {text!r}") from exc
    if abs(abs(w) - 1.0) > 1e-9:
        raise ValueError(f"omega must lie on the unit circle, got |omega|={abs(w)}")
    return w / abs(w)


def compute_index_record(req: IndexRequest) -> dict:
    path = SampledPath.from_json(req.path.model_dump())
    omega = parse_omega(req.omega)
    sym = _sym_from_spec(req.symmetry, path.n)
    record: dict = {"tau": path.tau, "n": path.n, "omega": [omega.real, omega.imag]}
    if sym is not None:
        record["p_omega_index"] = p_omega_index_convex(path, sym.P.array, omega)
        record["symmetry_k"] = sym.order_k
    record["omega_index"] = omega_index_convex(path, omega)
    if abs(omega - 1.0) < 1e-12:
        eng = ConvexIndexEngine(path)
        record["index_data"] = eng.index_data(req.m_max).to_json()
    return record


def run_scenario_request(req: ScenarioRequest):
    cfg = ScenarioConfig(
        model=req.model.to_config(), starts=req.starts, seed=req.seed,
        n_fourier=req.n_fourier, m_max=req.m_max, T_max=req.T_max,
        checks=tuple(req.checks) if req.checks else ScenarioConfig.__dataclass_fields__["checks"].default)
    return run_scenario(cfg)


def run_find_orbits(req: FindOrbitsRequest) -> dict:
    model = model_from_json(req.model.to_config())
    orbits = find_orbits(model, starts=req.starts, seed=req.seed,
                         opts=SolverOptions(n_fourier=req.n_fourier))
    census = build_census(orbits, model.symmetry)
    return census.to_json()


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/index")
def index_endpoint(req: IndexRequest) -> dict:
    try:
        return compute_index_record(req)
    except (ValueError, RuntimeError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.post("/find-orbits")
def find_orbits_endpoint(req: FindOrbitsRequest) -> dict:
    try:
        return run_find_orbits(req)
    except (ValueError, RuntimeError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.post("/verify")
def verify_endpoint(req: ScenarioRequest) -> dict:
    try:
        report = run_scenario_request(req)
    except (ValueError, RuntimeError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return report.payload(with_timing=True)
