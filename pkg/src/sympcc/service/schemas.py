"""Request/response models for the HTTP service (and the CLI wire format)."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field, field_validator


class MatrixModel(BaseModel):
    n: int = Field(ge=1)
    rows: list[list[float]]

    @field_validator("rows")
    @classmethod
    def _square(cls, rows, info):
        n = info.data.get("n")
        if n is not None and (len(rows) != 2 * n or any(len(r) != 2 * n for r in rows)):
            raise ValueError("rows must form a 2n x 2n matrix")
        return rows


class SymmetrySpec(BaseModel):
    type: str = "rotation"  # "rotation" | "matrix"
    k: int = Field(ge=2)
    matrix: Optional[MatrixModel] = None

    @field_validator("type")
    @classmethod
    def _known(cls, v):
        if v not in ("rotation", "matrix"):
            raise ValueError("symmetry type must be 'rotation' or 'matrix'")
        return v


class ModelSpec(BaseModel):
    kind: str  # "ellipsoid" | "perturbed_ellipsoid"
    radii_sq: list[float]
    alpha: float = 1.5
    symmetry: SymmetrySpec
    epsilon: Optional[float] = None
    harmonic: Optional[int] = None

    def to_config(self) -> dict:
        out = {"kind": self.kind, "radii_sq": self.radii_sq, "alpha": self.alpha,
               "symmetry": self.symmetry.model_dump(exclude_none=True)}
        if self.epsilon is not None:
            out["epsilon"] = self.epsilon
        if self.harmonic is not None:
            out["harmonic"] = self.harmonic
        return out


class ScenarioRequest(BaseModel):
    model: ModelSpec
    starts: int = 20
    seed: int = 42
    n_fourier: int = 64
    m_max: int = 12
    T_max: int = 200
    checks: Optional[list[str]] = None


class FindOrbitsRequest(BaseModel):
    model: ModelSpec
    starts: int = 20
    seed: int = 42
    n_fourier: int = 64


class PathSample(BaseModel):
    t: float
    matrix: MatrixModel


class PathPayload(BaseModel):
    tau: float = Field(gt=0)
    convex_certified: bool = True
    samples: list[PathSample]


class IndexRequest(BaseModel):
    path: PathPayload
    omega: str = "1"
    m_max: int = 12
    symmetry: Optional[SymmetrySpec] = None


class HealthResponse(BaseModel):
    status: str
    version: str
