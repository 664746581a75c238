"""Closed characteristic records shared by the model and solver layers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["ClosedCharacteristic", "TRACE_SAMPLES"]

TRACE_SAMPLES = 480  # divisible by 2..6 and 8, so symmetry shifts land on grid


@dataclass
class ClosedCharacteristic:
    """A periodic solution (tau, y) of the energy-one Hamiltonian flow.

    ``evaluator`` returns y(t) for arbitrary t (tau-periodic); ``samples`` is
    a uniform grid of TRACE_SAMPLES points used for geometry.  ``residual`` is
    the max pointwise defect of y' = J grad H(y), ``closure_defect`` the gap
    |y(tau) - y(0)| of an independent re-integration.
    """

    tau: float
    samples: np.ndarray
    model: object
    residual: float
    closure_defect: float
    multiplicity_m: int = 1
    evaluator: Optional[Callable[[float], np.ndarray]] = None
    action_value: float = 0.0
    label: str = ""

    def y(self, t: float) -> np.ndarray:
        if self.evaluator is not None:
            return self.evaluator(float(t) % self.tau)
        k = len(self.samples)
        s = (float(t) % self.tau) / self.tau * k
        i = int(s) % k
        frac = s - int(s)
        return (1 - frac) * self.samples[i] + frac * self.samples[(i + 1) % k]

    @property
    def trace(self) -> np.ndarray:
        return self.samples

    def transformed(self, A: np.ndarray, label: str = "") -> "ClosedCharacteristic":
        """The orbit with every point mapped by the linear map A."""
        ev = None
        if self.evaluator is not None:
            base = self.evaluator
            ev = lambda t, A=A: A @ base(t)
        return ClosedCharacteristic(
            tau=self.tau,
            samples=self.samples @ A.T,
            model=self.model,
            residual=self.residual,
            closure_defect=self.closure_defect,
            multiplicity_m=self.multiplicity_m,
            evaluator=ev,
            action_value=self.action_value,
            label=label or self.label,
        )

    def to_json(self, max_samples: int = 120) -> dict:
        step = max(1, len(self.samples) // max_samples)
        return {
            "tau": float(self.tau),
            "multiplicity": int(self.multiplicity_m),
            "residual": float(self.residual),
            "closure_defect": float(self.closure_defect),
            "action": float(self.action_value),
            "samples": self.samples[::step].tolist(),
        }
