"""Run bookkeeping: per-iteration records shared by all optimizers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    kkt_residual: Optional[float] = None
    feasible: Optional[bool] = None
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)


@dataclass
class RunReport:
    """Objective trace, residuals and timing of one optimization run."""

    stage: str
    status: str = "running"
    iterations: list[IterationRecord] = field(default_factory=list)
    total_time: float = 0.0
    sub_reports: list["RunReport"] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def add(self, objective: float, kkt_residual: Optional[float] = None,
            feasible: Optional[bool] = None, wall_time: float = 0.0,
            **extras) -> None:
        self.iterations.append(IterationRecord(
            iteration=len(self.iterations), objective=float(objective),
            kkt_residual=kkt_residual, feasible=feasible,
            wall_time=wall_time, extras=extras))

    @property
    def objectives(self) -> list[float]:
        return [r.objective for r in self.iterations]

    @property
    def final_objective(self) -> float:
        return self.iterations[-1].objective

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "status": self.status,
            "total_time": self.total_time,
            "iterations": [
                {
                    "iteration": r.iteration,
                    "objective": r.objective,
                    "kkt_residual": r.kkt_residual,
                    "feasible": r.feasible,
                    "wall_time": r.wall_time,
                    **_jsonable(r.extras),
                }
                for r in self.iterations
            ],
            "sub_reports": [s.to_dict() for s in self.sub_reports],
            "extras": _jsonable(self.extras),
        }
