from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples into plain JSON types."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


@dataclass
class CheckReport:
    """Outcome of one numerical check.

    ``passed`` is decided by the check itself from ``measured`` and
    ``tolerance``. ``wall_time`` is informational and excluded from equality
    so repeated runs compare equal.
    """

    name: str
    passed: bool
    measured: Any
    tolerance: Any
    context: dict = field(default_factory=dict)
    message: str = ""
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self, timings: bool = False) -> dict:
        out = {
            "check": self.name,
            "pass": bool(self.passed),
            "measured": jsonable(self.measured),
            "tolerance": jsonable(self.tolerance),
            "context": jsonable(self.context),
            "message": self.message,
        }
        if timings:
            out["wall_time"] = round(float(self.wall_time), 6)
        return out

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: measured={_short(self.measured)} tol={_short(self.tolerance)} {self.message}".rstrip()


def _short(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.3e}"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}={_short(v)}" for k, v in value.items()) + "}"
    return str(jsonable(value))


def dump_reports(reports: list[CheckReport], timings: bool = False) -> str:
    doc = {"schema": "switchld.check_reports/1", "reports": [r.to_dict(timings) for r in reports]}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"
