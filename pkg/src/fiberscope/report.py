"""Versioned JSON run reports and CSV tables.

Reports are deterministic given the same inputs: keys are sorted, floats
are written by ``repr`` and non-finite values become strings. Wall-clock
timings live under ``timing``, which ``deterministic_view`` strips.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .scalar_expr import MapSpec

SCHEMA_VERSION = "1.0"

VERDICTS = [
    "pass",
    "fail",
    "witness found",
    "no witness at scale",
    "connected",
    "disconnected",
    "inconclusive",
    "ambiguous",
    "consistent with injectivity",
    "completed",
]

REPORT_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fiberscope run report",
    "type": "object",
    "required": ["schema_version", "tool", "command", "subcommand", "map", "settings", "checks", "exit_code",
                 "environment", "timing"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "tool": {
            "type": "object",
            "required": ["name", "version"],
            "properties": {"name": {"const": "fiberscope"}, "version": {"type": "string"}},
        },
        "command": {"type": "array", "items": {"type": "string"}},
        "subcommand": {"type": "string"},
        "map": {
            "type": ["object", "null"],
            "required": ["name", "n", "semialgebraic", "sha256", "text", "params"],
            "properties": {
                "name": {"type": "string"},
                "n": {"type": "integer", "minimum": 1},
                "semialgebraic": {"type": "boolean"},
                "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                "text": {"type": "string"},
                "params": {
                    "type": ["object", "null"],
                    "additionalProperties": {"type": "string", "pattern": "^-?[0-9]+/[0-9]+$"},
                },
            },
        },
        "settings": {"type": "object"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "verdict", "witnesses", "tolerances", "data"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "verdict": {"enum": VERDICTS},
                    "witnesses": {"type": "array"},
                    "tolerances": {"type": "object"},
                    "data": {"type": "object"},
                },
            },
        },
        "exit_code": {"enum": [0, 1, 2]},
        "environment": {
            "type": "object",
            "required": ["python", "numpy", "scipy", "platform"],
        },
        "timing": {
            "type": "object",
            "required": ["total_seconds", "checks"],
            "properties": {
                "total_seconds": {"type": "number", "minimum": 0},
                "checks": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
            },
        },
    },
}


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types: rationals as "p/q", arrays as lists, non-finite
    floats as strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return str(obj)


def map_fingerprint(fmap: MapSpec, params: dict | None = None) -> dict:
    text = fmap.to_text()
    blob = text + json.dumps(params or {}, sort_keys=True)
    return {
        "name": fmap.name or "map",
        "n": fmap.n,
        "semialgebraic": fmap.semialgebraic,
        "sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "text": text,
        "params": params,
    }


def environment() -> dict:
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": sys.platform,
    }


@dataclass
class CheckRecord:
    name: str
    verdict: str
    witnesses: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "witnesses": to_jsonable(self.witnesses),
            "tolerances": to_jsonable(self.tolerances),
            "data": to_jsonable(self.data),
        }


@dataclass
class RunReport:
    command: list[str]
    subcommand: str
    map: dict | None
    settings: dict
    checks: list[CheckRecord] = field(default_factory=list)
    exit_code: int = 0
    total_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool": {"name": "fiberscope", "version": __version__},
            "command": list(self.command),
            "subcommand": self.subcommand,
            "map": to_jsonable(self.map),
            "settings": to_jsonable(self.settings),
            "checks": [c.to_dict() for c in self.checks],
            "exit_code": self.exit_code,
            "environment": environment(),
            "timing": {
                "total_seconds": float(self.total_seconds),
                "checks": {c.name: float(c.wall_time) for c in self.checks},
            },
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def deterministic_view(doc: dict) -> dict:
    """The report without the fields exempt from reproducibility."""
    return {k: v for k, v in doc.items() if k != "timing"}


def emit_report(report: RunReport | dict, path: str | Path) -> Path:
    doc = report.to_dict() if isinstance(report, RunReport) else report
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps(doc))
    return p


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return p


def trace_table(tr, fmap: MapSpec, X) -> tuple[list[str], np.ndarray]:
    """Plot-ready columns t, x1..xn, |field|, f_1..f_n for one orbit."""
    from .scalar_expr import compile_exprs

    t, Y = tr.samples()
    n = fmap.n
    speed = np.linalg.norm(X.at_points(Y), axis=1)
    vals = compile_exprs(fmap.components, n).at_points(Y)
    header = ["t"] + [f"x{k}" for k in range(1, n + 1)] + ["|field|"] + [f"f_{k}" for k in range(1, n + 1)]
    return header, np.column_stack([t, Y, speed, vals])
