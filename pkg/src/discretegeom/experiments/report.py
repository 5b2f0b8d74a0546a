"""Experiment reports: per-seed metrics, aggregates, gates and provenance."""

from __future__ import annotations

import csv
import json
import math
import operator
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import ExperimentConfig

_OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt}


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class Gate:
    name: str
    value: float
    op: str
    threshold: float
    passed: bool

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.value:.6g} {self.op} {self.threshold:.6g}"


@dataclass
class ExperimentReport:
    experiment: str
    config_hash: str
    per_seed: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    gates: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    version: str = field(default_factory=code_version)

    @classmethod
    def for_config(cls, cfg: ExperimentConfig) -> "ExperimentReport":
        return cls(cfg.name, cfg.config_hash())

    @property
    def passed(self) -> bool:
        return bool(self.gates) and all(g.passed for g in self.gates)

    @property
    def completed_seeds(self) -> list:
        return [r["seed"] for r in self.per_seed]

    def add_seed(self, seed: int, metrics: dict) -> None:
        self.per_seed.append({"seed": int(seed), **{k: _plain(v) for k, v in metrics.items()}})

    def add_failure(self, seed: int, error: Exception) -> None:
        self.failures.append({"seed": int(seed), "error": f"{type(error).__name__}: {error}"})

    def values(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.per_seed if r.get(key) is not None], dtype=float)

    def gate(self, name: str, value, op: str, threshold: float) -> Gate:
        """Record a threshold check. A missing or NaN value fails the gate."""
        value = float("nan") if value is None else float(value)
        ok = math.isfinite(value) and _OPS[op](value, threshold)
        g = Gate(name, value, op, float(threshold), bool(ok))
        self.gates.append(g)
        return g

    def aggregates(self) -> dict:
        """mean / std / median of every numeric per-seed metric over completed seeds."""
        keys = []
        for r in self.per_seed:
            keys += [k for k, v in r.items() if k != "seed" and isinstance(v, (int, float))
                     and not isinstance(v, bool) and k not in keys]
        out = {}
        for k in keys:
            v = self.values(k)
            v = v[np.isfinite(v)]
            if v.size:
                out[k] = {"mean": float(v.mean()), "std": float(v.std()),
                          "median": float(np.median(v)), "n": int(v.size)}
        return out

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "passed": self.passed,
            "gates": [_plain(g.__dict__) for g in self.gates],
            "summary": _plain(self.summary),
            "aggregate": self.aggregates(),
            "per_seed": self.per_seed,
            "failures": self.failures,
            "artifacts": sorted(self.artifacts),
            "provenance": {"config_hash": self.config_hash, "code_version": self.version},
        }

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "report.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1, allow_nan=False) + "\n")
        return path


def _plain(v):
    """numpy scalars and arrays to JSON-friendly python values."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    return v


def write_table(path, header, rows) -> Path:
    """Plain CSV with floats at 9 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.9g}"
