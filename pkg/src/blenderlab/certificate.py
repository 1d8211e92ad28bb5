"""Certificates, run configuration and deterministic JSON output."""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .cpoly import DEFAULT_DEGREE_CAP, DEFAULT_SEED

TOOL_VERSION = f"blenderlab {__version__}"
DEFAULT_MARGIN_FLOOR = 1e-3


def _clean(obj):
    """Convert numpy / complex values into plain JSON-ready structures."""
    if isinstance(obj, Certificate):
        return obj.to_json()
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(obj.real)), _clean(float(obj.imag))]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return x
    return obj


def point_coords(x) -> list:
    """A worst point as a flat list of [re, im] pairs."""
    if x is None:
        return []
    return [[float(np.real(v)), float(np.imag(v))] for v in np.atleast_1d(np.asarray(x, dtype=complex))]


@dataclass
class Certificate:
    """Outcome of one sampled verification.

    ``passed`` serializes as ``"pass"``. A pass requires the worst margin to
    reach the floor; composite certificates pass iff all their parts pass.
    """

    check_name: str
    passed: bool
    worst_margin: float
    worst_point: list = field(default_factory=list)
    samples: int = 0
    params: dict = field(default_factory=dict)
    sub_certificates: list = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    seed: int = DEFAULT_SEED

    @classmethod
    def from_margins(cls, name: str, margins, points, floor: float = DEFAULT_MARGIN_FLOOR,
                     params: dict | None = None, seed: int = DEFAULT_SEED) -> "Certificate":
        margins = np.asarray(margins, dtype=float).ravel()
        if margins.size == 0:
            return cls(name, False, float("-inf"), [], 0, dict(params or {}), seed=seed)
        safe = np.where(np.isnan(margins), -np.inf, margins)
        k = int(np.argmin(safe))
        pts = np.asarray(points)
        worst = pts[k] if pts.ndim >= 1 and len(pts) == margins.size else None
        m = float(safe[k])
        p = dict(params or {})
        p.setdefault("margin_floor", floor)
        return cls(name, bool(m >= floor), m, point_coords(worst), int(margins.size), p, seed=seed)

    @classmethod
    def combine(cls, name: str, subs: Sequence["Certificate"], params: dict | None = None,
                seed: int = DEFAULT_SEED) -> "Certificate":
        subs = list(subs)
        if not subs:
            return cls(name, False, float("-inf"), [], 0, dict(params or {}), [], seed=seed)
        worst = min(subs, key=lambda c: (c.worst_margin if c.worst_margin is not None else -np.inf))
        return cls(
            name,
            all(c.passed for c in subs),
            worst.worst_margin,
            list(worst.worst_point),
            sum(c.samples for c in subs),
            dict(params or {}),
            subs,
            seed=seed,
        )

    def find(self, name: str) -> "Certificate | None":
        if self.check_name == name:
            return self
        for s in self.sub_certificates:
            hit = s.find(name)
            if hit is not None:
                return hit
        return None

    def failing(self) -> list:
        """Names of the leaf checks that failed."""
        if not self.sub_certificates:
            return [] if self.passed else [self.check_name]
        out = []
        for s in self.sub_certificates:
            out.extend(s.failing())
        return out

    def to_json(self) -> dict:
        return {
            "check_name": self.check_name,
            "pass": bool(self.passed),
            "worst_margin": _clean(self.worst_margin),
            "worst_point": _clean(self.worst_point),
            "samples": int(self.samples),
            "params": _clean(self.params),
            "sub_certificates": [s.to_json() for s in self.sub_certificates],
            "tool_version": self.tool_version,
            "seed": int(self.seed),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Certificate":
        wm = data.get("worst_margin")
        return cls(
            data["check_name"],
            bool(data["pass"]),
            float("-inf") if wm is None else float(wm),
            data.get("worst_point", []),
            int(data.get("samples", 0)),
            data.get("params", {}),
            [cls.from_json(s) for s in data.get("sub_certificates", [])],
            data.get("tool_version", TOOL_VERSION),
            int(data.get("seed", DEFAULT_SEED)),
        )

    def dumps(self) -> str:
        return dumps(self.to_json())

    def summary(self, indent: int = 0) -> str:
        pad = "  " * indent
        wm = "n/a" if self.worst_margin is None else f"{self.worst_margin:.6g}"
        lines = [f"{pad}{'PASS' if self.passed else 'FAIL'} {self.check_name} (worst margin {wm}, {self.samples} samples)"]
        for s in self.sub_certificates:
            lines.append(s.summary(indent + 1))
        return "\n".join(lines)


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_atomic(path, data: str | bytes) -> Path:
    """Write to a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_schema() -> dict:
    text = resources.files("blenderlab").joinpath("schema/certificate.v1.json").read_text()
    return json.loads(text)


def validate(cert_json: dict) -> None:
    """Validate a serialized certificate against the shipped schema (raises on mismatch)."""
    import jsonschema

    jsonschema.validate(cert_json, load_schema())


def worker_count() -> int:
    env = os.environ.get("BLENDERLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


@dataclass
class RunConfig:
    margin_floor: float = DEFAULT_MARGIN_FLOOR
    grid_n: int = 256
    seed: int = DEFAULT_SEED
    degree_cap: int = DEFAULT_DEGREE_CAP
    out_dir: str = "out"

    def __post_init__(self):
        if not (self.margin_floor > 0 and self.grid_n > 0 and self.degree_cap > 0):
            raise ValueError("RunConfig values must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        return cls(**data)
