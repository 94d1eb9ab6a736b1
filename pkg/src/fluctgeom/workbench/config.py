"""Run configuration: a YAML document with nested sections.

Example::

    family:
      id: axial-2d
      options: {}
    theta: [3, 5, 10, 20, 30]
    seeds: [20240611]
    samples: [100000]
    output: {dir: out}
    tolerances: {gate: 1.0e-5}

A family can also be written out with field expressions::

    family:
      id: custom
      options:
        dim: 1
        log_density: "-0.5*x1^2 - 0.5*log(2*pi)"
        metric: [["1"]]          # or "solve-1d"
        lower: [-.inf]
        upper: [.inf]
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from ..charts import ControlParams, DensityFamily, Support
from ..errors import ConfigError
from ..fieldexpr import FluctGeomError, parse_field
from ..gaussrep import find_mode
from ..geometry import MetricField, solve_metric_1d
from .catalog import FAMILY_IDS, ChartModel, FamilySpec, builtin_family

DEFAULT_TOLERANCES = {"gate": 1e-5, "z_fail": 3.0, "quadrature_rel": 1e-6}


@dataclass
class RunConfig:
    family: str = "axial-2d"
    family_options: Dict[str, Any] = field(default_factory=dict)
    theta: List[float] = field(default_factory=lambda: [10.0])
    seeds: List[int] = field(default_factory=lambda: [20240611])
    samples: List[int] = field(default_factory=lambda: [100_000])
    out_dir: str = "out"
    k: float = 1.0
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    resolution: int = 200

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.theta:
            raise ConfigError("theta grid is empty")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if not self.samples or any(int(s) <= 0 for s in self.samples):
            raise ConfigError("sample sizes must be positive")
        if not all(np.isfinite(t) for t in self.theta):
            raise ConfigError("theta values must be finite")
        if not self.k > 0:
            raise ConfigError("k must be positive")
        if self.family not in FAMILY_IDS and self.family != "custom":
            raise ConfigError(f"unknown family {self.family!r}")
        if int(self.resolution) < 2:
            raise ConfigError("resolution must be at least 2")

    def tolerance(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def check_writable(self) -> None:
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {self.out_dir!r} is not writable: {exc}") from None
        if not os.access(self.out_dir, os.W_OK):
            raise ConfigError(f"output directory {self.out_dir!r} is not writable")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {
            "family": {"id": d["family"], "options": d["family_options"]},
            "theta": [float(t) for t in d["theta"]],
            "seeds": [int(s) for s in d["seeds"]],
            "samples": [int(s) for s in d["samples"]],
            "output": {"dir": d["out_dir"]},
            "k": float(d["k"]),
            "tolerances": {k: float(v) for k, v in d["tolerances"].items()},
            "resolution": int(d["resolution"]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping")
        known = {"family", "theta", "seeds", "samples", "output", "k", "tolerances", "resolution"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        fam = d.get("family", {"id": "axial-2d"})
        if isinstance(fam, str):
            fam = {"id": fam}
        try:
            tol = dict(DEFAULT_TOLERANCES)
            tol.update({k: float(v) for k, v in (d.get("tolerances") or {}).items()})
            return cls(
                family=str(fam.get("id", "axial-2d")),
                family_options=dict(fam.get("options") or {}),
                theta=[float(t) for t in _listify(d.get("theta", [10.0]))],
                seeds=[int(s) for s in _listify(d.get("seeds", [20240611]))],
                samples=[int(s) for s in _listify(d.get("samples", [100_000]))],
                out_dir=str((d.get("output") or {}).get("dir", "out")),
                k=float(d.get("k", 1.0)),
                tolerances=tol,
                resolution=int(d.get("resolution", 200)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed configuration: {exc}") from None

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse configuration: {exc}") from None
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                return cls.loads(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path!r}: {exc}") from None

    def digest(self) -> str:
        """sha256 of the canonical JSON form; the output directory is excluded
        since it does not influence any table content."""
        d = self.to_dict()
        d.pop("output")
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _listify(v):
    return v if isinstance(v, (list, tuple)) else [v]


# ---------------------------------------------------------------------------


def _expr_fn(src: str, dim: int, ntheta: int):
    e = parse_field(str(src), dim, ntheta)

    def f(x, t):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(e(x, t), dtype=float), x.shape[:-1])

    return f


def custom_family(options: dict, theta) -> FamilySpec:
    """FamilySpec from field expressions (density in log form, metric matrix or solve-1d)."""
    try:
        dim = int(options["dim"])
        log_src = options["log_density"]
    except KeyError as exc:
        raise ConfigError(f"custom family needs {exc.args[0]!r}") from None
    theta = ControlParams(theta if theta is not None else options.get("theta", ()))
    lower = [float(v) for v in options.get("lower", [-np.inf] * dim)]
    upper = [float(v) for v in options.get("upper", [np.inf] * dim)]
    support = Support.box(lower, upper) if (np.isfinite(lower).any() or np.isfinite(upper).any()) \
        else Support.whole(dim)
    try:
        log_rho = _expr_fn(log_src, dim, len(theta))
    except FluctGeomError as exc:
        raise ConfigError(f"bad log_density expression: {exc}") from None
    center = options.get("center", [0.0] * dim)
    fam = DensityFamily(dim, log_rho, support, "default", "custom", center=tuple(center),
                        scale=float(options.get("scale", 1.0)))
    metric_src = options.get("metric", "solve-1d" if dim == 1 else None)
    if metric_src == "solve-1d":
        if dim != 1:
            raise ConfigError("solve-1d needs a one-dimensional family")
        lo, hi = options.get("grid", [-20.0, 20.0])
        metric = solve_metric_1d(fam, theta, np.linspace(lo, hi, int(options.get("nodes", 2001)))).metric
    elif isinstance(metric_src, list) and len(metric_src) == dim:
        try:
            cells = [[_expr_fn(c, dim, len(theta)) for c in row] for row in metric_src]
        except FluctGeomError as exc:
            raise ConfigError(f"bad metric expression: {exc}") from None

        def fn(x, t):
            x = np.asarray(x, dtype=float)
            return np.stack([np.stack([c(x, t) for c in row], axis=-1) for row in cells], axis=-2)

        metric = MetricField(dim, fn, provenance="expression", support=support, name="custom")
    else:
        raise ConfigError("custom family needs a metric matrix of expressions or 'solve-1d'")
    if "mode" in options:
        mode = np.asarray(options["mode"], dtype=float)
    else:
        mode = find_mode(fam, metric, theta).x_bar.array
    chart = ChartModel(fam, metric, None, mode)
    return FamilySpec("custom", dim, theta, {"default": chart}, "default",
                      sampler=("inverse-transform", {}) if dim == 1 else None)


def family_from_config(cfg: RunConfig, theta: Optional[float] = None) -> FamilySpec:
    th = cfg.theta[0] if theta is None else theta
    if cfg.family == "custom":
        return custom_family(cfg.family_options, [th] if cfg.family_options.get("uses_theta") else None)
    return builtin_family(cfg.family, th, **cfg.family_options)
