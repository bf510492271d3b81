"""Scenario configuration files and the end-to-end planning pipeline.

A configuration is a JSON object with the sections below; every field has a
default except ``model``, ``prediction`` and ``risk``::

    {
      "method": "clusters",                  # or "scenario"
      "seed": 0,
      "model": {"kind": "double_integrator", "T": 10, "dt": 0.5, "x0": [...],
                "speed_bound": 15, "accel_bound": 3,
                "position_lo": [...], "position_hi": [...]},
      "objective": {"terms": [{"kind": "linear", "var": "y", "index": 0,
                               "weight": -0.1, "t": 10}]},
      "risk": {"epsilon": 0.05, "beta": 0.001, "allocation": "uniform",
               "weights": null, "rule": "closed_form"},
      "prediction": {"generator": {...} | null, "file": null,
                     "N": "auto", "total": "max"},
      "clustering": {"strategy": "kmeans", "K": [2], "seed": 0,
                     "merge_threshold": null},
      "geometry": {"L_C": 4, "inflation": 0.0, "clearance": 0.0},
      "validation": {"M": 100000},
      "output": {"dir": ".", "prefix": "plan"}
    }

``model.kind = "direct"`` takes ``T``, ``ndim``, ``lo`` and ``hi`` and lets
the planner choose outputs directly. ``prediction.N = "auto"`` draws the
scenario-bound sample count for the scenario method, and for the clusters
method the largest per-cluster count (``total = "max"``) or their sum
(``total = "sum"``). Relative file paths resolve against the config file.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clustering as cl
from . import planner as pl
from . import prediction, sampling_bounds

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "load_config",
    "build_model",
    "build_objective",
    "planning_samples",
    "fresh_samples",
    "cluster_counts",
    "required_samples",
    "run_plan",
]


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


_DEFAULTS = {
    "method": "clusters",
    "seed": 0,
    "objective": {"terms": []},
    "risk": {"allocation": "uniform", "weights": None, "rule": "closed_form"},
    "prediction": {"generator": None, "file": None, "N": "auto", "total": "max"},
    "clustering": {"strategy": "kmeans", "K": None, "seed": 0, "merge_threshold": None},
    "geometry": {"L_C": 4, "inflation": 0.0, "clearance": 0.0},
    "validation": {"M": 100000},
    "output": {"dir": ".", "prefix": "plan"},
}

_MODEL_KEYS = {
    "double_integrator": {"kind", "T", "dt", "x0", "speed_bound", "accel_bound",
                          "position_lo", "position_hi", "ndim"},
    "direct": {"kind", "T", "ndim", "lo", "hi"},
}


def _merge(defaults, given, path):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if k not in defaults:
            raise ConfigError(f"{path}.{k}", "unknown field")
        out[k] = v
    return out


def _num(d, key, path, lo=None, hi=None, integer=False, open_lo=False):
    full = f"{path}.{key}" if path else key
    if key not in d:
        raise ConfigError(full, "missing required field")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(full, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(full, f"expected an integer, got {v!r}")
    if lo is not None and (v < lo or (open_lo and v == lo)):
        raise ConfigError(full, f"must be {'>' if open_lo else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(full, f"must be <= {hi}, got {v}")
    return int(v) if integer else float(v)


@dataclass
class ScenarioConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ScenarioConfig":
        cfg = cls(normalize(raw), Path(base_dir) if base_dir is not None else Path.cwd())
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def __getitem__(self, key):
        return self.data[key]

    @property
    def method(self) -> str:
        return self.data["method"]

    @property
    def risk(self) -> sampling_bounds.RiskSpec:
        r = self.data["risk"]
        return sampling_bounds.RiskSpec(r["epsilon"], r["beta"])

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def generator(self) -> prediction.GeneratorSpec | None:
        g = self.data["prediction"]["generator"]
        return None if g is None else prediction.GeneratorSpec.from_dict(g)

    def with_overrides(self, **sections) -> "ScenarioConfig":
        d = self.to_dict()
        for k, v in sections.items():
            if isinstance(v, dict) and isinstance(d.get(k), dict):
                d[k].update(v)
            else:
                d[k] = v
        return ScenarioConfig.from_dict(d, self.base_dir)

    def validate(self) -> None:
        d = self.data
        if d["method"] not in ("clusters", "scenario"):
            raise ConfigError("method", f"must be 'clusters' or 'scenario', got {d['method']!r}")
        _num(d, "seed", "", lo=0, integer=True)
        m = d["model"]
        if m.get("kind") not in _MODEL_KEYS:
            raise ConfigError("model.kind", f"must be one of {sorted(_MODEL_KEYS)}, got {m.get('kind')!r}")
        extra = set(m) - _MODEL_KEYS[m["kind"]]
        if extra:
            raise ConfigError(f"model.{sorted(extra)[0]}", "unknown field")
        _num(m, "T", "model", lo=1, integer=True)
        if m["kind"] == "double_integrator":
            _num(m, "dt", "model", lo=0, open_lo=True)
            _num(m, "speed_bound", "model", lo=0, open_lo=True)
            _num(m, "accel_bound", "model", lo=0, open_lo=True)
            if "x0" not in m:
                raise ConfigError("model.x0", "missing required field")
        try:
            build_model(self)
        except pl.PlanningError as exc:
            raise ConfigError("model", str(exc)) from exc
        try:
            build_objective(self)
        except (pl.PlanningError, TypeError) as exc:
            raise ConfigError("objective.terms", str(exc)) from exc
        r = d["risk"]
        _num(r, "epsilon", "risk", lo=0, hi=1, open_lo=True)
        _num(r, "beta", "risk", lo=0, hi=1, open_lo=True)
        try:
            self.risk
        except ValueError as exc:
            raise ConfigError("risk", str(exc)) from exc
        if r["allocation"] not in ("uniform", "weighted"):
            raise ConfigError("risk.allocation", f"must be 'uniform' or 'weighted', got {r['allocation']!r}")
        if r["rule"] not in ("closed_form", "exact"):
            raise ConfigError("risk.rule", f"must be 'closed_form' or 'exact', got {r['rule']!r}")
        p = d["prediction"]
        if (p["generator"] is None) == (p["file"] is None):
            raise ConfigError("prediction", "exactly one of 'generator' and 'file' is required")
        if p["generator"] is not None:
            try:
                self.generator()
            except (ValueError, TypeError) as exc:
                raise ConfigError("prediction.generator", str(exc)) from exc
        elif not self.resolve(p["file"]).is_file():
            raise ConfigError("prediction.file", f"file not found: {p['file']}")
        if p["N"] != "auto":
            _num(p, "N", "prediction", lo=1, integer=True)
        elif p["generator"] is None:
            raise ConfigError("prediction.N", "'auto' needs a generator; give an integer for sample files")
        if p["total"] not in ("max", "sum"):
            raise ConfigError("prediction.total", f"must be 'max' or 'sum', got {p['total']!r}")
        c = d["clustering"]
        if c["strategy"] not in ("kmeans", "labels"):
            raise ConfigError("clustering.strategy", f"must be 'kmeans' or 'labels', got {c['strategy']!r}")
        if d["method"] == "clusters" and c["strategy"] == "kmeans" and c["K"] is None:
            raise ConfigError("clustering.K", "k-means needs one cluster count per OV")
        if c["K"] is not None:
            ks = c["K"] if isinstance(c["K"], list) else [c["K"]]
            for i, k in enumerate(ks):
                if isinstance(k, bool) or not isinstance(k, int) or k < 1:
                    raise ConfigError(f"clustering.K[{i}]", f"must be a positive integer, got {k!r}")
        if c["merge_threshold"] is not None:
            _num(c, "merge_threshold", "clustering", lo=0, hi=1)
        g = d["geometry"]
        _num(g, "L_C", "geometry", lo=3, integer=True)
        _num(g, "inflation", "geometry", lo=0)
        _num(g, "clearance", "geometry", lo=0)
        _num(d["validation"], "M", "validation", lo=1, integer=True)


def normalize(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    for key in ("model", "prediction", "risk"):
        if key not in raw:
            raise ConfigError(key, "missing required section")
    top = {k: raw[k] for k in raw}
    for k in top:
        if k not in _DEFAULTS and k != "model":
            raise ConfigError(k, "unknown section")
    out = {"method": top.get("method", _DEFAULTS["method"]), "seed": top.get("seed", _DEFAULTS["seed"])}
    for sec in ("objective", "risk", "prediction", "clustering", "geometry", "validation", "output"):
        given = top.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(sec, "must be an object")
        defaults = dict(_DEFAULTS[sec])
        if sec == "risk":
            defaults.update(epsilon=None, beta=None)
        out[sec] = _merge(defaults, given, sec)
    if not isinstance(top["model"], dict):
        raise ConfigError("model", "must be an object")
    out["model"] = copy.deepcopy(top["model"])
    terms = out["objective"]["terms"]
    try:
        out["objective"] = pl.ObjectiveSpec(terms).to_dict()
    except (pl.PlanningError, TypeError) as exc:
        raise ConfigError("objective.terms", str(exc)) from exc
    if out["prediction"]["generator"] is not None:
        try:
            out["prediction"]["generator"] = prediction.GeneratorSpec.from_dict(
                out["prediction"]["generator"]).to_dict()
        except (ValueError, TypeError) as exc:
            raise ConfigError("prediction.generator", str(exc)) from exc
    return out


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with path.open() as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(str(path), "file not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return ScenarioConfig.from_dict(raw, path.parent)


def build_model(cfg: ScenarioConfig) -> pl.LtvModel:
    m = cfg["model"]
    if m["kind"] == "direct":
        return pl.direct_output(int(m["T"]), int(m.get("ndim", 1)), m["lo"], m["hi"])
    return pl.double_integrator(m["dt"], m["speed_bound"], m["accel_bound"], m["x0"], int(m["T"]),
                                m.get("position_lo"), m.get("position_hi"), int(m.get("ndim", 2)))


def build_objective(cfg: ScenarioConfig) -> pl.ObjectiveSpec:
    return pl.ObjectiveSpec(cfg["objective"]["terms"])


def _retained_mode_probs(cfg: ScenarioConfig, spec: prediction.GeneratorSpec) -> list[list[float]]:
    """Mode probabilities per OV after rare-mode merging (for sizing before any sample exists)."""
    if spec.kind == "uniform-mixture-1d":
        probs = [list(spec.weights)]
    else:
        probs = [list(o.probabilities) for o in spec.ovs]
    thr = cfg["clustering"]["merge_threshold"]
    out = []
    for row in probs:
        row = [p for p in row if p > 0]
        if thr is not None:
            kept = [p for p in row if p >= thr]
            if not kept:
                raise ConfigError("clustering.merge_threshold", "no mode meets the threshold")
            s = sum(kept)
            row = [p / s for p in kept]
        out.append(row)
    return out


def cluster_counts(cfg: ScenarioConfig) -> list[int]:
    """Clusters per OV known before sampling (K for k-means, retained modes for labels)."""
    c = cfg["clustering"]
    if c["strategy"] == "kmeans":
        return c["K"] if isinstance(c["K"], list) else [c["K"]]
    spec = cfg.generator()
    if spec is None:
        raise ConfigError("clustering.K", "label clustering of a sample file needs explicit K for sizing")
    return [len(row) for row in _retained_mode_probs(cfg, spec)]


def _allocation_config(cfg: ScenarioConfig) -> pl.AllocationConfig:
    r = cfg["risk"]
    return pl.AllocationConfig(r["allocation"], r["weights"], r["rule"])


def required_samples(cfg: ScenarioConfig) -> dict:
    """Sample counts implied by the risk section, before any sample is drawn."""
    model = build_model(cfg)
    risk = cfg.risk
    rule = cfg["risk"]["rule"]
    if cfg.method == "scenario":
        spec = cfg.generator()
        O = len(spec.ovs) if spec is not None and spec.kind == "accel-brake-ov" else 1
        L = 2 if model.n_y == 1 else 4
        q = pl.scenario_bound_query(model, O, L, risk)
        return {"N": sampling_bounds.min_samples(q, rule=rule), "n_c": q.n_c, "n_b": q.n_b}
    L_C = 2 if model.n_y == 1 else cfg["geometry"]["L_C"]
    counts = cluster_counts(cfg)
    if cfg["risk"]["allocation"] == "uniform":
        alloc = sampling_bounds.allocate_uniform(risk, counts, L_C, model.T, rule=rule)
    else:
        weights = cfg["risk"]["weights"]
        if weights is None:
            spec = cfg.generator()
            if spec is None:
                raise ConfigError("risk.weights", "weighted allocation of a sample file needs explicit weights")
            weights = sampling_bounds.inverse_probability_weights(_retained_mode_probs(cfg, spec))
        alloc = sampling_bounds.allocate_weighted(risk, weights, L_C, model.T, rule=rule)
    total = alloc.required_total() if cfg["prediction"]["total"] == "max" else alloc.summed_total()
    return {"N": total, "allocation": alloc.to_dict()}


def planning_samples(cfg: ScenarioConfig, run: int = 0) -> prediction.PredictionSet:
    """Planning samples; run ``r`` of a repeated experiment uses its own substream."""
    p = cfg["prediction"]
    if p["file"] is not None:
        ps = prediction.load_samples(cfg.resolve(p["file"]))
        N = ps.N if p["N"] == "auto" else int(p["N"])
        if N > ps.N:
            raise ConfigError("prediction.N", f"file holds {ps.N} samples, {N} requested")
        ps = ps.subset(np.arange(N))
    else:
        spec = cfg.generator()
        spec.seed = cfg["seed"]
        N = required_samples(cfg)["N"] if p["N"] == "auto" else int(p["N"])
        ps = prediction.generate(spec, N, stream=0 if run == 0 else 2 * run)
    thr = cfg["clustering"]["merge_threshold"]
    if thr is not None and ps.labels is not None and ps.mode_probs is not None:
        ps = cl.merge_rare_modes(ps, ps.mode_probs, thr)
    return ps


def fresh_samples(cfg: ScenarioConfig, M: int | None = None) -> prediction.PredictionSet:
    """Validation samples from a substream no planning run uses."""
    spec = cfg.generator()
    if spec is None:
        raise ConfigError("prediction.generator", "fresh samples need a generator")
    spec.seed = cfg["seed"]
    M = cfg["validation"]["M"] if M is None else M
    if M < 1:
        raise ConfigError("validation.M", f"must be positive, got {M}")
    return prediction.generate(spec, M, stream=1)


def run_plan(cfg: ScenarioConfig, samples: prediction.PredictionSet | None = None,
             run: int = 0) -> pl.PlanResult:
    samples = planning_samples(cfg, run) if samples is None else samples
    c, g = cfg["clustering"], cfg["geometry"]
    res = pl.plan(
        build_model(cfg), build_objective(cfg), samples, cfg.risk, cfg.method,
        pl.ClusteringConfig(c["strategy"], c["K"], c["seed"]),
        pl.GeometryConfig(g["L_C"], g["inflation"], g["clearance"]),
        _allocation_config(cfg),
    )
    res.provenance["inflation"] = g["inflation"]
    res.provenance["epsilon"] = cfg["risk"]["epsilon"]
    return res
