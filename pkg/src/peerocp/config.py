"""JSON run configurations for the benchmark problems."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

__all__ = ["ConfigError", "RunConfig", "load_config", "config_hash", "DEFAULTS"]


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


DEFAULTS = {
    "heat1d": {
        "m": 250,
        "triplet": "AP4o33vgi",
        "N": [15, 31, 63, 127],
        "grid": "uniform",
        "optimizer": {"tol": 1e-8, "max_iters": 500, "method": "auto"},
        "adapt": {"atol_Y": 1e-8, "atol_P": 1e-8, "rtol_Y": 1.0, "rtol_P": 1.0, "delta": 0.0,
                  "eta_max": 15.0},
    },
    "pca2d": {
        "m_side": 64,
        "triplet": "AP4o33vgi",
        "N": 83,
        "grid": "uniform",
        "protocol": "d1-target",
        "weights": {"k1": 1.0, "k2": 1.0, "k3": 1.0},
        "optimizer": {"tol": 1e-5, "max_iters": 25, "method": "auto"},
        "adapt": {"atol_Y": 1e-8, "atol_P": 1e2, "rtol_Y": 1.0, "rtol_P": 1.0, "delta": 0.0,
                  "eta_max": 15.0},
    },
}

_TOP = {"problem", "m", "m_side", "triplet", "N", "grid", "grid_file", "optimizer", "weights",
        "protocol", "outputs", "adapt"}
_OPT = {"tol", "max_iters", "method"}
_ADAPT = {"atol_Y", "atol_P", "rtol_Y", "rtol_P", "delta", "eta_max"}
_WEIGHTS = {"k1", "k2", "k3", "k4"}
_GRIDS = {"uniform", "file", "adapt"}
_METHODS = {"auto", "projected-gradient", "cg", "l-bfgs-b"}
OUTPUT_KINDS = {"errors", "trace", "controls", "observables", "grid", "density", "trajectory"}


@dataclass
class RunConfig:
    problem: str
    triplet: str
    N: list
    grid: str = "uniform"
    grid_file: str | None = None
    size: int = 0
    protocol: str | None = None
    weights: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    adapt: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    @property
    def hash(self):
        return config_hash(self.raw)


def config_hash(doc):
    """16 hex digits of the SHA-256 of the canonical JSON form."""
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _check_keys(doc, allowed, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _num(v, name, positive=True, integer=False):
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok:
        raise ConfigError(f"{name} must be {'an integer' if integer else 'a number'}")
    if positive and not v > 0:
        raise ConfigError(f"{name} must be positive")
    return v


def load_config(src):
    """Validate a config given as a path, JSON text or dict; fill defaults."""
    from .triplets import known_triplets

    if isinstance(src, dict):
        doc = src
    else:
        try:
            with open(src) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {src}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {src} is not valid JSON: {exc}") from exc
    _check_keys(doc, _TOP, "config")
    prob = doc.get("problem")
    if prob not in DEFAULTS:
        raise ConfigError(f"problem must be one of {sorted(DEFAULTS)}, got {prob!r}")
    d = DEFAULTS[prob]
    size_key = "m" if prob == "heat1d" else "m_side"
    other = "m_side" if prob == "heat1d" else "m"
    if other in doc:
        raise ConfigError(f"{other} is not a parameter of {prob}; use {size_key}")
    size = _num(doc.get(size_key, d[size_key]), size_key, integer=True)
    triplet = doc.get("triplet", d["triplet"])
    if triplet not in known_triplets():
        raise ConfigError(f"unknown triplet {triplet!r}; known: {', '.join(known_triplets())}")
    N = doc.get("N", d["N"])
    N = N if isinstance(N, list) else [N]
    if not N:
        raise ConfigError("N must not be empty")
    for n in N:
        _num(n, "N", integer=True)
        if n < 3:
            raise ConfigError("N must be at least 3")
    grid = doc.get("grid", d["grid"])
    if grid not in _GRIDS:
        raise ConfigError(f"grid must be one of {sorted(_GRIDS)}")
    grid_file = doc.get("grid_file")
    if grid == "file" and not grid_file:
        raise ConfigError("grid 'file' needs grid_file")
    opt = dict(d["optimizer"])
    opt_in = doc.get("optimizer", {})
    _check_keys(opt_in, _OPT, "optimizer")
    opt.update(opt_in)
    _num(opt["tol"], "optimizer.tol")
    _num(opt["max_iters"], "optimizer.max_iters", integer=True)
    if opt["method"] not in _METHODS:
        raise ConfigError(f"optimizer.method must be one of {sorted(_METHODS)}")
    ad = dict(d["adapt"])
    ad_in = doc.get("adapt", {})
    _check_keys(ad_in, _ADAPT, "adapt")
    ad.update(ad_in)
    for k in ("atol_Y", "atol_P", "eta_max"):
        _num(ad[k], f"adapt.{k}")
    for k in ("rtol_Y", "rtol_P", "delta"):
        _num(ad[k], f"adapt.{k}", positive=False)
        if ad[k] < 0:
            raise ConfigError(f"adapt.{k} must be non-negative")
    if not ad["delta"] <= 1:
        raise ConfigError("adapt.delta must lie in [0, 1]")
    weights = dict(d.get("weights", {}))
    w_in = doc.get("weights", {})
    _check_keys(w_in, _WEIGHTS, "weights")
    if w_in and prob != "pca2d":
        raise ConfigError("weights only apply to pca2d")
    for k, v in w_in.items():
        _num(v, f"weights.{k}", positive=False)
        if v < 0:
            raise ConfigError(f"weights.{k} must be non-negative")
    weights.update(w_in)
    protocol = doc.get("protocol", d.get("protocol"))
    if prob == "pca2d":
        from .benchmarks.pca import PROTOCOLS
        if protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {sorted(PROTOCOLS)}")
    elif "protocol" in doc:
        raise ConfigError("protocol only applies to pca2d")
    outputs = doc.get("outputs", sorted(OUTPUT_KINDS - {"trajectory"}))
    if not isinstance(outputs, list) or not set(outputs) <= OUTPUT_KINDS:
        raise ConfigError(f"outputs must be a list drawn from {sorted(OUTPUT_KINDS)}")
    return RunConfig(problem=prob, triplet=triplet, N=list(N), grid=grid, grid_file=grid_file,
                     size=size, protocol=protocol, weights=weights, optimizer=opt, adapt=ad,
                     outputs=list(outputs), raw=doc)
