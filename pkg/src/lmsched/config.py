"""Run configuration: a YAML file plus dotted-path overrides.

Every command-line flag maps to one dotted key (see ``FLAG_PATHS``), and
``--set key=value`` reaches any other key. Values given on the command
line are parsed as YAML scalars, so ``--set sim.horizon=600`` yields a
number and ``--set scheduler.offload=false`` a boolean.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .sched import Policy, SchedulerConfig
from .sim.engine import SimConfig

PACKAGED = "packaged:"

DEFAULTS: dict = {
    "trace": "packaged:synthetic_test.jsonl",
    "profile": "packaged:dialogpt_synthetic.profile.json",
    "scheduler": {
        "policy": "UP",
        "alpha": 1.0,
        "lam": 1.5,
        "b": 1.6,
        "k": 0.9,
        "numerator_mode": "normalized",
        "consolidate": None,
        "offload": None,
    },
    "workload": {
        "beta_schedule": "10:150:10",
        "xi": 2.0,
        "malicious_ratio": 0.0,
        "malicious_inflation": 3.0,
        "variance": None,
        "subset_size": None,
        "limit": None,
        "tightness": 1.0,
    },
    "sim": {"cpu_lanes": 4, "horizon": None, "decision_overhead": 0.0, "kernel": "auto"},
    "seed": 0,
    "out": "runs/latest",
}

FLAG_PATHS = {
    "trace": "trace",
    "profile": "profile",
    "policy": "scheduler.policy",
    "alpha": "scheduler.alpha",
    "lambda": "scheduler.lam",
    "b": "scheduler.b",
    "k": "scheduler.k",
    "beta_schedule": "workload.beta_schedule",
    "xi": "workload.xi",
    "malicious_ratio": "workload.malicious_ratio",
    "variance": "workload.variance",
    "seed": "seed",
    "out": "out",
    "horizon": "sim.horizon",
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        path = f"{prefix}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a mapping")
            out[key] = _merge(out[key], value, path + ".")
        else:
            out[key] = value
    return out


def set_path(cfg: dict, dotted: str, value: Any) -> None:
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[part]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f"unknown config key {dotted!r}")
    node[parts[-1]] = value


def get_path(cfg: dict, dotted: str) -> Any:
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    return node


def parse_scalar(text: str) -> Any:
    return yaml.safe_load(text)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the file, then ``{dotted.path: value}`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
        cfg = _merge(cfg, data)
    for key, value in (overrides or {}).items():
        set_path(cfg, key, value)
    validate(cfg)
    return cfg


def resolve_resource(ref: str) -> Path:
    """Path for a file reference; ``packaged:NAME`` points into the package data."""
    if ref.startswith(PACKAGED):
        name = ref[len(PACKAGED):]
        path = Path(str(resources.files("lmsched").joinpath("data", name)))
    else:
        path = Path(ref)
    if not path.is_file():
        raise ConfigError(f"file not found: {ref}")
    return path


def scheduler_config(cfg: dict) -> SchedulerConfig:
    s = cfg["scheduler"]
    return SchedulerConfig(
        policy=Policy.parse(str(s["policy"])),
        alpha=float(s["alpha"]),
        lam=float(s["lam"]),
        b=float(s["b"]),
        k=float(s["k"]),
        numerator_mode=s["numerator_mode"],
        consolidate=s["consolidate"],
        offload=s["offload"],
    )


def sim_config(cfg: dict) -> SimConfig:
    s = cfg["sim"]
    horizon = s["horizon"]
    return SimConfig(
        xi=float(cfg["workload"]["xi"]),
        cpu_lanes=int(s["cpu_lanes"]),
        horizon=None if horizon is None else float(horizon),
        decision_overhead=float(s["decision_overhead"]),
        kernel=s["kernel"],
    )


@dataclass(frozen=True)
class WorkloadParams:
    beta_schedule: tuple
    xi: float
    malicious_ratio: float
    malicious_inflation: float
    variance: str | None
    subset_size: int | None
    limit: int | None
    tightness: float


def workload_params(cfg: dict) -> WorkloadParams:
    from .workload import parse_beta_schedule

    w = cfg["workload"]
    return WorkloadParams(
        beta_schedule=parse_beta_schedule(w["beta_schedule"]),
        xi=float(w["xi"]),
        malicious_ratio=float(w["malicious_ratio"]),
        malicious_inflation=float(w["malicious_inflation"]),
        variance=w["variance"],
        subset_size=None if w["subset_size"] is None else int(w["subset_size"]),
        limit=None if w["limit"] is None else int(w["limit"]),
        tightness=float(w["tightness"]),
    )


def validate(cfg: dict) -> None:
    try:
        scheduler_config(cfg)
        sim_config(cfg)
        w = workload_params(cfg)
        if not 0.0 <= w.malicious_ratio <= 1.0:
            raise ValueError("workload.malicious_ratio must lie in [0, 1]")
        if w.malicious_inflation < 1.0:
            raise ValueError("workload.malicious_inflation must be >= 1")
        if w.variance not in (None, "small", "normal", "large"):
            raise ValueError("workload.variance must be small, normal or large")
        if w.tightness <= 0:
            raise ValueError("workload.tightness must be > 0")
        if any(b <= 0 for b in w.beta_schedule):
            raise ValueError("workload.beta_schedule rates must be positive")
        int(cfg["seed"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
