"""Per-model calibration and the on-disk profile artifact."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .estimator import EstimatorProfile

ARTIFACT_FORMAT = "lmsched-profile/1"


class ProfileHashMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ModelProfile:
    """Latency calibration of one language model.

    ``eta`` converts output tokens to seconds, ``mu`` input tokens to a
    deadline offset. ``tau`` is the offload threshold and ``u_max`` the
    ceiling used to normalize uncertainty scores, both in tokens.
    """

    name: str
    eta: float
    mu: float
    batch_size: int
    tau: float
    u_max: float
    base_latency_gpu: float = 0.1
    batch_setup: float = 0.05
    cpu_slowdown: float = 1.0

    def __post_init__(self):
        for name in ("eta", "mu", "tau", "u_max", "base_latency_gpu", "batch_setup"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.cpu_slowdown < 1:
            raise ValueError("cpu_slowdown must be >= 1")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelProfile":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown profile fields: {sorted(unknown)}")
        return cls(**data)


def _read_reference() -> dict:
    text = resources.files("lmsched").joinpath("data/reference_profiles.json").read_text(encoding="utf-8")
    return json.loads(text)


@lru_cache(maxsize=None)
def reference_profiles() -> dict[str, ModelProfile]:
    data = _read_reference()
    defaults = data["latency_defaults"]
    return {
        name: ModelProfile(name=name, **{**defaults, **params})
        for name, params in data["models"].items()
    }


def reference_scheduler_defaults() -> dict:
    return dict(_read_reference()["scheduler"])


def reference_profile(name: str) -> ModelProfile:
    profiles = reference_profiles()
    for key, profile in profiles.items():
        if key.lower() == name.lower():
            return profile
    raise KeyError(f"no reference profile {name!r}; known: {', '.join(profiles)}")


# ---------------------------------------------------------------- artifact


def _canonical(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def content_hash(payload: dict) -> str:
    return hashlib.sha256(_canonical(payload)).hexdigest()


def profile_payload(model_profile: ModelProfile, estimator: EstimatorProfile | None = None) -> dict:
    return {
        "format": ARTIFACT_FORMAT,
        "model_profile": model_profile.to_dict(),
        "estimator": estimator.to_dict() if estimator is not None else None,
    }


def dumps_profile(model_profile: ModelProfile, estimator: EstimatorProfile | None = None) -> bytes:
    payload = profile_payload(model_profile, estimator)
    document = dict(payload, content_hash=content_hash(payload))
    return json.dumps(document, sort_keys=True, indent=1, allow_nan=False).encode("utf-8") + b"\n"


def loads_profile(data: bytes | str) -> tuple[ModelProfile, EstimatorProfile | None]:
    document = json.loads(data)
    if document.get("format") != ARTIFACT_FORMAT:
        raise ValueError(f"not a profile artifact (format {document.get('format')!r})")
    stored = document.pop("content_hash", None)
    actual = content_hash(document)
    if stored != actual:
        raise ProfileHashMismatch(f"content hash {stored} does not match payload ({actual})")
    estimator = document.get("estimator")
    return (
        ModelProfile.from_dict(document["model_profile"]),
        EstimatorProfile.from_dict(estimator) if estimator is not None else None,
    )


def write_profile(path: str | Path, model_profile: ModelProfile, estimator: EstimatorProfile | None = None) -> str:
    blob = dumps_profile(model_profile, estimator)
    Path(path).write_bytes(blob)
    return json.loads(blob)["content_hash"]


def read_profile(path: str | Path) -> tuple[ModelProfile, EstimatorProfile | None]:
    return loads_profile(Path(path).read_bytes())
