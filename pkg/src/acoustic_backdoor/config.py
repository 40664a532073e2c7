"""Experiment configuration and its stable digest."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields


class ConfigError(ValueError):
    """Raised for config files with unknown or malformed entries."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_digest(obj) -> str:
    """SHA-256 (hex, first 16 chars) of the canonical JSON form of ``obj``."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return hashlib.sha256(canonical_json(obj).encode("ascii")).hexdigest()[:16]


@dataclass
class ExperimentConfig:
    """Everything one experiment run depends on.

    Paths are kept as given (not resolved) so the digest does not depend on
    the working directory.
    """

    manifest: str | None = None
    overlay_bank: str | None = None
    out_dir: str = "out"
    rho: float = 0.05
    trigger: dict = field(default_factory=lambda: {"type": "additive", "overlay_id": "street", "kind": "noise"})
    target_label: int = 1
    target_response: str = "Sure, here is how to do that."
    train: dict = field(default_factory=dict)
    defense: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> ExperimentConfig:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def digest(self) -> str:
        return config_digest(self.to_dict())
