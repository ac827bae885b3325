"""Experiment configuration for the batch runner (JSON on disk)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

MAP_KINDS = ("band", "rotation", "identity")


class ConfigError(ValueError):
    """A configuration value is missing, malformed or out of range."""


@dataclass
class ExperimentConfig:
    # map: omega = alpha inside the unit disk, a band of slope one up to beta
    map_kind: str = "band"
    alpha: float = 0.3
    beta: float = 0.45
    lift_shift: int = 0           # deck shift k of the lift (T^k)
    # decomposition
    m: int = 8
    K_target: float = 3.5
    # action space
    b_values: list = field(default_factory=lambda: [7, 12, 24])
    a_rule: str = "interior"      # integers a with b alpha < a < b beta
    flow_seeds: int = 6
    flow_time: float = 4.0
    flow_scale: float = 0.6
    disk_cache: str = ""
    # quadrature
    n_samples: int = 200_000
    # theorem pipeline
    max_b: int = 34
    disk_max_b: int = 3
    disk_psi: int = 48
    tau_pairs: int = 4000
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        if self.map_kind not in MAP_KINDS:
            raise ConfigError(f"map_kind must be one of {MAP_KINDS}, got {self.map_kind!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("alpha must lie in [0, 1)")
        if self.map_kind == "band" and not self.alpha < self.beta:
            raise ConfigError("beta must exceed alpha")
        if self.m < 1:
            raise ConfigError("m must be positive")
        if self.K_target <= 1.0:
            raise ConfigError("K_target must exceed 1")
        if not self.b_values or any(int(b) != b or b < 1 for b in self.b_values):
            raise ConfigError("b_values must be positive integers")
        if self.a_rule != "interior":
            raise ConfigError("only the 'interior' a-selection rule is supported")
        if self.n_samples < 2 or self.flow_seeds < 0 or self.flow_time <= 0:
            raise ConfigError("sample counts and times must be positive")
        if self.max_b < 1 or self.disk_psi < 8 or self.tau_pairs < 2:
            raise ConfigError("theorem pipeline sizes out of range")
        return self

    # ------------------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        for f in fields(cls):
            default = getattr(cls(), f.name)
            value = getattr(cfg, f.name)
            if isinstance(default, bool) or default is None:
                continue
            if isinstance(default, (int, float)) and not isinstance(value, (int, float)):
                raise ConfigError(f"{f.name} must be a number")
            if isinstance(default, str) and not isinstance(value, str):
                raise ConfigError(f"{f.name} must be a string")
            if isinstance(default, list) and not isinstance(value, list):
                raise ConfigError(f"{f.name} must be a list")
        return cfg.validate()

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    # ------------------------------------------------------------------
    def profile(self):
        from .maps import AngularProfile, ConstantProfile

        if self.map_kind == "band":
            return AngularProfile(self.alpha, self.beta)
        if self.map_kind == "rotation":
            return ConstantProfile(self.alpha)
        return ConstantProfile(0.0)

    def interior_numerators(self, b: int):
        """Integers a with b alpha < a < b beta."""
        lo = int(np.floor(b * self.alpha)) + 1
        return [a for a in range(lo, int(np.ceil(b * self.beta))) if b * self.alpha < a < b * self.beta]
