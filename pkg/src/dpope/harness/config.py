"""Experiment configuration loaded from TOML/JSON files plus flag overrides."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    pass


PARTITION_KINDS = ("identity", "equi-length", "equi-depth", "explicit", "workload")


def parse_epsilon(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    eps = float(v)
    if not eps > 0:
        raise ConfigError(f"epsilon must be positive, got {v!r}")
    return eps


def format_epsilon(eps: float) -> str:
    return "inf" if math.isinf(eps) else repr(float(eps))


@dataclass(frozen=True)
class PartitionSpec:
    kind: str = "equi-depth"
    k: int = 10
    boundaries: tuple = ()

    def __post_init__(self):
        if self.kind not in PARTITION_KINDS:
            raise ConfigError(f"unknown partition kind {self.kind!r}")
        if self.kind in ("equi-length", "equi-depth") and self.k < 1:
            raise ConfigError("partition k must be at least 1")
        if self.kind == "explicit" and not self.boundaries:
            raise ConfigError("explicit partitions need boundaries")

    @classmethod
    def parse(cls, text: str) -> "PartitionSpec":
        """``identity``, ``workload``, ``equi-depth:K``, ``equi-length:K`` or
        ``explicit:e1,e2,...``."""
        kind, _, arg = text.partition(":")
        if kind in ("equi-depth", "equi-length"):
            try:
                return cls(kind, int(arg))
            except ValueError:
                raise ConfigError(f"bad partition size in {text!r}") from None
        if kind == "explicit":
            return cls(kind, 0, tuple(int(v) for v in arg.split(",") if v))
        return cls(kind)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an experiment bit-for-bit.

    ``epsilons`` are scheme-level budgets; encoders run at half of each.
    ``dataset`` is either ``{"source": "synthetic", "kind": ..., "n": ...}``
    or ``{"source": "csv", "path": ..., "column": ..., "scale": ...}``.
    """

    domain: tuple = (1, 1000)
    dataset: dict = field(default_factory=lambda: {"source": "synthetic", "kind": "uniform", "n": 10000})
    partitions: tuple = (PartitionSpec(),)
    epsilons: tuple = (1.0,)
    neighbors: tuple = (0,)
    queries: dict = field(default_factory=lambda: {"count": 200})
    trials: int = 1
    seed: int = 0
    leakage: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = (int(v) for v in self.domain)
        if lo > hi:
            raise ConfigError("domain lo must not exceed hi")
        object.__setattr__(self, "domain", (lo, hi))
        object.__setattr__(self, "epsilons", tuple(parse_epsilon(e) for e in self.epsilons))
        object.__setattr__(self, "neighbors", tuple(int(l) for l in self.neighbors))
        parts = tuple(p if isinstance(p, PartitionSpec) else _partition_from(p) for p in self.partitions)
        object.__setattr__(self, "partitions", parts)
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if any(l < 0 for l in self.neighbors):
            raise ConfigError("neighbors must be non-negative")
        if not self.epsilons:
            raise ConfigError("at least one epsilon is required")
        src = self.dataset.get("source")
        if src not in ("synthetic", "csv"):
            raise ConfigError(f"unknown dataset source {src!r}")
        if src == "csv" and not {"path", "column"} <= set(self.dataset):
            raise ConfigError("csv datasets need 'path' and 'column'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epsilons"] = [format_epsilon(e) for e in self.epsilons]
        d["partitions"] = [asdict(p) for p in self.partitions]
        for p in d["partitions"]:
            p["boundaries"] = list(p["boundaries"])
        d["domain"] = list(self.domain)
        d["neighbors"] = list(self.neighbors)
        return d

    def override(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _partition_from(obj) -> PartitionSpec:
    if isinstance(obj, str):
        return PartitionSpec.parse(obj)
    if isinstance(obj, dict):
        return PartitionSpec(obj.get("kind", "equi-depth"), int(obj.get("k", 10)),
                             tuple(obj.get("boundaries", ())))
    raise ConfigError(f"cannot read partition spec {obj!r}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    doc = dict(doc)
    for key in ("domain", "partitions", "epsilons", "neighbors"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return ExperimentConfig(**doc)


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    if p.suffix == ".toml":
        with open(p, "rb") as fh:
            doc = tomllib.load(fh)
    elif p.suffix == ".json":
        doc = json.loads(p.read_text(encoding="utf-8"))
    else:
        raise ConfigError(f"config must be .toml or .json, got {p.name}")
    return config_from_dict(doc)
