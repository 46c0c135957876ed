"""
Scenario Files
YAML scenario schema (channel, traffic, harq, adapter, metrics), dotted
overrides and loading with validation.
"""

import os
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from agents.olla import OLLA_VARIANTS, OllaConfig
from agents.salad import SaladConfig, load_profile
from errors import ConfigError
from sim.channel import ChannelConfig
from sim.harq import HarqConfig

ADAPTERS = ("olla", "salad", "oracle")


class TrafficConfig(BaseModel):
    """Full-buffer traffic; the TBS is constant, cycled from a list, or set by an offered load."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    tbs: int = Field(2000, gt=0)
    tbs_list: Optional[list[int]] = None
    load_mbps: Optional[float] = Field(None, gt=0.0)
    slot_duration_ms: float = Field(0.5, gt=0.0)

    @model_validator(mode="after")
    def _check(self):
        if self.tbs_list is not None and self.load_mbps is not None:
            raise ValueError("set at most one of tbs_list and load_mbps")
        if self.tbs_list is not None and (not self.tbs_list or min(self.tbs_list) <= 0):
            raise ValueError("tbs_list must hold positive sizes")
        return self

    def tbs_at(self, slot: int) -> int:
        if self.tbs_list is not None:
            return int(self.tbs_list[slot % len(self.tbs_list)])
        if self.load_mbps is not None:
            # Mbit/s * ms = kbit
            return max(1, int(round(self.load_mbps * self.slot_duration_ms * 1000.0)))
        return self.tbs


class OracleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    target: float = Field(0.1, gt=0.0, lt=1.0)
    selector: str = Field("illa", pattern="^(illa|maxse)$")


class AdapterSection(BaseModel):
    """
    Adapter choice and per-adapter parameters.

    `olla` accepts OllaConfig keys plus `variant` (slow / default / fast);
    `salad` accepts SaladConfig keys plus `profile`.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    default: Literal["olla", "salad", "oracle"] = "salad"
    olla: dict = Field(default_factory=dict)
    salad: dict = Field(default_factory=dict)
    oracle: OracleConfig = Field(default_factory=OracleConfig)

    @model_validator(mode="after")
    def _check(self):
        self.olla_config()
        self.salad_config()
        return self

    def olla_config(self) -> OllaConfig:
        params = dict(self.olla)
        variant = params.pop("variant", None)
        if variant is not None:
            if variant not in OLLA_VARIANTS:
                raise ValueError(f"unknown OLLA variant {variant!r}")
            params.setdefault("delta_nack", OLLA_VARIANTS[variant])
        return OllaConfig(**params)

    def salad_config(self) -> SaladConfig:
        params = dict(self.salad)
        profile = params.pop("profile", None)
        if profile is None:
            return SaladConfig(**params)
        try:
            return load_profile(profile, **params)
        except ConfigError as e:
            raise ValueError(str(e)) from e


class MetricsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    window: int = Field(50, ge=1)
    threshold_db: float = Field(1.0, gt=0.0)
    # Defaults to the channel's first switch slot.
    switch_slot: Optional[int] = Field(None, ge=0)


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "scenario"
    slots: int = Field(..., ge=0)
    seed: int = Field(0, ge=0)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    traffic: TrafficConfig = Field(default_factory=TrafficConfig)
    harq: HarqConfig = Field(default_factory=HarqConfig)
    adapter: AdapterSection = Field(default_factory=AdapterSection)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)

    @property
    def switch_slot(self) -> Optional[int]:
        if self.metrics.switch_slot is not None:
            return self.metrics.switch_slot
        return self.channel.first_switch

    @property
    def target(self) -> float:
        """Long-term BLER target of the default adapter."""
        if self.adapter.default == "olla":
            return self.adapter.olla_config().target
        if self.adapter.default == "oracle":
            return self.adapter.oracle.target
        return self.adapter.salad_config().tau

    def with_adapter(self, name: str) -> "Scenario":
        if name not in ADAPTERS:
            raise ConfigError(f"unknown adapter {name!r}; choose from {', '.join(ADAPTERS)}")
        return self.model_copy(update={"adapter": self.adapter.model_copy(update={"default": name})})

    def with_seed(self, seed: int) -> "Scenario":
        return self.model_copy(update={"seed": int(seed)})


def apply_overrides(raw: dict, overrides) -> dict:
    """
    Apply KEY=VALUE overrides with dotted keys, e.g. adapter.salad.epsilon=0.5.
    Values are parsed as YAML scalars.
    """
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigError(f"override {item!r} has an empty key")
        node = raw
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            elif not isinstance(child, dict):
                raise ConfigError(f"override {key!r}: {part!r} is not a section")
            node = child
        node[parts[-1]] = yaml.safe_load(value)
    return raw


def _error_summary(e: ValidationError) -> str:
    first = e.errors()[0]
    where = ".".join(str(p) for p in first["loc"]) or "<root>"
    more = f" (+{e.error_count() - 1} more)" if e.error_count() > 1 else ""
    return f"{where}: {first['msg']}{more}"


def build_scenario(raw: dict, source: str = "<scenario>") -> Scenario:
    try:
        return Scenario(**raw)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_error_summary(e)}") from e
    except TypeError as e:
        raise ConfigError(f"{source}: {e}") from e


def read_yaml(path: str) -> dict:
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror or e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return raw


def load_scenario(path: str, overrides=None) -> Scenario:
    """Load, override and validate a scenario file; relative trace paths resolve against its folder."""
    raw = apply_overrides(read_yaml(path), overrides)
    channel = raw.get("channel")
    if isinstance(channel, dict) and channel.get("path") and not os.path.isabs(channel["path"]):
        channel["path"] = os.path.join(os.path.dirname(os.path.abspath(path)), channel["path"])
    return build_scenario(raw, source=path)


class SweepManifest(BaseModel):
    """Adapters x seeds over one scenario file."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    scenario: str
    adapters: list[Literal["olla", "salad", "oracle"]] = Field(default_factory=lambda: list(ADAPTERS))
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    overrides: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self):
        if not self.adapters or not self.seeds:
            raise ValueError("a sweep needs at least one adapter and one seed")
        if len(set(self.adapters)) != len(self.adapters) or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("adapters and seeds must not repeat")
        if min(self.seeds) < 0:
            raise ValueError("seeds must be non-negative")
        return self


def resolve_relative(path: str, base_file: str) -> str:
    if os.path.isabs(path):
        return path
    return os.path.join(os.path.dirname(os.path.abspath(base_file)), path)


def load_manifest(path: str) -> SweepManifest:
    raw = read_yaml(path)
    if not raw:
        raise ConfigError(f"{path}: empty sweep manifest")
    try:
        manifest = SweepManifest(**raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_error_summary(e)}") from e
    return manifest.model_copy(update={"scenario": resolve_relative(manifest.scenario, path)})
