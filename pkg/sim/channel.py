"""
Channel Trajectories
True SINR per slot (constant, step, multi-step, chirped sinusoid or a file
trace), optional Gaussian jitter, and delayed quantized CQI reports.
"""

import csv
import math
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import ConfigError


class CqiConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    period: int = Field(20, ge=1)
    delay: int = Field(4, ge=0)
    # Quantization grid of the reported SINR; 0 reports the exact value.
    step_db: float = Field(1.0, ge=0.0)
    bias_db: float = 0.0


class ChannelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["constant", "step", "multi-step", "chirp", "file-trace"] = "constant"
    level: float = 10.0
    levels: list[float] = Field(default_factory=list)
    switch_slots: list[int] = Field(default_factory=list)
    # chirp: center + amplitude * sin(phase), frequency in cycles per slot
    center: float = 10.0
    amplitude: float = Field(5.0, ge=0.0)
    freq_start: float = Field(0.0005, ge=0.0)
    freq_end: float = Field(0.01, ge=0.0)
    profile: Literal["linear", "triangle"] = "linear"
    path: Optional[str] = None
    jitter_db: float = Field(0.0, ge=0.0)
    cqi: Optional[CqiConfig] = None

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind in ("step", "multi-step"):
            if len(self.levels) != len(self.switch_slots) + 1:
                raise ValueError(f"{self.kind} channel needs one more level than switch slots")
            if self.kind == "step" and len(self.switch_slots) != 1:
                raise ValueError("step channel takes exactly one switch slot")
            if any(b <= a for a, b in zip(self.switch_slots, self.switch_slots[1:])):
                raise ValueError("switch_slots must be strictly increasing")
            if any(s < 0 for s in self.switch_slots):
                raise ValueError("switch_slots must be non-negative")
        if self.kind == "file-trace" and not self.path:
            raise ValueError("file-trace channel needs a path")
        return self

    @property
    def first_switch(self) -> Optional[int]:
        return self.switch_slots[0] if self.switch_slots else None


def read_trace_file(path: str) -> np.ndarray:
    """SINR values in dB, one per line or in the first CSV column; '#' lines and a header are skipped."""
    values = []
    try:
        with open(path, "r", newline="") as f:
            for lineno, row in enumerate(csv.reader(f), start=1):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    values.append(float(row[0]))
                except ValueError:
                    if values:
                        raise ConfigError(f"{path}:{lineno}: not a number: {row[0]!r}")
    except OSError as e:
        raise ConfigError(f"cannot read channel trace {path}: {e}") from e
    return np.array(values, dtype=float)


def _chirp(config: ChannelConfig, n_slots: int) -> np.ndarray:
    t = np.arange(n_slots, dtype=float)
    frac = t / max(n_slots - 1, 1)
    if config.profile == "triangle":
        frac = 1.0 - np.abs(2.0 * frac - 1.0)
    freq = config.freq_start + (config.freq_end - config.freq_start) * frac
    phase = 2.0 * math.pi * np.concatenate(([0.0], np.cumsum(freq)[:-1]))
    return config.center + config.amplitude * np.sin(phase)


def trajectory(config: ChannelConfig, n_slots: int, rng=None) -> np.ndarray:
    """
    True SINR (dB) for slots 0 .. n_slots-1.

    Args:
        rng: channel stream, used only when jitter is configured.
    """
    if config.kind == "constant":
        gamma = np.full(n_slots, config.level, dtype=float)
    elif config.kind in ("step", "multi-step"):
        idx = np.searchsorted(config.switch_slots, np.arange(n_slots), side="right")
        gamma = np.asarray(config.levels, dtype=float)[idx]
    elif config.kind == "chirp":
        gamma = _chirp(config, n_slots)
    else:
        values = read_trace_file(config.path)
        if len(values) < n_slots:
            raise ConfigError(f"channel trace {config.path} has {len(values)} values, need {n_slots}")
        gamma = values[:n_slots].copy()

    if config.jitter_db > 0 and n_slots:
        if rng is None:
            raise ConfigError("channel jitter needs a random generator")
        gamma = gamma + rng.normal(0.0, config.jitter_db, n_slots)
    return gamma


def quantize(value: float, step_db: float) -> float:
    if step_db <= 0:
        return float(value)
    return float(step_db * math.floor(value / step_db + 0.5))


def cqi_schedule(true_sinr: np.ndarray, cqi: Optional[CqiConfig]) -> dict:
    """Slot -> reported SINR for every report that arrives within the run."""
    if cqi is None:
        return {}
    n = len(true_sinr)
    reports = {}
    for t in range(0, n, cqi.period):
        arrival = t + cqi.delay
        if arrival < n:
            reports[arrival] = quantize(true_sinr[t] + cqi.bias_db, cqi.step_db)
    return reports
