"""
SALAD Agent
Self-adaptive link adaptation: student SINR inference from ACK/NACK surprise,
calibration bias score with probabilistic MCS probing, integral control of the
instantaneous BLER target, and periodic learning-rate distillation.
"""

import logging
import math
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from agents.base import AdapterStep, HarqFeedback, SlotContext
from agents.illa import SELECTORS, IllaDecision
from agents.teacher import DEFAULT_EPS_GRID, DEFAULT_KNOT_CANDIDATES, GdParams, HistoryBatch, distill
from errors import ConfigError, FitError, NotReadyError
from phy.blermodel import BlerTable

logger = logging.getLogger(__name__)

PROFILES_PATH = os.path.join(os.path.dirname(__file__), "..", "config", "salad_profiles.yaml")


class SaladConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    epsilon: float = Field(1.0, gt=0.0)
    rho: float = Field(0.25, gt=0.0)
    window: int = Field(15, ge=1)
    p_probe: float = Field(0.15, gt=0.0, le=1.0)
    tau_probe: float = Field(0.999, gt=0.0, le=1.0)
    k_e: float = Field(0.01, gt=0.0)
    tau: float = Field(0.1, gt=0.0, lt=1.0)
    # Distillation period in slots; 0 keeps epsilon fixed.
    n_eps: int = Field(0, ge=0)
    adjust_only_when_not_probing: bool = False

    initial_sinr: float = 0.0
    selector: str = Field("illa", pattern="^(illa|maxse)$")
    history_capacity: Optional[int] = Field(None, ge=1)
    eps_grid: tuple[float, ...] = DEFAULT_EPS_GRID
    knot_candidates: tuple[int, ...] = DEFAULT_KNOT_CANDIDATES
    beta: float = Field(0.0, ge=0.0)
    gd_step: float = Field(0.5, gt=0.0)
    gd_max_iters: int = Field(300, ge=0)
    min_distill_feedbacks: int = Field(20, ge=2)

    @model_validator(mode="after")
    def _check(self):
        if not self.tau < self.tau_probe:
            raise ValueError(f"tau_probe ({self.tau_probe}) must exceed tau ({self.tau})")
        if self.history_capacity is not None and self.history_capacity < self.window:
            raise ValueError("history_capacity must hold at least `window` records")
        if not self.eps_grid or min(self.eps_grid) <= 0:
            raise ValueError("eps_grid must hold positive learning rates")
        if not self.knot_candidates or min(self.knot_candidates) < 2:
            raise ValueError("knot_candidates must be at least 2")
        return self

    @property
    def capacity(self) -> int:
        return max(self.history_capacity or self.window, self.window, self.n_eps)

    @property
    def gd(self) -> GdParams:
        return GdParams(step=self.gd_step, max_iters=self.gd_max_iters)


def load_profile(name: str = "default", path=None, **overrides) -> SaladConfig:
    """SALAD parameters from the bundled profiles file, with optional overrides."""
    if path is None:
        path = PROFILES_PATH
    with open(path, "r") as f:
        profiles = yaml.safe_load(f)["profiles"]
    if name not in profiles:
        raise ConfigError(f"unknown SALAD profile {name!r}; known: {', '.join(sorted(profiles))}")
    try:
        return SaladConfig(**{**profiles[name], **overrides})
    except ValueError as e:
        raise ConfigError(f"SALAD profile {name!r}: {e}") from e


@dataclass(frozen=True)
class FeedbackRecord:
    predicted_bler: float
    nack: bool
    scale_used: float
    mcs: int
    tbs: int
    slot: int
    reported_sinr: float = 0.0
    pre_estimate: float = 0.0


@dataclass
class SaladState:
    gamma_est: float
    epsilon: float
    history: deque
    integral_error: float = 0.0
    reported_sinr: float = 0.0
    epsilon_log: list = field(default_factory=list)

    @classmethod
    def initial(cls, config: SaladConfig) -> "SaladState":
        return cls(gamma_est=config.initial_sinr, epsilon=config.epsilon,
                   history=deque(maxlen=config.capacity))

    @property
    def estimate(self) -> float:
        return self.reported_sinr + self.gamma_est


def student_update(state: SaladState, feedback: HarqFeedback, config: SaladConfig,
                   table: BlerTable) -> SaladState:
    """
    Gradient step on the BCE of one feedback, plus the integral-error update.

    The BLER and scale of the feedback's (MCS, TBS) are clipped before use; the
    BLER is evaluated at the estimate held when the feedback arrives.
    """
    e = table.entry(feedback.mcs, feedback.tbs)
    p = table.bler(feedback.mcs, state.estimate, feedback.tbs)
    p, s = table.clip_bler_scale(p, e.scale)
    nack = float(feedback.nack)

    pre = state.gamma_est
    state.gamma_est = pre + state.epsilon / s * (p - nack)
    state.integral_error += config.tau - nack
    state.history.append(FeedbackRecord(
        predicted_bler=p, nack=bool(feedback.nack), scale_used=s, mcs=feedback.mcs,
        tbs=feedback.tbs, slot=feedback.slot, reported_sinr=state.reported_sinr, pre_estimate=pre,
    ))
    return state


def bias_score(history, window: int):
    """
    Calibration bias score over the `window` most recent records and its
    variance under the hypothesis that every predicted BLER is exact.

    Raises:
        NotReadyError: fewer than `window` records.
    """
    if len(history) < window:
        raise NotReadyError(f"bias score needs {window} records, have {len(history)}")
    recent = list(history)[-window:]
    score = sum(r.predicted_bler - float(r.nack) for r in recent) / window
    variance = sum(r.predicted_bler * (1.0 - r.predicted_bler) for r in recent) / window ** 2
    return score, variance


def probe_decision(score: float, variance: float, rho: float, p_probe: float, rng) -> bool:
    """Probe when the normalized score exceeds rho, then only with probability p_probe."""
    if score / math.sqrt(variance) > rho:
        return bool(rng.random() < p_probe)
    return False


def instantaneous_target(state: SaladState, probing: bool, config: SaladConfig) -> float:
    base = config.tau_probe if probing else config.tau
    if probing and config.adjust_only_when_not_probing:
        return base
    return min(max(base + config.k_e * state.integral_error, 0.0), 1.0)


def maybe_distill(state: SaladState, slot: int, config: SaladConfig, table: BlerTable) -> SaladState:
    """Every n_eps slots, replace epsilon by the one distilled from the last n_eps slots."""
    if config.n_eps <= 0 or slot <= 0 or slot % config.n_eps:
        return state
    records = [r for r in state.history if r.slot >= slot - config.n_eps]
    if len(records) < config.min_distill_feedbacks:
        logger.debug("slot %d: %d feedbacks, skipping distillation", slot, len(records))
        return state
    try:
        batch = HistoryBatch.from_records(records, table)
        result = distill(
            batch,
            eps_grid=config.eps_grid,
            knot_candidates=config.knot_candidates,
            beta=config.beta,
            gd=config.gd,
            init_value=records[0].reported_sinr + records[0].pre_estimate,
            bler_clip=table.bler_clip,
        )
    except FitError as e:
        logger.warning("slot %d: distillation failed (%s); keeping epsilon=%.3g", slot, e, state.epsilon)
        return state

    logger.debug("slot %d: epsilon %.3g -> %.3g (K=%d)", slot, state.epsilon, result.epsilon, result.n_knots)
    state.epsilon = result.epsilon
    state.epsilon_log.append((slot, result.epsilon, result.n_knots))
    return state


def salad_step(state: SaladState, ctx: SlotContext, config: SaladConfig, table: BlerTable, rng):
    """
    One slot of SALAD: absorb delivered feedback, then, if scheduled, pick the
    MCS from the stale estimate under the instantaneous target.

    Returns:
        (state, decision or None, AdapterStep with the trace quantities)
    """
    if ctx.reported_sinr is not None:
        state.reported_sinr = ctx.reported_sinr
    for fb in ctx.feedbacks:
        student_update(state, fb, config, table)

    estimate = state.estimate
    decision: Optional[IllaDecision] = None
    info = AdapterStep(estimate=estimate, integral_error=state.integral_error)

    if ctx.scheduled:
        ratio = None
        probing = False
        if len(state.history) >= config.window:
            score, variance = bias_score(state.history, config.window)
            ratio = score / math.sqrt(variance)
            probing = probe_decision(score, variance, config.rho, config.p_probe, rng)
        target = instantaneous_target(state, probing, config)
        decision = SELECTORS[config.selector](table, estimate, target, ctx.tbs)
        info = AdapterStep(estimate=estimate, decision=decision, instant_target=target,
                           bias_ratio=ratio, probe_flag=probing, integral_error=state.integral_error)

    maybe_distill(state, ctx.slot, config, table)
    return state, decision, info


class SaladAdapter:
    name = "salad"

    def __init__(self, config: SaladConfig, table: BlerTable, rng=None):
        self.config = config
        self.table = table
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.state = SaladState.initial(config)

    def step(self, ctx: SlotContext) -> AdapterStep:
        self.state, _, info = salad_step(self.state, ctx, self.config, self.table, self.rng)
        return info

    def finish(self, feedbacks) -> None:
        for fb in feedbacks:
            student_update(self.state, fb, self.config, self.table)
