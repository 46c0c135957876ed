"""
OLLA Agent
Outer-loop link adaptation: an additive SINR offset moved by fixed steps on
ACK/NACK, in its offset form and in its stochastic-approximation form.
"""

from dataclasses import dataclass

from pydantic import BaseModel, ConfigDict, Field

from agents.base import AdapterStep, SlotContext
from agents.illa import SELECTORS, IllaDecision
from phy.blermodel import BlerTable

# Named NACK steps (dB), a convenience preset within the 0.1 to 2 dB step-size range.
OLLA_VARIANTS = {
    "slow": 0.5,
    "default": 1.0,
    "fast": 2.0,
}


class OllaConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    target: float = Field(0.1, gt=0.0, lt=1.0)
    delta_nack: float = Field(1.0, gt=0.0)
    selector: str = Field("illa", pattern="^(illa|maxse)$")
    initial_offset: float = 0.0

    @property
    def delta_ack(self) -> float:
        return self.target / (1.0 - self.target) * self.delta_nack


@dataclass
class OllaState:
    offset: float = 0.0
    reported_sinr: float = 0.0


def olla_on_feedback(state: OllaState, nack: bool, config: OllaConfig) -> OllaState:
    if nack:
        state.offset -= config.delta_nack
    else:
        state.offset += config.delta_ack
    return state


def olla_sa_update(state: OllaState, nack: bool, config: OllaConfig) -> OllaState:
    """Same update written as constant-stepsize stochastic approximation."""
    state.offset += config.delta_nack / (1.0 - config.target) * (config.target - float(nack))
    return state


def olla_ingest_cqi(state: OllaState, reported_sinr: float) -> OllaState:
    """A new CQI report replaces the baseline; the offset is kept."""
    state.reported_sinr = reported_sinr
    return state


def olla_estimate(state: OllaState) -> float:
    return state.reported_sinr + state.offset


def olla_select(state: OllaState, config: OllaConfig, table: BlerTable, b: int,
                target: float = None) -> IllaDecision:
    if target is None:
        target = config.target
    return SELECTORS[config.selector](table, olla_estimate(state), target, b)


def time_adaptive_increment(target: float, delta_nack: float, nack: bool) -> float:
    """Estimate increment of OLLA with a per-step target and NACK step."""
    return delta_nack / (1.0 - target) * (target - float(nack))


def expected_drift(config: OllaConfig) -> float:
    """Mean offset change per feedback when NACKs occur with probability `target`."""
    return config.target * (-config.delta_nack) + (1.0 - config.target) * config.delta_ack


class OllaAdapter:
    name = "olla"

    def __init__(self, config: OllaConfig, table: BlerTable):
        self.config = config
        self.table = table
        self.state = OllaState(offset=config.initial_offset)

    def step(self, ctx: SlotContext) -> AdapterStep:
        if ctx.reported_sinr is not None:
            olla_ingest_cqi(self.state, ctx.reported_sinr)
        for fb in ctx.feedbacks:
            olla_on_feedback(self.state, fb.nack, self.config)

        estimate = olla_estimate(self.state)
        if not ctx.scheduled:
            return AdapterStep(estimate=estimate)
        decision = olla_select(self.state, self.config, self.table, ctx.tbs)
        return AdapterStep(estimate=estimate, decision=decision, instant_target=self.config.target)

    def finish(self, feedbacks) -> None:
        for fb in feedbacks:
            olla_on_feedback(self.state, fb.nack, self.config)
