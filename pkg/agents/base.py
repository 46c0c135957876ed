"""
Adapter Interface
Data passed between the slot simulator and the link adaptation agents.
"""

from dataclasses import dataclass, field
from typing import Optional, Protocol

from agents.illa import IllaDecision


@dataclass(frozen=True)
class HarqFeedback:
    """ACK/NACK for the transmission made at `slot`, delivered `delay` slots later."""
    slot: int
    mcs: int
    tbs: int
    nack: bool


@dataclass
class SlotContext:
    slot: int
    scheduled: bool
    tbs: Optional[int]
    feedbacks: list = field(default_factory=list)
    reported_sinr: Optional[float] = None
    # Only the oracle reads the ground truth.
    true_sinr: Optional[float] = None


@dataclass(frozen=True)
class AdapterStep:
    estimate: float
    decision: Optional[IllaDecision] = None
    instant_target: Optional[float] = None
    bias_ratio: Optional[float] = None
    probe_flag: Optional[bool] = None
    integral_error: Optional[float] = None


class LinkAdapter(Protocol):
    name: str

    def step(self, ctx: SlotContext) -> AdapterStep:
        ...

    def finish(self, feedbacks) -> None:
        """Absorb feedback delivered after the last scheduled slot."""
        ...
