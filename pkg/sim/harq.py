"""
HARQ Feedback Queue
Fixed-delay ACK/NACK delivery with an optional TDD-style slot mask.
"""

from collections import deque
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from agents.base import HarqFeedback

# Slots marked D carry downlink data and receive feedback; S and U slots do neither.
SCHEDULABLE = "D"


class HarqConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    delay: int = Field(5, ge=0)
    slot_mask: Optional[str] = None

    @field_validator("slot_mask")
    @classmethod
    def _check_mask(cls, v):
        if v is None:
            return v
        v = v.strip().upper()
        if not v or set(v) - set("DSU"):
            raise ValueError("slot_mask is a non-empty pattern over D, S and U")
        if SCHEDULABLE not in v:
            raise ValueError("slot_mask has no schedulable slot")
        return v


class HarqQueue:
    """
    FIFO of in-flight transmissions.

    Feedback for slot t falls due at t + delay and is delivered at the first
    open slot at or after that.
    """

    def __init__(self, delay: int, slot_mask: Optional[str] = None):
        self.delay = delay
        self.slot_mask = slot_mask
        self.pending = deque()

    def is_open(self, slot: int) -> bool:
        if self.slot_mask is None:
            return True
        return self.slot_mask[slot % len(self.slot_mask)] == SCHEDULABLE

    def push(self, slot: int, mcs: int, tbs: int, nack: bool) -> None:
        self.pending.append((slot + self.delay, HarqFeedback(slot=slot, mcs=mcs, tbs=tbs, nack=bool(nack))))

    def pop_due(self, slot: int) -> list:
        delivered = []
        if not self.is_open(slot):
            return delivered
        while self.pending and self.pending[0][0] <= slot:
            delivered.append(self.pending.popleft()[1])
        return delivered

    def drain(self) -> list:
        """Everything still in flight, in transmission order."""
        delivered = [fb for _, fb in self.pending]
        self.pending.clear()
        return delivered

    def __len__(self):
        return len(self.pending)
