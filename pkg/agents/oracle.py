"""
Oracle Agent
Selects the MCS from the true SINR; the reference the other agents are compared to.
"""

from agents.base import AdapterStep, SlotContext
from agents.illa import SELECTORS
from phy.blermodel import BlerTable


class OracleAdapter:
    name = "oracle"

    def __init__(self, table: BlerTable, target: float = 0.1, selector: str = "illa"):
        self.table = table
        self.target = target
        self.select = SELECTORS[selector]

    def step(self, ctx: SlotContext) -> AdapterStep:
        if not ctx.scheduled:
            return AdapterStep(estimate=ctx.true_sinr)
        decision = self.select(self.table, ctx.true_sinr, self.target, ctx.tbs)
        return AdapterStep(estimate=ctx.true_sinr, decision=decision, instant_target=self.target)

    def finish(self, feedbacks) -> None:
        pass
