"""
Slot Engine
Runs one scenario slot by slot: deliver due HARQ feedback, let the adapter
pick an MCS from its stale estimate, draw the outcome from the true SINR and
queue it for delayed delivery.
"""

import logging
from dataclasses import astuple, dataclass, fields
from typing import Optional

import numpy as np

from agents.base import SlotContext
from agents.olla import OllaAdapter
from agents.oracle import OracleAdapter
from agents.salad import SaladAdapter
from errors import ConfigError
from phy.blermodel import BlerTable, default_tables
from sim.channel import cqi_schedule, trajectory
from sim.harq import HarqQueue
from sim.metrics import Metrics, compute_metrics
from sim.scenario import ADAPTERS, Scenario

logger = logging.getLogger(__name__)

PROBE_STREAM = 1


@dataclass(frozen=True)
class SlotTrace:
    slot: int
    true_sinr_db: float
    est_sinr_db: Optional[float]
    mcs: Optional[int] = None
    tbs: Optional[int] = None
    nack: Optional[bool] = None
    instant_target: Optional[float] = None
    bias_ratio: Optional[float] = None
    probe_flag: Optional[bool] = None
    integral_error: Optional[float] = None

    def as_row(self) -> tuple:
        return astuple(self)


TRACE_FIELDS = tuple(f.name for f in fields(SlotTrace))


@dataclass
class RunResult:
    scenario: Scenario
    adapter: str
    trace: list
    metrics: Metrics
    adapter_obj: object = None


def nack_from_uniform(table: BlerTable, u: int, gamma_true: float, b: int, uniform: float) -> bool:
    """NACK iff the uniform falls below the unclipped BLER at the true SINR."""
    return bool(uniform < table.bler(u, gamma_true, b))


def draw_outcome(table: BlerTable, u: int, gamma_true: float, b: int, rng) -> bool:
    """Bernoulli NACK draw with probability bler(u, gamma_true, b); one uniform per call."""
    return nack_from_uniform(table, u, gamma_true, b, rng.random())


def channel_streams(seed: int):
    """
    Channel generator seeded by the scenario seed and an independent probing
    generator. Adapters never touch the channel stream.
    """
    return np.random.default_rng(seed), np.random.default_rng([seed, PROBE_STREAM])


def make_adapter(scenario: Scenario, name: str, table: BlerTable, probe_rng=None):
    section = scenario.adapter
    if name == "olla":
        return OllaAdapter(section.olla_config(), table)
    if name == "salad":
        return SaladAdapter(section.salad_config(), table, rng=probe_rng)
    if name == "oracle":
        return OracleAdapter(table, target=section.oracle.target, selector=section.oracle.selector)
    raise ConfigError(f"unknown adapter {name!r}; choose from {', '.join(ADAPTERS)}")


def simulate(scenario: Scenario, adapter_name: Optional[str] = None, table: BlerTable = None,
             adapter=None) -> RunResult:
    """
    Run a scenario and return its trace and metrics.

    The per-slot outcome uniforms are drawn up front from the channel stream,
    so every adapter sees the same channel realization for a given seed.
    Feedback still in flight after the last slot is handed to the adapter
    without adding trace rows.
    """
    name = adapter_name or scenario.adapter.default
    if table is None:
        _, table = default_tables()
    n = scenario.slots

    channel_rng, probe_rng = channel_streams(scenario.seed)
    uniforms = channel_rng.random(n)
    true_sinr = trajectory(scenario.channel, n, channel_rng)
    reports = cqi_schedule(true_sinr, scenario.channel.cqi)
    if adapter is None:
        adapter = make_adapter(scenario, name, table, probe_rng)
    queue = HarqQueue(scenario.harq.delay, scenario.harq.slot_mask)

    trace = []
    for t in range(n):
        scheduled = queue.is_open(t)
        tbs = scenario.traffic.tbs_at(t) if scheduled else None
        gamma = float(true_sinr[t])
        ctx = SlotContext(slot=t, scheduled=scheduled, tbs=tbs, feedbacks=queue.pop_due(t),
                          reported_sinr=reports.get(t), true_sinr=gamma)
        step = adapter.step(ctx)

        nack = None
        mcs = None
        if step.decision is not None:
            mcs = step.decision.mcs
            nack = nack_from_uniform(table, mcs, gamma, tbs, uniforms[t])
            queue.push(t, mcs, tbs, nack)
        trace.append(SlotTrace(
            slot=t,
            true_sinr_db=gamma,
            est_sinr_db=step.estimate,
            mcs=mcs,
            tbs=tbs if mcs is not None else None,
            nack=nack,
            instant_target=step.instant_target,
            bias_ratio=step.bias_ratio,
            probe_flag=step.probe_flag,
            integral_error=step.integral_error,
        ))
    adapter.finish(queue.drain())

    metrics = compute_metrics(
        trace, table.mcs_table,
        window=scenario.metrics.window,
        target=scenario.with_adapter(name).target,
        switch_slot=scenario.switch_slot,
        threshold_db=scenario.metrics.threshold_db,
    )
    logger.debug("%s/%s seed %d: %d slots, BLER %s", scenario.name, name, scenario.seed, n, metrics.long_term_bler)
    return RunResult(scenario=scenario, adapter=name, trace=trace, metrics=metrics, adapter_obj=adapter)


def run_scenario(scenario: Scenario, adapter_name: Optional[str] = None, table: BlerTable = None):
    """(trace, metrics) of one run."""
    result = simulate(scenario, adapter_name, table)
    return result.trace, result.metrics
