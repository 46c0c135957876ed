"""
Orchestrator
Uses LangGraph to chain the steps of one simulation run:
  Scenario file → Load → Simulate → Metrics → Write outputs → Log
"""

from typing import Optional, TypedDict

from langgraph.graph import StateGraph, START, END

from db.audit import init_db, log_run
from sim.engine import simulate
from sim.outputs import write_run_outputs
from sim.scenario import load_scenario


class RunState(TypedDict, total=False):
    scenario_path: str
    overrides: list
    adapter: Optional[str]
    seed: Optional[int]
    out_dir: str
    quiet: bool
    scenario: object
    result: object
    files: dict


def _say(state: RunState, message: str):
    if not state.get("quiet"):
        print(message)


def load_node(state: RunState) -> dict:
    _say(state, "  [1/5] Loading scenario...")
    scenario = load_scenario(state["scenario_path"], state.get("overrides"))
    if state.get("adapter"):
        scenario = scenario.with_adapter(state["adapter"])
    if state.get("seed") is not None:
        scenario = scenario.with_seed(state["seed"])
    _say(state, f"        → {scenario.name}: {scenario.slots} slots, {scenario.channel.kind} channel, "
                f"adapter {scenario.adapter.default}, seed {scenario.seed}")
    return {"scenario": scenario}


def simulate_node(state: RunState) -> dict:
    _say(state, "  [2/5] Simulating...")
    result = simulate(state["scenario"])
    _say(state, f"        → {result.metrics.transmissions} transmissions, {result.metrics.nacks} NACKs")
    return {"result": result}


def metrics_node(state: RunState) -> dict:
    _say(state, "  [3/5] Computing metrics...")
    m = state["result"].metrics
    bler = "n/a" if m.long_term_bler is None else f"{m.long_term_bler:.4f}"
    _say(state, f"        → BLER {bler}, normalized TP {m.normalized_tp:.1f}")
    return {}


def write_node(state: RunState) -> dict:
    _say(state, "  [4/5] Writing outputs...")
    files = write_run_outputs(state["result"], state["out_dir"])
    _say(state, f"        → {len(files)} files in {state['out_dir']}")
    return {"files": files}


def log_node(state: RunState) -> dict:
    _say(state, "  [5/5] Logging to audit database...")
    result = state["result"]
    init_db()
    log_run("run", scenario=result.scenario.name, adapter=result.adapter, seed=result.scenario.seed,
            metrics=result.metrics.to_dict(), output_dir=state["out_dir"])
    _say(state, "        → Logged.")
    return {}


def build_pipeline():
    """Build and compile the LangGraph run pipeline."""
    graph = StateGraph(RunState)

    graph.add_node("load", load_node)
    graph.add_node("simulate", simulate_node)
    graph.add_node("metrics", metrics_node)
    graph.add_node("write", write_node)
    graph.add_node("log", log_node)

    graph.add_edge(START, "load")
    graph.add_edge("load", "simulate")
    graph.add_edge("simulate", "metrics")
    graph.add_edge("metrics", "write")
    graph.add_edge("write", "log")
    graph.add_edge("log", END)

    return graph.compile()


pipeline = build_pipeline()
