"""
Tuning Objective
SALAD parameter tuning problem: bounded free parameters, normalized
throughput / BLER-deviation objective over common random numbers, and the
Nelder-Mead driver.
"""

import logging
from dataclasses import dataclass
from functools import partial

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from agents.salad import SaladConfig, load_profile
from errors import ConfigError
from sim.engine import simulate
from sim.scenario import load_scenario, read_yaml, resolve_relative
from tuning.nelder_mead import nelder_mead

logger = logging.getLogger(__name__)

PROFILE_KEYS = ("epsilon", "rho", "window", "p_probe", "tau_probe", "k_e", "tau")


class Weights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    w_tp: float = Field(1.0, ge=0.0)
    w_bler: float = Field(1.0, ge=0.0)

    @model_validator(mode="after")
    def _check(self):
        if self.w_tp == 0 and self.w_bler == 0:
            raise ValueError("w_tp and w_bler cannot both be zero")
        return self


class TuningProblem(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    scenarios: list[str]
    seeds: list[int] = Field(default_factory=lambda: [0])
    start_profile: str = "default"
    start: dict[str, float] = Field(default_factory=dict)
    bounds: dict[str, tuple[float, float]]
    weights: Weights = Field(default_factory=Weights)
    max_iters: int = Field(25, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if not self.scenarios or not self.seeds:
            raise ValueError("a tuning problem needs scenarios and seeds")
        if not self.bounds:
            raise ValueError("no free parameters")
        for name, (low, high) in self.bounds.items():
            field = SaladConfig.model_fields.get(name)
            if field is None or field.annotation not in (int, float):
                raise ValueError(f"{name!r} is not a numeric SALAD parameter")
            if not (np.isfinite(low) and np.isfinite(high)) or low >= high:
                raise ValueError(f"bounds of {name!r} must be finite with low < high")
        return self

    @property
    def names(self) -> list:
        return list(self.bounds)

    @property
    def box(self) -> np.ndarray:
        return np.array([self.bounds[n] for n in self.names], dtype=float)


@dataclass(frozen=True)
class Normalization:
    tp: float = 1.0
    bler: float = 1.0


def load_problem(path: str):
    """Problem file plus its scenarios, loaded relative to the file."""
    raw = read_yaml(path)
    try:
        problem = TuningProblem(**raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(f"{path}: {'.'.join(str(p) for p in first['loc'])}: {first['msg']}") from e
    scenarios = [load_scenario(resolve_relative(s, path)) for s in problem.scenarios]
    return problem, scenarios


def to_params(x, problem: TuningProblem) -> dict:
    """Clamp a vector to the box and name it; integer fields are rounded."""
    x = np.clip(np.asarray(x, dtype=float), problem.box[:, 0], problem.box[:, 1])
    params = {}
    for name, value in zip(problem.names, x):
        if SaladConfig.model_fields[name].annotation is int:
            params[name] = int(round(value))
        else:
            params[name] = float(value)
    return params


def start_point(problem: TuningProblem) -> np.ndarray:
    base = load_profile(problem.start_profile)
    return np.array([problem.start.get(n, getattr(base, n)) for n in problem.names], dtype=float)


def with_salad_params(scenario, params: dict):
    salad = {**scenario.adapter.salad, **params}
    adapter = scenario.adapter.model_copy(update={"salad": salad, "default": "salad"})
    return scenario.model_copy(update={"adapter": adapter})


def run_terms(params: dict, scenarios, seeds) -> list:
    """(normalized TP, mean squared sliding-BLER deviation) per scenario and seed."""
    terms = []
    for scenario in scenarios:
        tuned = with_salad_params(scenario, params)
        for seed in seeds:
            metrics = simulate(tuned.with_seed(seed), "salad").metrics
            deviation = metrics.bler_rms_deviation or 0.0
            terms.append((metrics.normalized_tp, deviation ** 2))
    return terms


def calibrate(problem: TuningProblem, scenarios, x0=None) -> Normalization:
    """Scale both objective terms by their magnitude at the starting point."""
    if x0 is None:
        x0 = start_point(problem)
    terms = np.array(run_terms(to_params(x0, problem), scenarios, problem.seeds))
    tp, bler = terms.mean(axis=0)
    return Normalization(tp=float(tp) if tp > 0 else 1.0, bler=float(bler) if bler > 0 else 1.0)


def objective(x, problem: TuningProblem, scenarios, norm: Normalization = Normalization()) -> float:
    """Mean over scenarios and seeds of w_tp * TP / norm - w_bler * MSD / norm (to maximize)."""
    terms = np.array(run_terms(to_params(x, problem), scenarios, problem.seeds))
    w = problem.weights
    return float(np.mean(w.w_tp * terms[:, 0] / norm.tp - w.w_bler * terms[:, 1] / norm.bler))


def tune(problem: TuningProblem, scenarios, max_iters=None, map_fn=map, callback=None):
    """
    Maximize the objective with Nelder-Mead from the start profile.

    Returns:
        (best params dict, NelderMeadResult, Normalization)
    """
    x0 = start_point(problem)
    norm = calibrate(problem, scenarios, x0)
    logger.info("objective normalization: tp=%.4g bler=%.4g", norm.tp, norm.bler)
    fun = partial(objective, problem=problem, scenarios=scenarios, norm=norm)
    result = nelder_mead(
        fun, x0, bounds=problem.box,
        max_iters=problem.max_iters if max_iters is None else max_iters,
        maximize=True, map_fn=map_fn, callback=callback,
    )
    return to_params(result.x, problem), result, norm


def best_params_document(problem: TuningProblem, params: dict) -> dict:
    """Tuned parameters merged into the start profile, in profile-file layout."""
    base = load_profile(problem.start_profile).model_dump(include=set(PROFILE_KEYS))
    return {"profiles": {"tuned": {**base, **params}}}
