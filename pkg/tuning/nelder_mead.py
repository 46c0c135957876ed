"""
Nelder-Mead Simplex
Bounded derivative-free optimizer: reflection, expansion, contraction and
shrink with candidate vertices clamped to the box, best-seen tracking and a
per-iteration log.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

REFLECT, EXPAND, CONTRACT, SHRINK = 1.0, 2.0, 0.5, 0.5
INITIAL_STEP_FRACTION = 0.05


@dataclass
class IterationRecord:
    iteration: int
    operation: str
    best_value: float
    best_x: tuple
    n_evals: int


@dataclass
class NelderMeadResult:
    x: np.ndarray
    value: float
    n_iters: int
    n_evals: int
    log: list = field(default_factory=list)


class Simplex:
    """
    K+1 vertices with their objective values, kept in minimization sign.

    `evaluate_many` is the map used for batches of vertices (the initial
    simplex and shrink steps), so those can run concurrently.
    """

    def __init__(self, fun: Callable, x0, steps, bounds=None, sign: float = 1.0, map_fn=map):
        self.fun = fun
        self.sign = sign
        self.map_fn = map_fn
        self.bounds = None if bounds is None else np.asarray(bounds, dtype=float)
        self.n_evals = 0
        self.best_x = None
        self.best_f = np.inf

        x0 = self.clamp(np.asarray(x0, dtype=float))
        vertices = [x0]
        for i, step in enumerate(steps):
            v = x0.copy()
            v[i] += step
            if self.bounds is not None and v[i] > self.bounds[i, 1]:
                v[i] = x0[i] - step
            vertices.append(self.clamp(v))
        self.vertices = np.array(vertices)
        self.values = np.array(self.evaluate_many(self.vertices))

    def clamp(self, x: np.ndarray) -> np.ndarray:
        if self.bounds is None:
            return x
        return np.clip(x, self.bounds[:, 0], self.bounds[:, 1])

    def _track(self, x, f):
        if f < self.best_f:
            self.best_f, self.best_x = f, np.array(x, dtype=float)

    def evaluate(self, x) -> float:
        f = self.sign * float(self.fun(x))
        self.n_evals += 1
        self._track(x, f)
        return f

    def evaluate_many(self, xs) -> list:
        values = [self.sign * float(v) for v in self.map_fn(self.fun, [np.array(x) for x in xs])]
        for x, f in zip(xs, values):
            self.n_evals += 1
            self._track(x, f)
        return values

    def step(self) -> str:
        order = np.argsort(self.values, kind="stable")
        self.vertices, self.values = self.vertices[order], self.values[order]
        best, second, worst = self.values[0], self.values[-2], self.values[-1]
        centroid = self.vertices[:-1].mean(axis=0)

        xr = self.clamp(centroid + REFLECT * (centroid - self.vertices[-1]))
        fr = self.evaluate(xr)
        if fr < best:
            xe = self.clamp(centroid + EXPAND * (xr - centroid))
            fe = self.evaluate(xe)
            if fe < fr:
                self._replace_worst(xe, fe)
                return "expand"
            self._replace_worst(xr, fr)
            return "reflect"
        if fr < second:
            self._replace_worst(xr, fr)
            return "reflect"

        if fr < worst:
            xc = self.clamp(centroid + CONTRACT * (xr - centroid))
            kind = "contract_out"
        else:
            xc = self.clamp(centroid + CONTRACT * (self.vertices[-1] - centroid))
            kind = "contract_in"
        fc = self.evaluate(xc)
        if fc < min(fr, worst):
            self._replace_worst(xc, fc)
            return kind

        x_best = self.vertices[0]
        shrunk = [self.clamp(x_best + SHRINK * (v - x_best)) for v in self.vertices[1:]]
        self.vertices[1:] = shrunk
        self.values[1:] = self.evaluate_many(shrunk)
        return "shrink"

    def _replace_worst(self, x, f):
        self.vertices[-1] = x
        self.values[-1] = f


def initial_steps(x0, bounds=None, fraction: float = INITIAL_STEP_FRACTION) -> np.ndarray:
    """Per-axis simplex offsets: a fraction of the box width, or of |x0| without bounds."""
    x0 = np.asarray(x0, dtype=float)
    if bounds is not None:
        b = np.asarray(bounds, dtype=float)
        return fraction * (b[:, 1] - b[:, 0])
    return np.where(x0 != 0, fraction * np.abs(x0), 0.00025)


def nelder_mead(fun: Callable, x0, bounds=None, max_iters: int = 25, maximize: bool = False,
                steps=None, tol: float = 0.0, map_fn=map,
                callback: Optional[Callable] = None) -> NelderMeadResult:
    """
    Optimize `fun` from `x0` within an optional box.

    Args:
        bounds: sequence of (low, high) per coordinate; candidates are clamped.
        max_iters: simplex iterations; 0 evaluates and returns x0 only.
        maximize: maximize instead of minimize.
        tol: stop early when the spread of vertex values drops below it.
        map_fn: map used to evaluate vertex batches (e.g. an executor's map).
        callback: called with each IterationRecord.

    Returns:
        NelderMeadResult with the best point seen over all evaluations.
    """
    sign = -1.0 if maximize else 1.0
    x0 = np.asarray(x0, dtype=float)
    if bounds is not None:
        b = np.asarray(bounds, dtype=float)
        if b.shape != (len(x0), 2) or not np.all(np.isfinite(b)) or np.any(b[:, 1] <= b[:, 0]):
            raise ValueError("bounds must be finite (low, high) pairs with low < high, one per coordinate")
        x0 = np.clip(x0, b[:, 0], b[:, 1])

    if max_iters <= 0:
        value = float(fun(x0))
        record = IterationRecord(0, "start", value, tuple(x0), 1)
        return NelderMeadResult(x0, value, 0, 1, [record])

    if steps is None:
        steps = initial_steps(x0, bounds)
    simplex = Simplex(fun, x0, steps, bounds, sign, map_fn)

    log = [IterationRecord(0, "start", sign * simplex.best_f, tuple(simplex.best_x), simplex.n_evals)]
    if callback:
        callback(log[-1])

    it = 0
    for it in range(1, max_iters + 1):
        op = simplex.step()
        record = IterationRecord(it, op, sign * simplex.best_f, tuple(simplex.best_x), simplex.n_evals)
        log.append(record)
        logger.debug("nelder-mead %d %s best=%.6g", it, op, record.best_value)
        if callback:
            callback(record)
        if tol > 0 and np.std(simplex.values) < tol:
            break

    return NelderMeadResult(simplex.best_x, sign * simplex.best_f, it, simplex.n_evals, log)
