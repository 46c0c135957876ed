"""
Teacher Agent
Piece-wise linear SINR time series fitted to past ACK/NACK feedback by
minimizing binary cross-entropy plus a total-variation penalty, knot count
chosen by cross-validation, and distillation of the student learning rate.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from errors import FitError, SplineSpanError
from phy.blermodel import DEFAULT_BLER_CLIP, BlerTable

logger = logging.getLogger(__name__)

DEFAULT_KNOT_CANDIDATES = (2, 3, 5, 9)
DEFAULT_EPS_GRID = tuple(round(0.1 * k, 1) for k in range(1, 31))


@dataclass
class HistoryBatch:
    """
    Delivered feedback with the sigmoid parameters of its (MCS, TBS).

    `scales` are the clipped scales used by the student; `baseline` is the
    reported SINR the student offset was added to (zero without CQI).
    """
    slots: np.ndarray
    mcs: np.ndarray
    tbs: np.ndarray
    nack: np.ndarray
    centers: np.ndarray
    scales: np.ndarray
    baseline: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.slots) < 0):
            raise FitError("history slots must be non-decreasing")

    @classmethod
    def from_records(cls, records, table: BlerTable) -> "HistoryBatch":
        """
        Build a batch from records exposing slot, mcs, tbs, nack and optionally
        reported_sinr.
        """
        records = list(records)
        centers, scales, baseline = [], [], []
        for r in records:
            e = table.entry(r.mcs, r.tbs)
            centers.append(e.center)
            scales.append(min(max(e.scale, table.scale_clip[0]), table.scale_clip[1]))
            baseline.append(getattr(r, "reported_sinr", 0.0) or 0.0)
        return cls(
            slots=np.array([r.slot for r in records], dtype=float),
            mcs=np.array([r.mcs for r in records], dtype=int),
            tbs=np.array([r.tbs for r in records], dtype=int),
            nack=np.array([float(r.nack) for r in records]),
            centers=np.array(centers, dtype=float),
            scales=np.array(scales, dtype=float),
            baseline=np.array(baseline, dtype=float),
        )

    def take(self, idx) -> "HistoryBatch":
        return HistoryBatch(self.slots[idx], self.mcs[idx], self.tbs[idx], self.nack[idx],
                            self.centers[idx], self.scales[idx], self.baseline[idx])

    def __len__(self):
        return len(self.slots)


@dataclass
class SplineModel:
    knots: np.ndarray
    theta: np.ndarray
    beta: float = 0.0

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if len(self.knots) < 2 or len(self.knots) != len(self.theta):
            raise FitError("a spline needs K >= 2 knots and one height per knot")
        if np.any(np.diff(self.knots) <= 0):
            raise FitError("knots must be strictly increasing")
        if not np.all(np.isfinite(self.theta)):
            raise FitError("knot heights must be finite")
        if self.beta < 0:
            raise FitError("beta must be non-negative")

    @property
    def n_knots(self) -> int:
        return len(self.knots)


@dataclass(frozen=True)
class GdParams:
    step: float = 0.5
    max_iters: int = 300
    tol: float = 1e-6
    max_halvings: int = 50


def uniform_knots(first: float, last: float, k: int) -> np.ndarray:
    if k < 2:
        raise FitError("K must be at least 2")
    if last <= first:
        raise FitError("history covers a single slot; cannot place knots")
    return np.linspace(first, last, k)


def _locate(knots: np.ndarray, slots) -> tuple:
    """Left knot index and interpolation weight toward the right knot."""
    slots = np.asarray(slots, dtype=float)
    if np.any(slots < knots[0]) or np.any(slots > knots[-1]):
        raise SplineSpanError(f"slots outside the knot span [{knots[0]}, {knots[-1]}]")
    idx = np.clip(np.searchsorted(knots, slots, side="right") - 1, 0, len(knots) - 2)
    w = (slots - knots[idx]) / (knots[idx + 1] - knots[idx])
    return idx, w


def basis_matrix(knots, slots) -> np.ndarray:
    """Triangle basis functions evaluated at `slots`, shape (N, K)."""
    knots = np.asarray(knots, dtype=float)
    idx, w = _locate(knots, slots)
    out = np.zeros((len(idx), len(knots)))
    rows = np.arange(len(idx))
    out[rows, idx] = 1.0 - w
    out[rows, idx + 1] += w
    return out


def spline_eval(model: SplineModel, i):
    """Spline value at slot(s) i; raises SplineSpanError outside the knot span."""
    idx, w = _locate(model.knots, i)
    value = model.theta[idx] * (1.0 - w) + model.theta[idx + 1] * w
    return float(value) if np.ndim(i) == 0 else value


def total_variation(theta, beta: float) -> float:
    return float(beta * np.sum(np.diff(theta) ** 2))


def total_variation_grad(theta, beta: float) -> np.ndarray:
    d = np.diff(theta)
    g = np.zeros_like(theta, dtype=float)
    g[1:] += 2.0 * beta * d
    g[:-1] -= 2.0 * beta * d
    return g


def _bce(gamma, batch: HistoryBatch):
    """Per-sample BCE and d BCE / d gamma."""
    z = (gamma - batch.centers) / batch.scales
    loss = batch.nack * np.logaddexp(0.0, z) + (1.0 - batch.nack) * np.logaddexp(0.0, -z)
    bler = expit(-z)
    return loss, (batch.nack - bler) / batch.scales


def _objective(theta, knots, beta, batch, located):
    idx, w = located
    gamma = theta[idx] * (1.0 - w) + theta[idx + 1] * w
    loss, dgamma = _bce(gamma, batch)
    k = len(theta)
    grad = np.bincount(idx, dgamma * (1.0 - w), minlength=k) + np.bincount(idx + 1, dgamma * w, minlength=k)
    return float(loss.sum()) + total_variation(theta, beta), grad + total_variation_grad(theta, beta)


def bce_loss_and_grad(model: SplineModel, batch: HistoryBatch):
    """Regularized BCE loss of the spline over the batch and its gradient in theta."""
    if len(batch) == 0:
        raise FitError("empty history batch")
    located = _locate(model.knots, batch.slots)
    return _objective(model.theta, model.knots, model.beta, batch, located)


def heldout_bce(model: SplineModel, batch: HistoryBatch) -> float:
    """Unregularized BCE of the model on a batch."""
    loss, _ = _bce(spline_eval(model, batch.slots), batch)
    return float(loss.sum())


def fit_teacher(batch: HistoryBatch, k: int, beta: float = 0.0, gd: GdParams = GdParams(),
                init_value: float = 0.0, span=None, loss_log: list = None) -> SplineModel:
    """
    Batch gradient descent on the knot heights.

    Each iteration starts from `gd.step` and halves it until the loss strictly
    decreases; stops when the gradient sup-norm falls below `gd.tol`, when no
    decreasing step exists, or after `gd.max_iters` iterations.

    Args:
        span: (first, last) slot covered by the knots; defaults to the batch span.
        loss_log: if given, receives the initial loss and every accepted loss.
    """
    if len(batch) < k:
        raise FitError(f"history of {len(batch)} feedbacks is shorter than K={k}")
    first, last = span if span is not None else (batch.slots[0], batch.slots[-1])
    knots = uniform_knots(first, last, k)
    located = _locate(knots, batch.slots)

    theta = np.full(k, float(init_value))
    loss, grad = _objective(theta, knots, beta, batch, located)
    if not np.isfinite(loss):
        raise FitError("non-finite teacher loss at initialization")
    if loss_log is not None:
        loss_log.append(loss)

    it = 0
    for it in range(gd.max_iters):
        if np.max(np.abs(grad)) < gd.tol:
            break
        step = gd.step
        for _ in range(gd.max_halvings):
            candidate = theta - step * grad
            c_loss, c_grad = _objective(candidate, knots, beta, batch, located)
            if np.isfinite(c_loss) and c_loss < loss:
                break
            step *= 0.5
        else:
            break
        theta, loss, grad = candidate, c_loss, c_grad
        if loss_log is not None:
            loss_log.append(loss)

    if not np.isfinite(loss):
        raise FitError("teacher loss is not finite")
    logger.debug("teacher K=%d: loss %.4f after %d iterations", k, loss, it + 1)
    return SplineModel(knots, theta, beta)


def select_knots_cv(batch: HistoryBatch, candidates, beta: float = 0.0, gd: GdParams = GdParams(),
                    init_value: float = 0.0) -> int:
    """
    Knot count minimizing held-out BCE: fit on even-indexed feedbacks, score on
    odd-indexed ones. Ties go to the smaller K.
    """
    candidates = sorted(set(int(k) for k in candidates))
    if len(candidates) == 1:
        return candidates[0]
    train = batch.take(slice(0, None, 2))
    test = batch.take(slice(1, None, 2))
    span = (batch.slots[0], batch.slots[-1])

    best_k, best_loss = None, np.inf
    for k in candidates:
        if len(train) < k:
            logger.debug("skipping K=%d: only %d training feedbacks", k, len(train))
            continue
        model = fit_teacher(train, k, beta, gd, init_value=init_value, span=span)
        loss = heldout_bce(model, test)
        logger.debug("cv K=%d: held-out BCE %.4f", k, loss)
        if loss < best_loss:
            best_k, best_loss = k, loss
    if best_k is None:
        raise FitError("history too short for every knot candidate")
    return best_k


def replay_student(batch: HistoryBatch, eps_grid, start: float, bler_clip=DEFAULT_BLER_CLIP) -> np.ndarray:
    """
    Student recursion replayed over the batch for every learning rate.

    Returns the offset held before each feedback is absorbed, shape (N, len(eps_grid)).
    """
    eps = np.asarray(eps_grid, dtype=float)
    g = np.full(len(eps), float(start))
    out = np.empty((len(batch), len(eps)))
    for i in range(len(batch)):
        out[i] = g
        s = batch.scales[i]
        p = np.clip(expit((batch.centers[i] - batch.baseline[i] - g) / s), bler_clip[0], bler_clip[1])
        g = g + eps * (p - batch.nack[i]) / s
    return out


def distill_learning_rate(batch: HistoryBatch, model: SplineModel, eps_grid,
                          bler_clip=DEFAULT_BLER_CLIP) -> float:
    """
    Learning rate whose student replay best matches the teacher (least squares
    over the batch). The replay starts from the teacher's value at the first
    feedback; ties go to the smaller learning rate.
    """
    grid = np.sort(np.asarray(eps_grid, dtype=float))
    if grid.size == 0:
        raise FitError("empty learning-rate grid")
    teacher = spline_eval(model, batch.slots)
    start = teacher[0] - batch.baseline[0]
    student = batch.baseline[:, None] + replay_student(batch, grid, start, bler_clip)
    sse = np.sum((teacher[:, None] - student) ** 2, axis=0)
    return float(grid[int(np.argmin(sse))])


@dataclass(frozen=True)
class DistillResult:
    epsilon: float
    n_knots: int
    model: SplineModel


def distill(batch: HistoryBatch, eps_grid=DEFAULT_EPS_GRID, knot_candidates=DEFAULT_KNOT_CANDIDATES,
            beta: float = 0.0, gd: GdParams = GdParams(), init_value: float = 0.0,
            bler_clip=DEFAULT_BLER_CLIP) -> DistillResult:
    """Cross-validate K, fit the teacher on the whole batch, then pick the learning rate."""
    k = select_knots_cv(batch, knot_candidates, beta, gd, init_value)
    model = fit_teacher(batch, k, beta, gd, init_value=init_value)
    eps = distill_learning_rate(batch, model, eps_grid, bler_clip)
    return DistillResult(eps, k, model)
