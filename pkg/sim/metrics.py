"""
Run Metrics
Long-term and sliding BLER, normalized throughput, mean scheduled SE and
adaptation time computed from a slot trace.
"""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from phy.blermodel import McsTable


@dataclass
class Metrics:
    slots: int = 0
    transmissions: int = 0
    nacks: int = 0
    long_term_bler: Optional[float] = None
    first_round_tp: float = 0.0
    mean_se: Optional[float] = None
    normalized_tp: float = 0.0
    adaptation_time: Optional[int] = None
    bler_rms_deviation: Optional[float] = None
    sliding_bler: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        """Scalar metrics only; the sliding series goes to its own file."""
        out = asdict(self)
        out.pop("sliding_bler")
        return out


def _nack_array(trace) -> np.ndarray:
    """NACK flag per slot, NaN where nothing was transmitted."""
    return np.array([np.nan if r.nack is None else float(r.nack) for r in trace], dtype=float)


def long_term_bler(trace) -> Optional[float]:
    nacks = _nack_array(trace)
    sent = ~np.isnan(nacks)
    if not sent.any():
        return None
    return float(np.mean(nacks[sent]))


def sliding_bler(trace, window: int = 50) -> list:
    """
    NACK fraction over the transmissions of the last `window` slots, as
    (slot, value) pairs. Points start once a full window is available and are
    omitted where the window holds no transmission; a window longer than the
    trace yields a single value over the whole trace.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    n = len(trace)
    if n == 0:
        return []
    nacks = _nack_array(trace)
    sent = ~np.isnan(nacks)
    if window > n:
        return [(trace[-1].slot, float(np.mean(nacks[sent])))] if sent.any() else []

    csum_sent = np.concatenate(([0], np.cumsum(sent)))
    csum_nack = np.concatenate(([0.0], np.cumsum(np.where(sent, nacks, 0.0))))
    counts = csum_sent[window:] - csum_sent[:-window]
    errors = csum_nack[window:] - csum_nack[:-window]
    out = []
    for i in np.flatnonzero(counts):
        out.append((trace[i + window - 1].slot, float(errors[i] / counts[i])))
    return out


def mean_se(trace, mcs_table: McsTable) -> Optional[float]:
    se = [mcs_table.se(r.mcs) for r in trace if r.mcs is not None]
    return float(np.mean(se)) if se else None


def first_round_tp(trace) -> float:
    """Bits delivered on the first transmission attempt, per slot."""
    if not trace:
        return 0.0
    return float(sum(r.tbs for r in trace if r.nack is not None and not r.nack)) / len(trace)


def normalized_tp(trace, mcs_table: McsTable) -> float:
    """First-round throughput per slot scaled by mean scheduled SE over the smallest SE of the table."""
    se = mean_se(trace, mcs_table)
    if se is None:
        return 0.0
    return first_round_tp(trace) * se / mcs_table.min_se


def adaptation_time(trace, switch_slot: Optional[int], threshold_db: float = 1.0) -> Optional[int]:
    """
    Slots from `switch_slot` until the estimate is within `threshold_db` of the
    true SINR. Censored at the remaining trace length when never reached.
    """
    if switch_slot is None or switch_slot >= len(trace):
        return None
    for r in trace[switch_slot:]:
        if r.est_sinr_db is not None and abs(r.est_sinr_db - r.true_sinr_db) < threshold_db:
            return r.slot - switch_slot
    return len(trace) - switch_slot


def bler_rms_deviation(series, target: float) -> Optional[float]:
    if not series:
        return None
    values = np.array([v for _, v in series])
    return float(np.sqrt(np.mean((values - target) ** 2)))


def compute_metrics(trace, mcs_table: McsTable, window: int = 50, target: float = 0.1,
                    switch_slot: Optional[int] = None, threshold_db: float = 1.0) -> Metrics:
    if not trace:
        return Metrics()
    series = sliding_bler(trace, window)
    sent = [r for r in trace if r.nack is not None]
    return Metrics(
        slots=len(trace),
        transmissions=len(sent),
        nacks=int(sum(1 for r in sent if r.nack)),
        long_term_bler=long_term_bler(trace),
        first_round_tp=first_round_tp(trace),
        mean_se=mean_se(trace, mcs_table),
        normalized_tp=normalized_tp(trace, mcs_table),
        adaptation_time=adaptation_time(trace, switch_slot, threshold_db),
        bler_rms_deviation=bler_rms_deviation(series, target),
        sliding_bler=series,
    )
