"""
ILLA Agent
Inner-loop MCS selection from an SINR estimate and an instantaneous BLER target.
"""

from dataclasses import dataclass

import numpy as np

from phy.blermodel import BlerTable


@dataclass(frozen=True)
class IllaDecision:
    mcs: int
    predicted_bler: float
    feasible: bool


def _fallback(table: BlerTable, bler: np.ndarray) -> IllaDecision:
    # Nothing meets the target: the scheduler still needs an MCS.
    return IllaDecision(int(table.mcs_indices[0]), float(bler[0]), False)


def select_mcs_illa(table: BlerTable, gamma_est: float, target: float, b: int,
                    clip: bool = False) -> IllaDecision:
    """
    Largest MCS whose predicted BLER does not exceed the target.

    Args:
        table: sigmoid BLER table
        gamma_est: estimated SINR in dB
        target: BLER target in [0, 1]
        b: transport block size in bits
        clip: evaluate the clipped BLER instead of the raw sigmoid

    Returns:
        IllaDecision; the lowest MCS with feasible=False when no MCS qualifies.
    """
    bler = table.bler_vector(gamma_est, b, clipped=clip)
    feasible = np.flatnonzero(bler <= target)
    if feasible.size == 0:
        return _fallback(table, bler)
    pos = feasible[-1]
    return IllaDecision(int(table.mcs_indices[pos]), float(bler[pos]), True)


def select_mcs_maxse(table: BlerTable, gamma_est: float, target: float, b: int,
                     clip: bool = False) -> IllaDecision:
    """
    MCS maximizing the expected SE, SE(u) * (1 - BLER), subject to BLER <= target.
    Ties go to the lower MCS.
    """
    bler = table.bler_vector(gamma_est, b, clipped=clip)
    ok = bler <= target
    if not ok.any():
        return _fallback(table, bler)
    expected_se = np.where(ok, table.mcs_table.se_values * (1.0 - bler), -np.inf)
    pos = int(np.argmax(expected_se))
    return IllaDecision(int(table.mcs_indices[pos]), float(bler[pos]), True)


SELECTORS = {
    "illa": select_mcs_illa,
    "maxse": select_mcs_maxse,
}
