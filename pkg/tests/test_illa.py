"""Tests for inner-loop MCS selection."""

import numpy as np
import pytest

from agents.illa import SELECTORS, select_mcs_illa, select_mcs_maxse


class TestIlla:
    def test_largest_feasible_mcs(self, bler_table):
        decision = select_mcs_illa(bler_table, 10.0, 0.1, 2000)
        bler = bler_table.bler_vector(10.0, 2000)
        feasible = [int(u) for u, p in zip(bler_table.mcs_indices, bler) if p <= 0.1]
        assert decision.feasible
        assert decision.mcs == max(feasible)
        assert decision.predicted_bler <= 0.1

    def test_next_mcs_exceeds_target(self, bler_table):
        decision = select_mcs_illa(bler_table, 10.0, 0.1, 2000)
        assert bler_table.bler(decision.mcs + 1, 10.0, 2000) > 0.1

    def test_boundary_is_feasible(self, bler_table):
        gamma = bler_table.snr_for_bler(14, 0.1, 100) + 1e-9
        assert select_mcs_illa(bler_table, gamma, 0.1, 100).mcs == 14

    def test_infeasible_falls_back_to_lowest(self, bler_table, mcs_table):
        decision = select_mcs_illa(bler_table, -40.0, 0.1, 2000)
        assert decision.mcs == mcs_table.lowest
        assert not decision.feasible

    def test_monotone_in_estimate(self, bler_table):
        picks = [select_mcs_illa(bler_table, g, 0.1, 2000).mcs for g in np.linspace(-5, 25, 61)]
        assert picks == sorted(picks)

    def test_target_one_takes_highest(self, bler_table, mcs_table):
        assert select_mcs_illa(bler_table, 0.0, 1.0, 2000).mcs == mcs_table.highest

    def test_clip_flag_changes_feasibility(self, bler_table):
        # Far below every center: raw BLER is 1 for all MCS, clipped BLER is 0.99.
        assert not select_mcs_illa(bler_table, -40.0, 0.995, 2000).feasible
        assert select_mcs_illa(bler_table, -40.0, 0.995, 2000, clip=True).feasible


class TestMaxSe:
    def test_never_above_illa(self, bler_table):
        for gamma in np.linspace(-5, 25, 31):
            assert select_mcs_maxse(bler_table, gamma, 0.1, 2000).mcs <= select_mcs_illa(bler_table, gamma, 0.1, 2000).mcs

    def test_maximizes_expected_se(self, bler_table, mcs_table):
        gamma = 12.0
        decision = select_mcs_maxse(bler_table, gamma, 0.1, 2000)
        bler = bler_table.bler_vector(gamma, 2000)
        best = max(mcs_table.se(int(u)) * (1 - p) for u, p in zip(bler_table.mcs_indices, bler) if p <= 0.1)
        assert mcs_table.se(decision.mcs) * (1 - decision.predicted_bler) == pytest.approx(best)

    def test_infeasible_falls_back_to_lowest(self, bler_table, mcs_table):
        decision = select_mcs_maxse(bler_table, -40.0, 0.1, 2000)
        assert decision.mcs == mcs_table.lowest and not decision.feasible

    def test_registry(self):
        assert SELECTORS["illa"] is select_mcs_illa
        assert SELECTORS["maxse"] is select_mcs_maxse
