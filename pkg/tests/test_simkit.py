"""Tests for the slot simulator: channel, HARQ queue, engine, metrics and outputs."""

import glob
import os

import numpy as np
import pytest

from agents.illa import select_mcs_illa
from errors import ConfigError
from sim.channel import ChannelConfig, CqiConfig, cqi_schedule, quantize, trajectory
from sim.engine import TRACE_FIELDS, SlotTrace, draw_outcome, nack_from_uniform, run_scenario, simulate
from sim.harq import HarqConfig, HarqQueue
from sim.metrics import adaptation_time, compute_metrics, first_round_tp, normalized_tp, sliding_bler
from sim.outputs import write_run_outputs, write_trace_csv
from sim.scenario import apply_overrides, build_scenario, load_scenario

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "config", "scenarios")


def fake_trace(nacks, mcs=0, tbs=2000, est=None, true=10.0):
    rows = []
    for t, n in enumerate(nacks):
        sent = n is not None
        rows.append(SlotTrace(
            slot=t, true_sinr_db=true, est_sinr_db=est[t] if est is not None else true,
            mcs=mcs if sent else None, tbs=tbs if sent else None, nack=n,
        ))
    return rows


class TestChannel:
    def test_step(self):
        config = ChannelConfig(kind="step", levels=[5.0, 15.0], switch_slots=[3])
        assert list(trajectory(config, 5)) == [5.0, 5.0, 5.0, 15.0, 15.0]

    def test_multi_step_needs_matching_levels(self):
        with pytest.raises(ValueError):
            ChannelConfig(kind="multi-step", levels=[5.0, 15.0], switch_slots=[3, 6])

    def test_chirp_starts_at_center(self):
        gamma = trajectory(ChannelConfig(kind="chirp", center=10.0, amplitude=5.0), 1000)
        assert gamma[0] == pytest.approx(10.0)
        assert gamma.min() >= 5.0 - 1e-9 and gamma.max() <= 15.0 + 1e-9

    def test_file_trace(self, tmp_path):
        path = tmp_path / "sinr.csv"
        path.write_text("sinr_db\n1.5\n2.5\n# note\n3.5\n")
        gamma = trajectory(ChannelConfig(kind="file-trace", path=str(path)), 3)
        assert list(gamma) == [1.5, 2.5, 3.5]

    def test_file_trace_too_short(self, tmp_path):
        path = tmp_path / "sinr.csv"
        path.write_text("1.0\n2.0\n")
        with pytest.raises(ConfigError):
            trajectory(ChannelConfig(kind="file-trace", path=str(path)), 5)

    def test_jitter_needs_generator(self):
        with pytest.raises(ConfigError):
            trajectory(ChannelConfig(jitter_db=1.0), 10)

    def test_cqi_schedule(self):
        gamma = np.arange(50, dtype=float) / 10.0
        reports = cqi_schedule(gamma, CqiConfig(period=20, delay=4, step_db=1.0))
        assert sorted(reports) == [4, 24, 44]
        assert reports[24] == quantize(2.0, 1.0) == 2.0

    def test_no_cqi(self):
        assert cqi_schedule(np.zeros(10), None) == {}


class TestHarq:
    def test_fixed_delay(self):
        q = HarqQueue(delay=5)
        q.push(0, 10, 2000, True)
        assert q.pop_due(4) == []
        (fb,) = q.pop_due(5)
        assert (fb.slot, fb.mcs, fb.nack) == (0, 10, True)

    def test_mask_defers_feedback(self):
        q = HarqQueue(delay=5, slot_mask="DDSUU")
        q.push(2, 3, 2000, False)
        assert all(q.pop_due(t) == [] for t in (7, 8, 9))
        assert [fb.slot for fb in q.pop_due(10)] == [2]

    def test_fifo_and_drain(self):
        q = HarqQueue(delay=2)
        for t in range(4):
            q.push(t, t, 2000, False)
        assert [fb.slot for fb in q.pop_due(3)] == [0, 1]
        assert [fb.slot for fb in q.drain()] == [2, 3]
        assert len(q) == 0

    def test_bad_mask(self):
        with pytest.raises(ValueError):
            HarqConfig(slot_mask="DDX")
        with pytest.raises(ValueError):
            HarqConfig(slot_mask="SUU")


class TestOutcome:
    def test_nack_against_bler(self, bler_table):
        center = bler_table.entry(10, 2000).center
        assert nack_from_uniform(bler_table, 10, center, 2000, 0.49) is True
        assert nack_from_uniform(bler_table, 10, center, 2000, 0.51) is False

    def test_draw_frequency(self, bler_table):
        rng = np.random.default_rng(8)
        gamma = bler_table.snr_for_bler(10, 0.3, 2000)
        draws = [draw_outcome(bler_table, 10, gamma, 2000, rng) for _ in range(20_000)]
        assert np.mean(draws) == pytest.approx(0.3, abs=0.015)


class TestEngine:
    def test_one_row_per_slot(self, make_scenario):
        result = simulate(make_scenario(adapter={"default": "olla"}))
        assert [r.slot for r in result.trace] == list(range(200))

    def test_run_scenario(self, make_scenario):
        trace, metrics = run_scenario(make_scenario(slots=50), "oracle")
        assert len(trace) == 50 and metrics.transmissions == 50

    def test_zero_slots(self, make_scenario):
        result = simulate(make_scenario(slots=0))
        assert result.trace == []
        assert result.metrics.transmissions == 0

    def test_same_seed_same_channel(self, make_scenario):
        scenario = make_scenario(channel={"kind": "constant", "level": 10.0, "jitter_db": 0.5})
        a = simulate(scenario, "olla")
        b = simulate(scenario, "salad")
        assert [r.true_sinr_db for r in a.trace] == [r.true_sinr_db for r in b.trace]

    def test_repeat_runs_identical(self, make_scenario):
        scenario = make_scenario(seed=4)
        assert simulate(scenario).trace == simulate(scenario).trace

    def test_every_feedback_reaches_salad(self, make_scenario):
        result = simulate(make_scenario(slots=300, adapter={"default": "salad"}))
        m, state = result.metrics, result.adapter_obj.state
        assert state.integral_error == pytest.approx(0.1 * m.transmissions - m.nacks)

    def test_slot_mask(self, make_scenario):
        scenario = make_scenario(
            slots=100, harq={"delay": 4, "slot_mask": "DDDSU"},
            adapter={"default": "olla", "olla": {"initial_offset": 10.0}},
        )
        result = simulate(scenario)
        for r in result.trace:
            assert (r.mcs is not None) == (r.slot % 5 < 3)
        m = result.metrics
        config = scenario.adapter.olla_config()
        expected = 10.0 + config.delta_ack * (m.transmissions - m.nacks) - config.delta_nack * m.nacks
        assert result.adapter_obj.state.offset == pytest.approx(expected)

    def test_offered_load_sets_tbs(self, make_scenario):
        result = simulate(make_scenario(slots=20, traffic={"load_mbps": 4.0}, adapter={"default": "oracle"}))
        assert {r.tbs for r in result.trace} == {2000}

    def test_oracle_meets_its_prediction(self, make_scenario, bler_table):
        level = bler_table.snr_for_bler(14, 0.1, 2000) + 1e-9
        scenario = make_scenario(slots=20_000, channel={"kind": "constant", "level": level},
                                 adapter={"default": "oracle"})
        result = simulate(scenario)
        expected = select_mcs_illa(bler_table, level, 0.1, 2000).predicted_bler
        assert expected <= 0.1
        assert result.metrics.long_term_bler == pytest.approx(expected, abs=4 * np.sqrt(0.09 / 20_000))

    def test_olla_step_size_trades_speed(self, make_scenario):
        times = {}
        for delta in (0.1, 1.0):
            runs = []
            for seed in range(20):
                scenario = make_scenario(
                    slots=600, seed=seed,
                    channel={"kind": "step", "levels": [15.0, 5.0], "switch_slots": [300]},
                    adapter={"default": "olla", "olla": {"delta_nack": delta, "initial_offset": 15.0}},
                )
                runs.append(simulate(scenario).metrics.adaptation_time)
            times[delta] = np.median(runs)
        assert times[1.0] < times[0.1]

    def test_salad_recovers_faster_from_a_surge(self, make_scenario):
        # Short code blocks keep the high-MCS curves soft enough for an
        # exploratory transmission to carry information.
        times = {"olla": [], "salad": []}
        for seed in range(20):
            scenario = make_scenario(
                slots=700, seed=seed,
                channel={"kind": "step", "levels": [5.0, 15.0], "switch_slots": [300]},
                traffic={"tbs": 100},
                adapter={"olla": {"initial_offset": 5.0},
                         "salad": {"initial_sinr": 5.0, "adjust_only_when_not_probing": True}},
            )
            for name in times:
                times[name].append(simulate(scenario, name).metrics.adaptation_time)
        assert np.median(times["salad"]) <= 0.75 * np.median(times["olla"])

    def test_large_olla_step_makes_bler_noisier(self, make_scenario):
        variance = {}
        for delta in (0.1, 2.0):
            values = []
            for seed in range(5):
                scenario = make_scenario(
                    slots=4000, seed=seed,
                    adapter={"default": "olla", "olla": {"delta_nack": delta, "initial_offset": 10.0}},
                )
                values += [v for slot, v in sliding_bler(simulate(scenario).trace, 50) if slot >= 1000]
            variance[delta] = np.var(values)
        assert variance[2.0] > variance[0.1]

    @pytest.mark.slow
    def test_distilled_rate_follows_channel_speed(self):
        # The chirp frequency rises linearly, so the last third of the run moves fastest.
        base = load_scenario(os.path.join(SCENARIO_DIR, "chirp.yaml"))
        third = base.slots / 3
        agree = 0
        for seed in range(10):
            log = simulate(base.with_seed(seed)).adapter_obj.state.epsilon_log
            slow = [e for slot, e, _ in log if slot < third]
            fast = [e for slot, e, _ in log if slot >= 2 * third]
            agree += np.mean(fast) >= np.mean(slow)
        assert agree >= 8

    @pytest.mark.slow
    @pytest.mark.parametrize("adapter", ["olla", "salad"])
    def test_long_term_bler_meets_target(self, make_scenario, adapter):
        scenario = make_scenario(slots=200_000, adapter={"default": adapter, "olla": {"initial_offset": 10.0},
                                                         "salad": {"initial_sinr": 10.0}})
        assert simulate(scenario).metrics.long_term_bler == pytest.approx(0.1, abs=0.005)


class TestMetrics:
    def test_sliding_bler(self):
        trace = fake_trace([True, False, None, True, False])
        assert sliding_bler(trace, 2) == [(1, 0.5), (2, 0.0), (3, 1.0), (4, 0.5)]

    def test_sliding_window_longer_than_trace(self):
        trace = fake_trace([True, False, None, True, False])
        assert sliding_bler(trace, 10) == [(4, 0.5)]

    def test_empty_windows_are_skipped(self):
        trace = fake_trace([None, None, True])
        assert sliding_bler(trace, 2) == [(2, 1.0)]

    def test_normalized_tp(self, mcs_table):
        trace = fake_trace([False, True], mcs=mcs_table.lowest)
        assert first_round_tp(trace) == pytest.approx(1000.0)
        assert normalized_tp(trace, mcs_table) == pytest.approx(1000.0)

    def test_adaptation_time(self):
        trace = fake_trace([None] * 6, est=[10, 10, 8, 6, 5.5, 5], true=5.0)
        assert adaptation_time(trace, 1, 1.0) == 3

    def test_adaptation_time_censored(self):
        trace = fake_trace([None] * 6, est=[10] * 6, true=5.0)
        assert adaptation_time(trace, 2, 1.0) == 4
        assert adaptation_time(trace, None) is None

    def test_no_transmissions(self, mcs_table):
        m = compute_metrics(fake_trace([None, None]), mcs_table)
        assert m.long_term_bler is None and m.normalized_tp == 0.0


class TestScenario:
    @pytest.mark.parametrize("name", ["chirp", "constant", "drop_cqi", "surge", "tdd_mask", "two_level"])
    def test_bundled_scenarios_load(self, name):
        scenario = load_scenario(os.path.join(SCENARIO_DIR, f"{name}.yaml"))
        assert scenario.name == name

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="colour"):
            build_scenario({"slots": 10, "colour": "blue"})

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            build_scenario({"slots": 10, "adapter": {"salad": {"profile": "turbo"}}})

    def test_overrides(self):
        raw = apply_overrides({"slots": 10}, ["adapter.salad.epsilon=0.5", "slots=30"])
        scenario = build_scenario(raw)
        assert scenario.slots == 30
        assert scenario.adapter.salad_config().epsilon == 0.5

    def test_malformed_override(self):
        with pytest.raises(ConfigError):
            apply_overrides({}, ["slots"])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="nope.yaml"):
            load_scenario(str(tmp_path / "nope.yaml"))

    def test_switch_slot_defaults_to_channel(self, make_scenario):
        scenario = make_scenario(channel={"kind": "step", "levels": [1.0, 2.0], "switch_slots": [40]})
        assert scenario.switch_slot == 40


class TestOutputs:
    def test_trace_csv(self, tmp_path):
        path = tmp_path / "trace.csv"
        write_trace_csv([SlotTrace(0, 10.0, 9.5, 4, 2000, True, 0.1, None, False, 0.25)], str(path))
        header, row = path.read_text().splitlines()
        assert header == ",".join(TRACE_FIELDS)
        assert row == "0,10,9.5,4,2000,1,0.1,,0,0.25"

    def test_run_outputs(self, make_scenario, tmp_path):
        files = write_run_outputs(simulate(make_scenario()), str(tmp_path))
        assert {os.path.basename(p) for p in glob.glob(str(tmp_path / "*"))} == {
            "trace.csv", "metrics.json", "report.md", "plot_mcs.csv", "plot_sinr.csv", "plot_bler.csv",
        }
        assert "long_term_bler" in open(files["report"]).read()
