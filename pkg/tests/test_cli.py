"""End-to-end tests of the salad command line."""

import csv
import json
import os
import statistics

import numpy as np
import pytest
import yaml

from db.audit import get_all_logs
from main import main


@pytest.fixture
def scenario_file(tmp_path):
    scenario = {
        "name": "tiny",
        "slots": 300,
        "seed": 0,
        "channel": {"kind": "step", "levels": [12.0, 6.0], "switch_slots": [150]},
        "adapter": {"default": "salad", "olla": {"initial_offset": 12.0}, "salad": {"initial_sinr": 12.0}},
    }
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(scenario))
    return path


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestRun:
    def test_writes_outputs(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--scenario", str(scenario_file), "--out", str(out), "--quiet"]) == 0
        assert len(read_rows(out / "trace.csv")) == 300
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["adapter"] == "salad"
        assert metrics["metrics"]["slots"] == 300

    def test_repeat_runs_are_byte_identical(self, scenario_file, tmp_path):
        for name in ("a", "b"):
            main(["run", "--scenario", str(scenario_file), "--out", str(tmp_path / name), "--quiet", "--seed", "3"])
        assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()

    def test_adapter_and_override_flags(self, scenario_file, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--scenario", str(scenario_file), "--out", str(out), "--quiet",
                     "--adapter", "olla", "--override", "slots=50"])
        assert code == 0
        assert len(read_rows(out / "trace.csv")) == 50
        assert json.loads((out / "metrics.json").read_text())["adapter"] == "olla"

    def test_missing_scenario(self, tmp_path, capsys):
        missing = tmp_path / "nowhere.yaml"
        assert main(["run", "--scenario", str(missing), "--out", str(tmp_path / "out"), "--quiet"]) == 2
        assert "nowhere.yaml" in capsys.readouterr().err

    def test_invalid_scenario(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("slots: -5\n")
        assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "out"), "--quiet"]) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--out", "x"])
        assert exc.value.code == 1

    def test_run_is_audited(self, scenario_file, tmp_path):
        main(["run", "--scenario", str(scenario_file), "--out", str(tmp_path / "out"), "--quiet"])
        (row,) = get_all_logs()
        assert (row["subcommand"], row["scenario"], row["adapter"], row["status"]) == ("run", "tiny", "salad", "ok")
        assert row["long_term_bler"] is not None


class TestSweep:
    def test_paired_sweep(self, scenario_file, tmp_path):
        manifest = tmp_path / "sweep.yaml"
        manifest.write_text(yaml.safe_dump({"scenario": scenario_file.name, "adapters": ["olla", "salad", "oracle"],
                                            "seeds": [0, 1, 2, 3, 4], "overrides": ["slots=120"]}))
        out = tmp_path / "sweep"
        assert main(["sweep", "--scenario", str(manifest), "--out", str(out), "--quiet"]) == 0

        traces = sorted(os.listdir(out / "runs"))
        assert len(traces) == 15
        assert all((out / "runs" / d / "trace.csv").exists() for d in traces)

        rows = {r["adapter"]: r for r in read_rows(out / "aggregate.csv")}
        for adapter in ("olla", "salad", "oracle"):
            values = [json.loads((out / "runs" / f"{adapter}_seed{k}" / "metrics.json").read_text())["metrics"]
                      ["long_term_bler"] for k in range(5)]
            assert float(rows[adapter]["long_term_bler"]) == pytest.approx(statistics.median(values), rel=1e-6)
            assert rows[adapter]["runs"] == "5"

    def test_paired_channel_across_adapters(self, scenario_file, tmp_path):
        manifest = tmp_path / "sweep.yaml"
        manifest.write_text(yaml.safe_dump({"scenario": str(scenario_file), "adapters": ["olla", "salad"],
                                            "seeds": [7], "overrides": ["channel.jitter_db=0.5"]}))
        out = tmp_path / "sweep"
        main(["sweep", "--scenario", str(manifest), "--out", str(out), "--quiet"])
        olla = [r["true_sinr_db"] for r in read_rows(out / "runs" / "olla_seed7" / "trace.csv")]
        salad = [r["true_sinr_db"] for r in read_rows(out / "runs" / "salad_seed7" / "trace.csv")]
        assert olla == salad

    def test_empty_manifest(self, tmp_path):
        manifest = tmp_path / "sweep.yaml"
        manifest.write_text("")
        assert main(["sweep", "--scenario", str(manifest), "--out", str(tmp_path / "out"), "--quiet"]) == 2


class TestDistill:
    def test_windows_from_a_run_trace(self, scenario_file, tmp_path):
        run = tmp_path / "run"
        main(["run", "--scenario", str(scenario_file), "--out", str(run), "--quiet"])
        out = tmp_path / "distill"
        code = main(["distill", "--input", str(run / "trace.csv"), "--n-eps", "100", "--out", str(out), "--quiet"])
        assert code == 0
        windows = read_rows(out / "distill_windows.csv")
        assert [w["window_start"] for w in windows] == ["0", "100", "200"]
        assert all(w["epsilon"] for w in windows)
        assert read_rows(out / "teacher_curve.csv")

    def test_trace_without_columns(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text("slot,foo\n0,1\n")
        assert main(["distill", "--input", str(path), "--out", str(tmp_path / "out"), "--quiet"]) == 2

    def test_bad_period(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["distill", "--input", "x.csv", "--n-eps", "0", "--out", str(tmp_path)])
        assert exc.value.code == 1


class TestFitBler:
    def write_samples(self, path, rows):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["mcs", "cbs", "snr_db", "bler"])
            writer.writerows(rows)

    def sigmoid_rows(self, mcs, cbs, center, scale):
        return [(mcs, cbs, s, 1.0 - 1.0 / (1.0 + np.exp(-(s - center) / scale)))
                for s in np.linspace(center - 2.0, center + 2.0, 15)]

    def test_fits_every_group(self, tmp_path):
        samples = tmp_path / "samples.csv"
        self.write_samples(samples, self.sigmoid_rows(3, 500, 1.0, 0.4) + self.sigmoid_rows(9, 500, 8.0, 0.6))
        out = tmp_path / "fit"
        assert main(["fit-bler", "--input", str(samples), "--out", str(out), "--quiet"]) == 0
        rows = read_rows(out / "bler_table.csv")
        assert [r["mcs"] for r in rows] == ["3", "9"]
        assert float(rows[1]["center_db"]) == pytest.approx(8.0, abs=1e-3)
        assert float(rows[1]["scale_db"]) == pytest.approx(0.6, abs=1e-3)

    def test_corrupt_row_names_line(self, tmp_path, capsys):
        samples = tmp_path / "samples.csv"
        samples.write_text("mcs,cbs,snr_db,bler\n3,500,1.0,0.5\n3,500,abc,0.4\n")
        assert main(["fit-bler", "--input", str(samples), "--out", str(tmp_path / "fit"), "--quiet"]) == 2
        assert "samples.csv:3" in capsys.readouterr().err

    def test_unfittable_group(self, tmp_path, capsys):
        samples = tmp_path / "samples.csv"
        self.write_samples(samples, self.sigmoid_rows(3, 500, 1.0, 0.4) + [(5, 500, s, 0.0) for s in range(5)])
        out = tmp_path / "fit"
        assert main(["fit-bler", "--input", str(samples), "--out", str(out), "--quiet"]) == 3
        assert "MCS 5 CBS 500" in capsys.readouterr().err
        assert [r["mcs"] for r in read_rows(out / "bler_table.csv")] == ["3"]
        assert get_all_logs()[0]["status"] == "partial"
