"""
Run Outputs
Trace CSV, metrics JSON, per-figure plot data and the Markdown run report.
"""

import csv
import json
import os

from jinja2 import Environment, FileSystemLoader

from sim.engine import TRACE_FIELDS, RunResult

TEMPLATE_DIR = os.path.join(os.path.dirname(__file__), "..", "config", "templates")


def fmt(value) -> str:
    """CSV cell: empty for None, 0/1 for flags, 9 significant digits for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_trace_csv(trace, path: str) -> None:
    write_csv(path, TRACE_FIELDS, (r.as_row() for r in trace))


def write_json(data: dict, path: str) -> None:
    with open(path, "w") as f:
        f.write(json.dumps(data, sort_keys=True, indent=2) + "\n")


def write_plot_data(result: RunResult, out_dir: str) -> list:
    """MCS, SINR and sliding-BLER series as one CSV each."""
    trace = result.trace
    paths = {
        "plot_mcs.csv": (("slot", "mcs", "probe_flag"), ((r.slot, r.mcs, r.probe_flag) for r in trace)),
        "plot_sinr.csv": (("slot", "true_sinr_db", "est_sinr_db"), ((r.slot, r.true_sinr_db, r.est_sinr_db) for r in trace)),
        "plot_bler.csv": (("slot", "sliding_bler"), iter(result.metrics.sliding_bler)),
    }
    written = []
    for name, (header, rows) in paths.items():
        path = os.path.join(out_dir, name)
        write_csv(path, header, rows)
        written.append(path)
    return written


def render_report(result: RunResult, template_name: str = "run_report.md.j2") -> str:
    env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), keep_trailing_newline=True)
    template = env.get_template(template_name)
    return template.render(
        scenario=result.scenario,
        adapter=result.adapter,
        metrics=result.metrics.to_dict(),
        epsilon_log=getattr(getattr(result.adapter_obj, "state", None), "epsilon_log", []),
    )


def write_run_outputs(result: RunResult, out_dir: str) -> dict:
    """Write every output file of one run; returns name -> path."""
    os.makedirs(out_dir, exist_ok=True)
    files = {
        "trace": os.path.join(out_dir, "trace.csv"),
        "metrics": os.path.join(out_dir, "metrics.json"),
        "report": os.path.join(out_dir, "report.md"),
    }
    write_trace_csv(result.trace, files["trace"])
    write_json(metrics_summary(result), files["metrics"])
    for path in write_plot_data(result, out_dir):
        files[os.path.splitext(os.path.basename(path))[0]] = path
    with open(files["report"], "w") as f:
        f.write(render_report(result))
    return files


def metrics_summary(result: RunResult) -> dict:
    return {
        "scenario": result.scenario.name,
        "adapter": result.adapter,
        "seed": result.scenario.seed,
        "metrics": result.metrics.to_dict(),
    }
