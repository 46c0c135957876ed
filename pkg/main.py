"""
SALAD Link Adaptation Simulator
Runs OLLA, SALAD and oracle link adaptation over simulated channels, sweeps
adapters and seeds, tunes SALAD parameters, distills learning rates from
traces and fits sigmoid BLER tables.

Exit codes: 0 success, 1 usage, 2 configuration or I/O, 3 runtime failure.
"""

import argparse
import csv
import logging
import os
import sqlite3
import statistics
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import yaml
from dotenv import load_dotenv

load_dotenv()

from agents.orchestrator import pipeline
from agents.teacher import DEFAULT_EPS_GRID, DEFAULT_KNOT_CANDIDATES, HistoryBatch, distill, spline_eval
from db.audit import init_db, log_run
from errors import ConfigError, FitError, SaladError
from phy.blermodel import BLER_CSV_FIELDS, SigmoidBlerEntry, default_tables, fit_sigmoid, sigmoid_mse
from sim.engine import simulate
from sim.outputs import fmt, write_csv, write_run_outputs
from sim.scenario import ADAPTERS, load_manifest, load_scenario
from tuning.objective import best_params_document, load_problem, tune

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

AGGREGATE_FIELDS = ("long_term_bler", "normalized_tp", "first_round_tp", "mean_se",
                    "adaptation_time", "bler_rms_deviation")


class CliParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def say(args, message=""):
    if not args.quiet:
        print(message)


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("SALAD_JOBS", "1")))
    except ValueError:
        return 1


def audit(subcommand, **fields):
    init_db()
    log_run(subcommand, **fields)


def cmd_run(args) -> int:
    say(args, f"Running {args.scenario}")
    state = pipeline.invoke({
        "scenario_path": args.scenario,
        "overrides": args.override,
        "adapter": args.adapter,
        "seed": args.seed,
        "out_dir": args.out,
        "quiet": args.quiet,
    })
    say(args, f"Done: {len(state['files'])} files in {args.out}")
    return EXIT_OK


def sweep_one(job):
    """Run one (adapter, seed) of a sweep; returns (adapter, seed, metrics or None, error or None)."""
    scenario_path, overrides, adapter, seed, out_dir = job
    try:
        scenario = load_scenario(scenario_path, overrides).with_adapter(adapter).with_seed(seed)
        result = simulate(scenario)
        write_run_outputs(result, out_dir)
        return adapter, seed, result.metrics.to_dict(), None
    except Exception as e:  # reported per run, the sweep goes on
        return adapter, seed, None, f"{type(e).__name__}: {e}"


def median_or_none(values):
    values = [v for v in values if v is not None]
    return statistics.median(values) if values else None


def aggregate_rows(completed: dict, adapters) -> list:
    """Median of every aggregate metric per adapter over its completed runs."""
    rows = []
    for adapter in adapters:
        runs = completed.get(adapter, [])
        row = [adapter, len(runs)]
        row += [median_or_none([m[key] for m in runs]) for key in AGGREGATE_FIELDS]
        rows.append(row)
    return rows


def cmd_sweep(args) -> int:
    manifest = load_manifest(args.scenario)
    overrides = list(manifest.overrides) + list(args.override or [])
    load_scenario(manifest.scenario, overrides)

    jobs = [
        (manifest.scenario, overrides, adapter, seed, os.path.join(args.out, "runs", f"{adapter}_seed{seed}"))
        for adapter in manifest.adapters
        for seed in manifest.seeds
    ]
    say(args, f"Sweep: {len(manifest.adapters)} adapter(s) x {len(manifest.seeds)} seed(s) = {len(jobs)} runs")
    os.makedirs(args.out, exist_ok=True)

    n_workers = min(args.jobs or default_jobs(), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(sweep_one, jobs))
    else:
        outcomes = [sweep_one(job) for job in jobs]

    completed = defaultdict(list)
    failures = 0
    for adapter, seed, metrics, error in outcomes:
        if error is None:
            completed[adapter].append(metrics)
            say(args, f"  {adapter:<7} seed {seed:<4} → BLER {fmt(metrics['long_term_bler'])}")
        else:
            failures += 1
            print(f"  {adapter:<7} seed {seed:<4} → FAILED: {error}", file=sys.stderr)

    path = os.path.join(args.out, "aggregate.csv")
    write_csv(path, ("adapter", "runs") + AGGREGATE_FIELDS, aggregate_rows(completed, manifest.adapters))
    say(args, f"  → {path}")
    audit("sweep", scenario=manifest.scenario, status="partial" if failures else "ok", output_dir=args.out,
          detail=f"{len(jobs) - failures}/{len(jobs)} runs")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_tune(args) -> int:
    problem, scenarios = load_problem(args.scenario)
    names = problem.names
    say(args, f"Tuning {', '.join(names)} over {len(scenarios)} scenario(s) x {len(problem.seeds)} seed(s)")

    def progress(record):
        say(args, f"  [{record.iteration:>3}] {record.operation:<12} best {record.best_value:.6g}")

    n_workers = args.jobs or default_jobs()
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            params, result, _ = tune(problem, scenarios, max_iters=args.max_iters, map_fn=pool.map, callback=progress)
    else:
        params, result, _ = tune(problem, scenarios, max_iters=args.max_iters, callback=progress)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "best_params.yaml"), "w") as f:
        yaml.safe_dump(best_params_document(problem, params), f, sort_keys=False)
    write_csv(
        os.path.join(args.out, "tuning_log.csv"),
        ["iteration", "operation", "best_value", "n_evals"] + names,
        ([r.iteration, r.operation, r.best_value, r.n_evals] + [float(v) for v in r.best_x] for r in result.log),
    )
    say(args, f"  → best objective {result.value:.6g}: {params}")
    audit("tune", scenario=args.scenario, adapter="salad", output_dir=args.out, detail=repr(params))
    return EXIT_OK


@dataclass(frozen=True)
class TraceRecord:
    slot: int
    mcs: int
    tbs: int
    nack: bool
    estimate: float
    reported_sinr: float = 0.0


def read_trace_transmissions(path) -> list:
    """Transmitted slots of a trace CSV."""
    records = []
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        missing = {"slot", "mcs", "tbs", "nack", "est_sinr_db"} - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path}: trace lacks columns {', '.join(sorted(missing))}")
        for lineno, row in enumerate(reader, start=2):
            if not row["mcs"]:
                continue
            try:
                records.append(TraceRecord(int(row["slot"]), int(row["mcs"]), int(row["tbs"]),
                                           row["nack"] == "1", float(row["est_sinr_db"] or 0.0)))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: malformed trace row") from None
    return records


def cmd_distill(args) -> int:
    _, table = default_tables()
    records = read_trace_transmissions(args.input)
    if not records:
        raise ConfigError(f"{args.input}: no transmissions in trace")
    period = args.n_eps
    last_slot = records[-1].slot
    say(args, f"Distilling {len(records)} transmissions in windows of {period} slots")

    windows, curve = [], []
    for start in range(0, last_slot + 1, period):
        chunk = [r for r in records if start <= r.slot < start + period]
        row = [start, start + period - 1, len(chunk), None, None]
        if len(chunk) >= args.min_feedbacks:
            try:
                batch = HistoryBatch.from_records(chunk, table)
                result = distill(batch, DEFAULT_EPS_GRID, DEFAULT_KNOT_CANDIDATES, beta=args.beta,
                                 init_value=chunk[0].estimate, bler_clip=table.bler_clip)
                row[3:] = [result.n_knots, result.epsilon]
                curve += [(r.slot, v) for r, v in zip(chunk, spline_eval(result.model, batch.slots))]
            except FitError as e:
                logging.getLogger(__name__).warning("window at slot %d: %s", start, e)
        windows.append(row)
        say(args, f"  slots {start:>6}-{start + period - 1:<6} K={fmt(row[3]) or '-':<2} epsilon={fmt(row[4]) or '-'}")

    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "distill_windows.csv"),
              ("window_start", "window_end", "feedbacks", "n_knots", "epsilon"), windows)
    write_csv(os.path.join(args.out, "teacher_curve.csv"), ("slot", "teacher_sinr_db"),
              ((s, float(v)) for s, v in curve))
    audit("distill", scenario=args.input, adapter="salad", output_dir=args.out, detail=f"{len(windows)} windows")
    return EXIT_OK


def read_bler_samples(path) -> dict:
    """(mcs, cbs) -> list of (snr_db, bler) from a CSV with header mcs,cbs,snr_db,bler."""
    groups = defaultdict(list)
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = None
        for lineno, row in enumerate(reader, start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if header is None:
                header = [h.strip() for h in row]
                if header != ["mcs", "cbs", "snr_db", "bler"]:
                    raise ConfigError(f"{path}:{lineno}: expected header mcs,cbs,snr_db,bler")
                continue
            try:
                mcs, cbs = int(row[0]), int(row[1])
                points = groups[(mcs, cbs)]
                snr, bler = row[2].strip(), row[3].strip()
                if snr and bler:
                    points.append((float(snr), float(bler)))
            except (IndexError, ValueError):
                raise ConfigError(f"{path}:{lineno}: malformed sample row {','.join(row)!r}") from None
    if header is None:
        raise ConfigError(f"{path}: no samples")
    return groups


def cmd_fit_bler(args) -> int:
    groups = read_bler_samples(args.input)
    fitted, report, failed = [], [], []
    for (mcs, cbs), points in sorted(groups.items()):
        try:
            center, scale = fit_sigmoid(points)
            entry = SigmoidBlerEntry(mcs, cbs, center, scale)
        except (FitError, ConfigError) as e:
            failed.append((mcs, cbs, str(e)))
            report.append((mcs, cbs, len(points), None, None, None, str(e)))
            continue
        mse = sigmoid_mse(points, center, scale)
        fitted.append(entry)
        report.append((mcs, cbs, len(points), center, scale, mse, ""))
        say(args, f"  MCS {mcs:>2} CBS {cbs:>5}: c={center:7.3f} s={scale:.3f} mse={mse:.2e}")

    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "bler_table.csv"), BLER_CSV_FIELDS,
              ((e.mcs, e.cbs, e.center, e.scale) for e in fitted))
    write_csv(os.path.join(args.out, "fit_report.csv"),
              ("mcs", "cbs", "samples", "center_db", "scale_db", "mse", "error"), report)
    for mcs, cbs, reason in failed:
        print(f"unfittable: MCS {mcs} CBS {cbs}: {reason}", file=sys.stderr)
    audit("fit-bler", scenario=args.input, status="partial" if failed else "ok", output_dir=args.out,
          detail=f"{len(fitted)} fitted, {len(failed)} unfittable")
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> CliParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--quiet", action="store_true", help="no progress output")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = CliParser(prog="salad", description="SALAD / OLLA link adaptation simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("run", parents=[common], help="simulate one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--adapter", choices=ADAPTERS)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="adapters x seeds from a sweep manifest")
    p.add_argument("--scenario", required=True, help="sweep manifest")
    p.add_argument("--jobs", type=int)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune", parents=[common], help="Nelder-Mead tuning of SALAD parameters")
    p.add_argument("--scenario", required=True, help="tuning problem file")
    p.add_argument("--jobs", type=int)
    p.add_argument("--max-iters", type=int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("distill", parents=[common], help="learning-rate distillation over a trace")
    p.add_argument("--input", required=True, help="trace CSV written by run")
    p.add_argument("--n-eps", type=int, default=200, help="window length in slots")
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--min-feedbacks", type=int, default=20)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("fit-bler", parents=[common], help="fit sigmoid BLER entries to samples")
    p.add_argument("--input", required=True, help="CSV of mcs,cbs,snr_db,bler samples")
    p.set_defaults(func=cmd_fit_bler)
    return parser


def configure_logging(args):
    level = "DEBUG" if args.verbose else os.environ.get("SALAD_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args)
    for name in ("jobs", "n_eps", "max_iters", "min_feedbacks"):
        value = getattr(args, name, None)
        if value is not None and value < (0 if name == "max_iters" else 1):
            parser.error(f"--{name.replace('_', '-')} must be positive")

    try:
        return args.func(args)
    except (ConfigError, OSError, yaml.YAMLError) as e:
        code, message = EXIT_CONFIG, str(e)
    except SaladError as e:
        code, message = EXIT_RUNTIME, str(e)
    except Exception as e:
        code, message = EXIT_RUNTIME, f"{type(e).__name__}: {e}"
    print(f"error: {message}", file=sys.stderr)
    try:
        audit(args.command, status="error", detail=message[:500])
    except sqlite3.Error:
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())
