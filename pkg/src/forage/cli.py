"""Command-line front end: ``forage run | metrics | sweep | ablate | plot``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
The seed comes from ``--seed``, else ``$FORAGE_SEED``, else the scenario.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, plotting
from .engine import ConfigError
from .experiments import (
    INTERTEAM_COLUMNS,
    PRIMARY_COLUMNS,
    TEMPORAL_COLUMNS,
    AblationSpec,
    BatchError,
    BatchSpec,
    SweepSpec,
    ablation_csv,
    ablation_study,
    batch_table,
    default_grid,
    epsilon_sweep,
    mc_csv,
    run_batch,
    ss_csv,
    sweep_csv,
)
from .metrics import SCALAR_FIELDS, MetricError, MetricReport, report_from_trace, scalars_csv
from .scenario import ScenarioError
from .scenario import load as load_scenario
from .trace import TraceError, TraceVersionError, read_trace, write_trace

REPORT_VERSION = 1

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

METRIC_ALIASES = {
    "pta_c": "pta_c_final",
    "pta_d": "pta_d_final",
    "rmse": "rmse_final",
    "mi": "mi_final",
    "csr": "csr_final",
    "gini": "gini_final",
}


class UsageError(ValueError):
    pass


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def episode_report_json(trace, report: MetricReport) -> str:
    """Serialised per-episode report; depends on the trace contents only."""
    return _dump_json({
        "report_version": REPORT_VERSION,
        "kind": "episode",
        "seed": trace.header["seed"],
        "config_digest": trace.header["config_digest"],
        "metrics": report.to_dict(),
    })


def batch_report_json(name: str, result) -> str:
    return _dump_json({
        "report_version": REPORT_VERSION,
        "kind": "batch",
        "algorithm": name,
        "seeds": result.seeds,
        "aggregate": result.aggregate.to_dict(),
        "distributions": {
            "dsl": [v for r in result.reports for v in r.dsl_values],
            "itl": [r.itl for r in result.reports],
        },
    })


def _cpu_count() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def _seed(args) -> Optional[int]:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FORAGE_SEED")
    if env is None or env == "":
        return None
    try:
        value = int(env, 0)
    except ValueError:
        raise UsageError(f"FORAGE_SEED must be an integer, got {env!r}") from None
    if not 0 <= value < 2**64:
        raise UsageError("FORAGE_SEED must be a 64-bit unsigned value")
    return value


def _batch_spec(args) -> tuple[BatchSpec, object]:
    sc = load_scenario(args.scenario)
    config = sc.config
    seed = _seed(args)
    if seed is not None:
        config = replace(config, seed=seed)
    episodes = args.episodes if args.episodes is not None else sc.episodes
    if episodes < 1:
        raise UsageError("--episodes must be >= 1")
    spec = BatchSpec(base=config, n=episodes, master_seed=config.seed, algorithms=sc.algorithms)
    return spec, sc


def _out_dir(args, sc) -> Path:
    out = args.out or sc.output
    if out is None:
        raise UsageError("no output directory: pass --out or set 'output' in the scenario")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _jobs(args) -> int:
    return args.jobs if args.jobs is not None else _cpu_count()


# --------------------------------------------------------------- commands


def cmd_run(args) -> int:
    spec, sc = _batch_spec(args)
    out = _out_dir(args, sc)
    results = run_batch(spec, jobs=_jobs(args), keep_traces=True)
    suffix = ".trace.jsonl.gz" if args.gzip else ".trace.jsonl"
    for name, res in results.items():
        d = out / name
        d.mkdir(exist_ok=True)
        for n, (trace, report) in enumerate(zip(res.traces, res.reports)):
            write_trace(trace, d / f"ep{n:03d}{suffix}")
            (d / f"ep{n:03d}.report.json").write_text(episode_report_json(trace, report))
        (d / "batch.report.json").write_text(batch_report_json(name, res))
        (d / "scalars.csv").write_text(scalars_csv(res.reports, [str(s) for s in res.seeds]))
    (out / "table_primary.csv").write_text(batch_table(results, PRIMARY_COLUMNS))
    (out / "table_temporal.csv").write_text(batch_table(results, TEMPORAL_COLUMNS))
    (out / "table_interteam.csv").write_text(batch_table(results, INTERTEAM_COLUMNS))
    print(batch_table(results, PRIMARY_COLUMNS), end="")
    return EXIT_OK


def _report_name(trace_path: Path) -> str:
    name = trace_path.name
    for suffix in (".trace.jsonl.gz", ".trace.jsonl", ".jsonl.gz", ".jsonl", ".gz"):
        if name.endswith(suffix):
            return name[: -len(suffix)] + ".report.json"
    return name + ".report.json"


def cmd_metrics(args) -> int:
    if not args.trace:
        raise UsageError("no trace files given")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in map(Path, args.trace):
        try:
            trace = read_trace(p)
        except TraceVersionError as exc:
            raise UsageError(f"{p}: {exc}") from None
        except OSError as exc:
            raise TraceError(f"{p}: {exc.strerror}") from None
        except TraceError as exc:
            raise TraceError(f"{p}: {exc}") from None
        report = report_from_trace(trace)
        (out / _report_name(p)).write_text(episode_report_json(trace, report))
    return EXIT_OK


def _grid(text: Optional[str]) -> tuple[float, ...]:
    if text is None:
        return default_grid()
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"--grid must be comma-separated numbers, got {text!r}") from None


def _metric(name: str) -> str:
    name = METRIC_ALIASES.get(name, name)
    if name not in SCALAR_FIELDS:
        raise UsageError(f"unknown metric {name!r}")
    return name


def cmd_sweep(args) -> int:
    spec, sc = _batch_spec(args)
    out = _out_dir(args, sc)
    try:
        sweep = SweepSpec(spec, args.team, metric=_metric(args.metric), grid=_grid(args.grid))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    results = epsilon_sweep(sweep, jobs=_jobs(args))
    (out / "sweep.csv").write_text(sweep_csv(results))
    (out / "ss.csv").write_text(ss_csv(results))
    (out / "sweep.json").write_text(_dump_json({
        "report_version": REPORT_VERSION,
        "kind": "sweep",
        "results": [r.to_dict() for r in results.values()],
    }))
    print(ss_csv(results), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    spec, sc = _batch_spec(args)
    out = _out_dir(args, sc)
    result = ablation_study(AblationSpec(spec), jobs=_jobs(args))
    (out / "ablation.csv").write_text(ablation_csv(result))
    (out / "mc.csv").write_text(mc_csv(result))
    (out / "ablation.json").write_text(_dump_json({
        "report_version": REPORT_VERSION,
        "kind": "ablation",
        "values": result.values,
        "mc": result.mc,
    }))
    print(mc_csv(result), end="")
    return EXIT_OK


def _load_report(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("report_version") != REPORT_VERSION:
        raise UsageError(f"{path}: not a report (report_version {REPORT_VERSION} expected)")
    return doc


def _curves(docs: Sequence[tuple[Path, dict]], key: str) -> list:
    curves = []
    for path, doc in docs:
        if doc.get("kind") == "batch":
            s = doc["aggregate"]["series"][key]
            mean, ci, label = s["mean"], s["ci"], doc["algorithm"]
        elif doc.get("kind") == "episode":
            mean = doc["metrics"][f"{key}_series"]
            ci, label = None, path.name.removesuffix(".report.json")
        else:
            raise UsageError(f"{path}: {doc.get('kind')} reports hold no time series")
        if not any(v is not None for v in mean):
            raise UsageError(f"{path}: series {key!r} is empty")
        curves.append(plotting.Curve(label, list(range(len(mean))), mean, ci))
    return curves


def cmd_plot(args) -> int:
    if not args.report:
        raise UsageError("no report files given")
    docs = [(Path(p), _load_report(Path(p))) for p in args.report]
    kind = args.kind
    if kind == "pta":
        svg = plotting.series_chart([
            ("PTA_D", "PTA_D (%)", _curves(docs, "pta_d")),
            ("PTA_C", "PTA_C (%)", _curves(docs, "pta_c")),
        ])
    elif kind in plotting.SERIES_KINDS:
        key, label = plotting.SERIES_KINDS[kind]
        svg = plotting.series_chart([(label, label, _curves(docs, key))])
    elif kind == "sweep":
        curves, fits, metric = [], [], None
        for path, doc in docs:
            if doc.get("kind") != "sweep":
                raise UsageError(f"{path}: not a sweep report")
            for r in doc["results"]:
                if not r["eps"]:
                    raise UsageError(f"{path}: sweep has no points")
                curves.append(plotting.Curve(f"{r['algorithm']} ({r['team']})", r["eps"], r["mean"], r["ci"]))
                fits.append((r["ss"], r["intercept"]))
                metric = r["metric"]
        if not curves:
            raise UsageError("sweep reports hold no curves")
        svg = plotting.sweep_chart(curves, fits, metric, f"{metric} under corruption")
    else:  # violin
        groups = []
        for path, doc in docs:
            if doc.get("kind") != "batch":
                raise UsageError(f"{path}: violin plots need batch reports")
            groups.append((doc["algorithm"], doc["distributions"]))
        svg = plotting.violin_chart(groups)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    return EXIT_OK


# ----------------------------------------------------------------- parser


def _add_batch_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides FORAGE_SEED and the scenario)")
    p.add_argument("--episodes", type=int, default=None, help="episodes per batch")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: available cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forage", description="Heterogeneous destructive-foraging simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a batch of episodes and write traces and reports")
    _add_batch_args(p)
    p.add_argument("--gzip", action="store_true", help="gzip the trace files")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("metrics", help="recompute reports from trace files")
    p.add_argument("--trace", nargs="*", default=[], help="trace files (.jsonl or .jsonl.gz)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sweep", help="epsilon-corruption sweep of one team")
    _add_batch_args(p)
    p.add_argument("--team", required=True, choices=("scouts", "foragers"))
    p.add_argument("--metric", default="pta_c_final", help="scalar metric observed (default pta_c_final)")
    p.add_argument("--grid", default=None, help="comma-separated eps values (default 0,0.05,...,1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="ablation study and marginal contributions")
    _add_batch_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="render an SVG chart from report files")
    p.add_argument("--report", nargs="*", default=[], help="report JSON files")
    p.add_argument("--kind", required=True, choices=plotting.KINDS)
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScenarioError, ConfigError, plotting.PlotError) as exc:
        print(f"forage {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BatchError, TraceError, MetricError, OSError) as exc:
        print(f"forage {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
