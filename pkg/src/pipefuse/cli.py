"""Command-line entry point.

Subcommands: run a scenario, sweep a parameter, replay CSV traces through
the individual fusion methods, validate a config. Exit codes: 0 success,
2 config error, 3 numeric/runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import consensus as consensus_mod
from . import ekf, fusvaf
from .core import MixedSensorKindError, SensorKind, TraceError, load_trace
from .sim import load_scenario, run_simulation
from .sim.config import ConfigError
from .sim.metrics import (
    metrics_row,
    write_consensus_runs_csv,
    write_detections_csv,
    write_metrics_csv,
    write_stream_csv,
    write_summary,
)

RUNTIME_ERRORS = (
    TraceError,
    MixedSensorKindError,
    ekf.NumericFailureError,
    fusvaf.DegenerateDenominatorError,
    consensus_mod.DisconnectedGraphError,
)

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fail(category: str, message: str) -> None:
    print(f"pipefuse: error [{category}] {message}", file=sys.stderr)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run_outputs(result, out: Path) -> list:
    files = []

    def record(path):
        files.append(str(path.relative_to(out)))
        return path

    write_metrics_csv([result.metrics], record(out / "metrics.csv"))
    write_detections_csv(result.detections, record(out / "detections.csv"))
    write_consensus_runs_csv(result.consensus_runs, record(out / "consensus_mse.csv"))

    streams_dir = out / "streams"
    streams_dir.mkdir(exist_ok=True)
    for key in result.world.stream_keys():
        node_id, kind = key
        truth = result.world.truth[key]
        measured = [m.value for m in result.world.traces[key].readings]
        held = dict(result.reported_series[key])
        reported = [held.get(t) for t in range(result.config.horizon)]
        write_stream_csv(
            truth, measured, reported, record(streams_dir / f"{node_id}_{kind.value}.csv")
        )

    fused_dir = out / "fused"
    fused_dir.mkdir(exist_ok=True)
    for (cluster_id, kind), stage in sorted(
        result.cluster_results.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
    ):
        if stage.fusion_points:
            fusvaf.write_fusion_csv(
                stage.fusion_points,
                stage.member_order,
                record(fused_dir / f"{cluster_id}_{kind.value}.csv"),
            )
    return files


def cmd_run(args) -> int:
    try:
        config = load_scenario(args.config, overrides=args.override, seed=args.seed)
    except ConfigError as exc:
        for e in exc.errors:
            _fail("config-invalid", e)
        return EXIT_CONFIG
    out = _out_dir(args)
    try:
        result = run_simulation(config)
    except RUNTIME_ERRORS as exc:
        _fail("runtime-failure", str(exc))
        return EXIT_RUNTIME
    files = _write_run_outputs(result, out)
    summary = write_summary(result, out, files)
    _say(args, summary.read_text(encoding="utf-8").rstrip())
    _say(args, f"outputs written to {out}")
    return 0


def cmd_sweep(args) -> int:
    key, _, values_raw = args.param.partition("=")
    values = [v for v in values_raw.split(",") if v]
    if not key or not values:
        _fail("config-invalid", f"--param {args.param!r}: expected key=v1,v2,...")
        return EXIT_CONFIG
    out = _out_dir(args)
    rows = []
    for value in values:
        overrides = list(args.override) + [f"{key}={value}"]
        try:
            config = load_scenario(args.config, overrides=overrides, seed=args.seed)
        except ConfigError as exc:
            for e in exc.errors:
                _fail("config-invalid", e)
            return EXIT_CONFIG
        sub = out / f"{key.replace('/', '_')}={value.replace('/', '_')}"
        sub.mkdir(parents=True, exist_ok=True)
        try:
            result = run_simulation(config)
        except RUNTIME_ERRORS as exc:
            _fail("runtime-failure", f"{key}={value}: {exc}")
            return EXIT_RUNTIME
        files = _write_run_outputs(result, sub)
        write_summary(result, sub, files)
        row = {"param": key, "value": value}
        row.update(metrics_row(result.metrics))
        rows.append(row)
        _say(args, f"{key}={value}: total_bits={result.metrics.total_bits} "
                   f"rmse_mean={result.metrics.rmse_mean:.6g}")
    sweep_path = out / "sweep_metrics.csv"
    with sweep_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    _say(args, f"sweep metrics written to {sweep_path}")
    return 0


def cmd_validate(args) -> int:
    try:
        config = load_scenario(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            _fail("config-invalid", e)
        return EXIT_CONFIG
    print(
        f"{args.config}: ok ({len(config.topology.nodes)} nodes, "
        f"{len(config.topology.cluster_heads)} clusters, horizon {config.horizon})"
    )
    return 0


def cmd_ekf(args) -> int:
    try:
        trace = load_trace(args.trace, args.node_id, SensorKind(args.kind))
        model = ekf.random_walk_model(args.q, args.r)
        x0 = trace.readings[0].value if args.x0 is None else args.x0
        init = ekf.FilterState([x0], [[args.p0]])
        points = ekf.run_filter(model, init, trace)
    except RUNTIME_ERRORS as exc:
        _fail("runtime-failure", str(exc))
        return EXIT_RUNTIME
    out = _out_dir(args)
    path = out / "ekf.csv"
    ekf.write_filter_csv(points, path)
    _say(args, f"{len(points)} estimates written to {path}")
    return 0


def cmd_fusvaf(args) -> int:
    kind = SensorKind(args.kind)
    try:
        traces = []
        for i, path in enumerate(args.trace):
            node_id = f"{Path(path).stem}"
            if any(t.node_id == node_id for t in traces):
                node_id = f"{node_id}_{i}"
            traces.append(load_trace(path, node_id, kind))
        predictor = (
            fusvaf.SmoothingPredictor() if args.predictor == "smoothing"
            else fusvaf.EkfPredictor(args.q, args.r)
        )
        adaptation = fusvaf.GateAdaptation(
            k_sigma=args.k_sigma,
            w_min=args.w_min,
            w_max=args.w_max,
            window=args.window,
            initial_half_width=args.initial_width,
        )
        points = fusvaf.fusvaf_stream(
            traces,
            fusvaf.FusionParams(args.alpha, args.omega),
            predictor=predictor,
            adaptation=adaptation,
        )
    except RUNTIME_ERRORS as exc:
        _fail("runtime-failure", str(exc))
        return EXIT_RUNTIME
    except ValueError as exc:
        _fail("config-invalid", str(exc))
        return EXIT_CONFIG
    out = _out_dir(args)
    path = out / "fusvaf.csv"
    fusvaf.write_fusion_csv(points, [t.node_id for t in traces], path)
    _say(args, f"{len(points)} fused ticks written to {path}")
    return 0


def _load_edges(path) -> list:
    edges = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["i", "j"]:
            raise TraceError(f"{path}: expected header 'i,j'")
        for row_num, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                edges.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError):
                raise TraceError(f"{path}: row {row_num}: expected two integers") from None
    return edges


def cmd_consensus(args) -> int:
    try:
        values = [float(v) for v in args.values.split(",") if v]
    except ValueError:
        _fail("config-invalid", f"--values {args.values!r}: expected comma-separated numbers")
        return EXIT_CONFIG
    if not values:
        _fail("config-invalid", "--values: at least one value required")
        return EXIT_CONFIG
    try:
        if args.edges is not None:
            graph = consensus_mod.CommGraph.from_edges(len(values), _load_edges(args.edges))
        else:
            graph = consensus_mod.CommGraph.complete(len(values))
        run = consensus_mod.run_consensus(
            consensus_mod.ConsensusState(values), graph,
            tol=args.tol, max_iter=args.max_iter,
        )
    except RUNTIME_ERRORS as exc:
        _fail("runtime-failure", str(exc))
        return EXIT_RUNTIME
    except ValueError as exc:
        _fail("config-invalid", str(exc))
        return EXIT_CONFIG
    out = _out_dir(args)
    path = out / "consensus_mse.csv"
    consensus_mod.write_mse_csv(run.mse_history, path)
    status = "converged" if run.converged else "NOT converged (degraded confidence)"
    _say(args, f"{status} after {run.iterations} iterations; "
               f"agreed value {float(run.estimates.mean())!r}")
    _say(args, f"mse history written to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipefuse",
        description="Sensor-fusion toolkit and pipeline-monitoring simulator",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario end to end")
    run.add_argument("--config", required=True, help="scenario YAML path")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--override", action="append", default=[], metavar="K=V",
                     help="override a config key (dotted path), repeatable")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a scenario once per parameter value")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True, metavar="K=V1,V2,...",
                       help="config key and comma-separated values")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", default="out")
    sweep.add_argument("--override", action="append", default=[], metavar="K=V")
    sweep.set_defaults(func=cmd_sweep)

    validate = sub.add_parser("validate", help="validate a scenario config (writes nothing)")
    validate.add_argument("--config", required=True)
    validate.set_defaults(func=cmd_validate)

    ekf_p = sub.add_parser("ekf", help="filter one trace CSV")
    ekf_p.add_argument("--trace", required=True, help="timestamp,value CSV")
    ekf_p.add_argument("--kind", default="temperature",
                       choices=[k.value for k in SensorKind])
    ekf_p.add_argument("--node-id", default="n0")
    ekf_p.add_argument("--q", type=float, default=0.1, help="process noise variance")
    ekf_p.add_argument("--r", type=float, default=0.1, help="measurement noise variance")
    ekf_p.add_argument("--x0", type=float, default=None,
                       help="initial estimate (default: first measurement)")
    ekf_p.add_argument("--p0", type=float, default=1.0, help="initial variance")
    ekf_p.add_argument("--out", default="out")
    ekf_p.set_defaults(func=cmd_ekf)

    fus = sub.add_parser("fusvaf", help="fuse one or more trace CSVs")
    fus.add_argument("--trace", required=True, action="append",
                     help="timestamp,value CSV (repeat per sensor)")
    fus.add_argument("--kind", default="temperature",
                     choices=[k.value for k in SensorKind])
    fus.add_argument("--alpha", type=float, default=1.0)
    fus.add_argument("--omega", type=float, default=1.0)
    fus.add_argument("--predictor", choices=["ekf", "smoothing"], default="ekf")
    fus.add_argument("--q", type=float, default=0.1)
    fus.add_argument("--r", type=float, default=0.1)
    fus.add_argument("--k-sigma", type=float, default=3.0)
    fus.add_argument("--w-min", type=float, default=0.1)
    fus.add_argument("--w-max", type=float, default=100.0)
    fus.add_argument("--window", type=int, default=10)
    fus.add_argument("--initial-width", type=float, default=None)
    fus.add_argument("--out", default="out")
    fus.set_defaults(func=cmd_fusvaf)

    cons = sub.add_parser("consensus", help="iterate consensus on a value vector")
    cons.add_argument("--values", required=True, help="comma-separated initial values")
    cons.add_argument("--edges", default=None,
                      help="edge CSV with header i,j (default: complete graph)")
    cons.add_argument("--tol", type=float, default=1e-12)
    cons.add_argument("--max-iter", type=int, default=10_000)
    cons.add_argument("--out", default="out")
    cons.set_defaults(func=cmd_consensus)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
