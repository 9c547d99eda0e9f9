"""Command-line surface: train, blanket, infer, evaluate, simulate, replay.

Exit codes: 0 on success, 1 for usage errors, 2 for data or model errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import report as reporting
from .graph import GraphError, blanket_dot, merged_blanket
from .inference import InferenceError
from .learn import fit_cpts, hill_climb
from .model_io import ModelFormatError, load_model, save_model
from .reconfig import DeviceConfig, infer_best_config
from .sim import (
    full_sweep,
    ground_truth,
    parse_schedule,
    replay,
    sample_telemetry,
    scenario_evidence,
    scenario_slos,
)
from .slo import SloParseError, empirical_fulfillment, parse_slos
from .telemetry import (
    DEFAULT_SCHEMA,
    TelemetryError,
    discretize,
    load_telemetry,
    write_csv,
)

_DATA_ERRORS = (
    TelemetryError, SloParseError, ModelFormatError, GraphError, InferenceError,
    FileNotFoundError, IsADirectoryError, PermissionError, ValueError, KeyError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise _UsageError(message)


def _parse_evidence(pairs: list[str]) -> dict[str, str]:
    evidence = {}
    for pair in pairs:
        if "=" not in pair:
            raise _UsageError(f"evidence must be key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        evidence[key.strip()] = value.strip()
    return evidence


def _slo_anchors(slos) -> dict[str, list[float]]:
    """Cut points that align bin edges with SLO thresholds and frame budgets."""
    anchors: dict[str, list[float]] = {}
    for slo in slos:
        if slo.kind == "bound":
            anchors.setdefault(slo.metrics[0], []).append(slo.threshold)
        elif slo.kind == "range":
            anchors.setdefault(slo.metrics[0], []).extend([slo.lo, slo.hi])
        elif slo.kind == "composite":
            # Frame budgets depend on the paired rate metric's values, which
            # are only known after the data is seen; handled in cmd_train.
            anchors.setdefault(slo.metrics[0], [])
    return anchors


def cmd_train(args) -> int:
    started = time.perf_counter()
    raw = load_telemetry(args.input, DEFAULT_SCHEMA)
    anchors: dict[str, list[float]] = {}
    slos = ()
    if args.slos:
        slos = parse_slos(Path(args.slos).read_text(encoding="utf-8"))
        anchors = _slo_anchors(slos)
        for slo in slos:
            if slo.kind == "composite":
                delay_metric, rate_metric = slo.metrics
                rates = sorted(set(float(v) for v in raw.column(rate_metric).values))
                anchors.setdefault(delay_metric, []).extend(
                    1000.0 / r for r in rates if r > 0
                )
    data, _ = discretize(raw, max_categories=args.max_categories, bins=args.bins,
                         anchors=anchors)
    trace: list[float] = []
    # Swept device parameters are operator-set knobs; nothing in the system
    # causes them, so they may not receive incoming edges.
    exogenous = raw.parameterizable_names
    dag = hill_climb(data, max_parents=args.max_parents, tabu_len=args.tabu_len,
                     exogenous=exogenous, trace=trace)
    bn = fit_cpts(data, dag, alpha=args.alpha)
    save_model(bn, args.out)
    elapsed = time.perf_counter() - started
    print(f"rows       {raw.row_count}")
    print(f"variables  {len(data.metas)}")
    print(f"edges      {len(dag.edges)}")
    print(f"bic        {trace[-1]:.3f}")
    print(f"model      {args.out}")
    print(f"wall_time  {elapsed:.2f}s")
    return 0


def _blanket_targets(bn, args) -> list[tuple[str, tuple[str, ...]]]:
    """(label, target metrics) pairs to report blankets for."""
    if args.metric:
        return [(m, (m,)) for m in args.metric]
    if args.slos:
        slos = parse_slos(Path(args.slos).read_text(encoding="utf-8"), bn.metas)
        if args.slo:
            chosen = [s for s in slos if s.name == args.slo]
            if not chosen:
                raise ValueError(f"no SLO named {args.slo!r} in {args.slos}")
            slos = chosen
        return [(s.name, s.metrics) for s in slos]
    raise _UsageError("blanket needs --metric or --slos")


def cmd_blanket(args) -> int:
    bn = load_model(args.model)
    param = set(bn.parameterizable_names)
    reports = []
    for label, metrics in _blanket_targets(bn, args):
        blanket = merged_blanket(bn.dag, metrics, param)
        reports.append((label, blanket))
        print(f"{label}: targets {', '.join(sorted(blanket.targets))}")
        if not blanket.members:
            print("  (empty blanket: no connected variables)")
        for member in blanket.members:
            roles = ", ".join(sorted(blanket.roles[member]))
            flag = "  [param]" if member in blanket.parameterizable else ""
            print(f"  {member}: {roles}{flag}")
    if args.dot:
        if len(reports) != 1:
            raise _UsageError("--dot needs exactly one blanket (one --metric or --slo)")
        Path(args.dot).write_text(blanket_dot(bn.dag, reports[0][1]), encoding="utf-8")
        print(f"dot        {args.dot}")
    return 0


def cmd_infer(args) -> int:
    bn = load_model(args.model)
    slos = parse_slos(Path(args.slos).read_text(encoding="utf-8"), bn.metas)
    constraints = _parse_evidence(args.evidence)
    started = time.perf_counter()
    ranked = infer_best_config(bn, slos, constraints)
    elapsed = time.perf_counter() - started

    if ranked.none_feasible:
        print("NONE-FEASIBLE: no configuration satisfies every SLO; "
              "showing least-violating first")
    header, rows = reporting.config_report_table(ranked, slos)
    if args.format == "json":
        payload = [dict(zip(header, row)) for row in rows]
        print(json.dumps({"none_feasible": ranked.none_feasible,
                          "queries": ranked.query_count,
                          "configs": payload}, indent=2))
    else:
        limit = args.top if args.top > 0 else len(rows)
        print(reporting.render_table(header, rows[:limit]), end="")
        best = ranked.best
        print(f"recommended: {best.config.describe()}"
              f" (feasible={'yes' if best.feasible else 'no'})")
    print(f"queries    {ranked.query_count}")
    print(f"wall_time  {elapsed * 1000.0:.1f}ms")
    if args.out:
        reporting.write_config_report(args.out, ranked, slos)
        print(f"report     {args.out}")
        if not args.no_figure:
            figure = Path(args.out).with_suffix(".png")
            reporting.render_config_figure(figure, ranked, slos)
            print(f"figure     {figure}")
    return 0


def cmd_evaluate(args) -> int:
    raw = load_telemetry(args.input, DEFAULT_SCHEMA)
    slos = parse_slos(Path(args.slos).read_text(encoding="utf-8"))
    result = empirical_fulfillment(raw, slos)
    header, rows = reporting.fulfillment_table(result)
    if args.format == "json":
        print(json.dumps([dict(zip(header, row)) for row in rows], indent=2))
    else:
        print(reporting.render_table(header, rows), end="")
    if result.violations:
        print("violated: " + ", ".join(result.violations))
    if args.out:
        reporting.write_fulfillment_report(args.out, result)
        print(f"report     {args.out}")
        if not args.no_figure:
            figure = Path(args.out).with_suffix(".png")
            reporting.render_fulfillment_figure(figure, result)
            print(f"figure     {figure}")
    return 0


def cmd_simulate(args) -> int:
    bn = ground_truth(args.net_seed)
    if args.schedule:
        schedule = parse_schedule(Path(args.schedule).read_text(encoding="utf-8"))
    else:
        schedule = full_sweep()
    dataset = sample_telemetry(bn, schedule, rows_per_dwell=args.rows_per_dwell,
                               seed=args.seed)
    write_csv(dataset, args.out)
    print(f"rows       {dataset.row_count}")
    print(f"columns    {len(dataset.columns)}")
    print(f"csv        {args.out}")
    return 0


def cmd_replay(args) -> int:
    bn = ground_truth(args.net_seed)
    slos = scenario_slos(args.scenario)
    gpu_label = args.gpu if args.gpu else scenario_evidence(args.scenario)["gpu"]
    gpu = gpu_label.strip().lower() in ("true", "t", "1")
    assignment = _parse_evidence(args.set)
    expected = set(bn.parameterizable_names)
    missing = expected - set(assignment)
    if missing:
        raise _UsageError(f"replay config must set {sorted(expected)}; missing {sorted(missing)}")
    config = DeviceConfig(assignment, "manual")
    result = replay(bn, config, gpu, slos, n_rows=args.rows, seed=args.seed)
    header, rows = reporting.fulfillment_table(result)
    print(reporting.render_table(header, rows), end="")
    if result.violations:
        print("violated: " + ", ".join(result.violations))
    else:
        print("violated: none")
    if args.out:
        reporting.write_fulfillment_report(args.out, result)
        print(f"report     {args.out}")
        if not args.no_figure:
            figure = Path(args.out).with_suffix(".png")
            reporting.render_fulfillment_figure(figure, result)
            print(f"figure     {figure}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="slobn",
                     description="Telemetry-driven Bayesian networks for SLO-aware "
                                 "device reconfiguration")
    sub = parser.add_subparsers(dest="command", metavar="command")

    train = sub.add_parser("train", help="learn a model from a telemetry CSV")
    train.add_argument("input", help="telemetry CSV path")
    train.add_argument("--out", required=True, help="model file to write")
    train.add_argument("--bins", type=int, default=8)
    train.add_argument("--max-categories", type=int, default=12)
    train.add_argument("--max-parents", type=int, default=4)
    train.add_argument("--tabu-len", type=int, default=100)
    train.add_argument("--alpha", type=float, default=1.0,
                       help="CPT smoothing pseudo-count")
    train.add_argument("--slos", help="SLO file; aligns bin edges with thresholds")
    train.set_defaults(func=cmd_train)

    blanket = sub.add_parser("blanket", help="show Markov blankets of metrics or SLOs")
    blanket.add_argument("model")
    blanket.add_argument("--metric", action="append", default=[],
                         help="target metric (repeatable)")
    blanket.add_argument("--slos", help="SLO file; reports one blanket per SLO")
    blanket.add_argument("--slo", help="restrict --slos to one named SLO")
    blanket.add_argument("--dot", help="write the blanket as a Graphviz file")
    blanket.set_defaults(func=cmd_blanket)

    infer = sub.add_parser("infer", help="rank configurations against the SLOs")
    infer.add_argument("model")
    infer.add_argument("--slos", required=True)
    infer.add_argument("--evidence", action="append", default=[], metavar="KEY=VALUE",
                       help="extra evidence, e.g. gpu=False (repeatable)")
    infer.add_argument("--format", choices=("table", "json"), default="table")
    infer.add_argument("--top", type=int, default=10,
                       help="rows to print in table mode (0 = all)")
    infer.add_argument("--out", help="write the full ranking as CSV")
    infer.add_argument("--no-figure", action="store_true",
                       help="skip the PNG rendered next to --out")
    infer.set_defaults(func=cmd_infer)

    evaluate = sub.add_parser("evaluate", help="evaluate SLOs over a telemetry window")
    evaluate.add_argument("input", help="telemetry CSV path")
    evaluate.add_argument("--slos", required=True)
    evaluate.add_argument("--format", choices=("table", "json"), default="table")
    evaluate.add_argument("--out", help="write the report as CSV")
    evaluate.add_argument("--no-figure", action="store_true")
    evaluate.set_defaults(func=cmd_evaluate)

    simulate = sub.add_parser("simulate", help="emit synthetic telemetry")
    simulate.add_argument("--out", required=True, help="CSV path to write")
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--net-seed", type=int, default=0)
    simulate.add_argument("--rows-per-dwell", type=int, default=100)
    simulate.add_argument("--schedule", help="schedule file (default: full sweep)")
    simulate.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("replay", help="replay one configuration on the simulator")
    rep.add_argument("--scenario", required=True, choices=("a", "b"))
    rep.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="parameter assignment, e.g. pixel=102240 (repeatable)")
    rep.add_argument("--gpu", help="override the scenario's GPU setting")
    rep.add_argument("--rows", type=int, default=12000)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--net-seed", type=int, default=0)
    rep.add_argument("--out", help="write the report as CSV")
    rep.add_argument("--no-figure", action="store_true")
    rep.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help()
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
