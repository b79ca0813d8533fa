"""Command-line entry point.

Exit codes: 0 ok/decided, 2 usage or config error, 3 numeric validity
error, 4 inconclusive, 5 oracle failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, engine, kernels, oracle
from .fock import FockError, SqueezeParams, TruncationError
from .io import (
    PREDICTION_COLUMNS,
    RATE_COLUMNS,
    ConfigError,
    convert_degrees,
    dump_json,
    load_json,
    make_manifest,
    parse_config,
    predictions_to_rows,
    read_events_csv,
    rows_to_csv,
    summaries_from_json,
    summaries_to_csv,
    summaries_to_json,
    write_events_csv,
)
from .sources import TwoSource

log = logging.getLogger("phasewitness")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_INCONCLUSIVE = 4
EXIT_ORACLE = 5

QUARTER_PI = math.pi / 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(text: str, args, filename: str) -> None:
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(text)
    else:
        (out / filename).write_text(text, encoding="utf-8")
        log.info("wrote %s", out / filename)


def _raw_config(args, required: bool = True) -> dict | None:
    if args.config is None:
        if required:
            raise CliError("--config is required")
        return None
    raw = load_json(args.config)
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object")
    return raw


def _float_list(raw: dict, key: str, default=None) -> list[float]:
    value = raw.get(key, default)
    if value is None:
        raise CliError(f"missing {key}")
    if not isinstance(value, list) or not value:
        raise CliError(f"{key} must be a non-empty list")
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise CliError(f"{key} must hold numbers") from None
    if not all(math.isfinite(v) for v in out):
        raise CliError(f"{key} must hold finite numbers")
    return out


# ------------------------------------------------------------------ commands

def cmd_predict(args) -> int:
    raw = convert_degrees(_raw_config(args))
    rows = []
    has_angles = "betas_rad" in raw
    if has_angles:
        betas = _float_list(raw, "betas_rad")
        deltas = _float_list(raw, "deltas_rad", [raw.get("delta_rad", 0.0)])
        models = []
        for m in raw.get("models", ["vEF", "RS"]):
            if isinstance(m, dict) and "TwoSource" in m:
                models.append(("TwoSource", float(m["TwoSource"])))
            elif m in ("vEF", "RS"):
                models.append(m)
            else:
                raise CliError(f"unknown prediction model {m!r}")
        rows = predictions_to_rows(analysis.prediction_table(betas, deltas, models))
    rates = []
    if "r_grid" in raw:
        for r in _float_list(raw, "r_grid"):
            if r < 0:
                raise CliError(f"r must be >= 0, got {r}")
            params = SqueezeParams(r)
            rates.append({
                "r": r,
                "lambda": params.lam,
                "good_event_rate": analysis.predict_good_event_rate(params),
                "contamination_ratio": analysis.contamination_ratio(params) if r > 0 else None,
            })
    if not has_angles and "r_grid" not in raw:
        raise CliError("predict needs betas_rad and/or r_grid")
    if args.format == "json":
        _emit(dump_json({"predictions": rows, "rates": rates}), args, "predictions.json")
    else:
        if rows:
            _emit(rows_to_csv(PREDICTION_COLUMNS, rows), args, "predictions.csv")
        if rates:
            _emit(rows_to_csv(RATE_COLUMNS, rates), args, "rates.csv")
    return EXIT_OK


def _simulate(config: engine.ExperimentConfig, args) -> tuple[engine.SweepResult, str]:
    started = dt.datetime.now(dt.timezone.utc)
    result = engine.run_sweep(config)
    if engine.summarize(result.log) != result.summaries:
        raise CliError("summary recount disagrees with event log", EXIT_ORACLE)
    out = _out_dir(args)
    summary_name = "summary.csv" if args.format == "csv" else "summary.json"
    summary_text = summaries_to_csv(result.summaries) if args.format == "csv" else dump_json(summaries_to_json(result.summaries))
    if out is not None:
        digest = write_events_csv(result.log, out / "events.csv")
        (out / summary_name).write_text(summary_text, encoding="utf-8")
        manifest = make_manifest(
            config,
            {"events": "events.csv", "summary": summary_name, "manifest": "manifest.json"},
            started,
            digest,
            kernels.backend_name(),
        )
        dump_json(manifest, out / "manifest.json")
        log.info("events sha256 %s", digest)
    return result, summary_text


def cmd_simulate(args) -> int:
    config = parse_config(_raw_config(args), seed=args.seed)
    _, summary_text = _simulate(config, args)
    if args.out is None:
        sys.stdout.write(summary_text)
    return EXIT_OK


def _quarter_pi_events(events: engine.EventLog) -> engine.EventLog:
    mask = np.isclose(events.beta, QUARTER_PI, rtol=0, atol=1e-9) & np.isclose(events.delta, 0.0, rtol=0, atol=1e-12)
    if not mask.any():
        raise CliError("no events at beta = pi/4 with zero retardance")
    return events.select(mask)


def cmd_discriminate(args) -> int:
    if args.events:
        events = read_events_csv(args.events)
    else:
        config = parse_config(_raw_config(args), seed=args.seed)
        events = engine.run_sweep(config).log
    quarter = _quarter_pi_events(events)
    good = quarter.select(quarter.good)
    classes = [engine.GoodClass.from_code(c) for c in good.good_class.tolist()]
    result = analysis.discriminate(classes, threshold=args.threshold)
    _emit(dump_json(result.to_dict()), args, "discrimination.json")
    return EXIT_INCONCLUSIVE if result.verdict is analysis.Verdict.INCONCLUSIVE else EXIT_OK


def default_delta_grid(points: int = 16) -> list[float]:
    return [2 * math.pi * k / points for k in range(points)]


def cmd_estimate_phase(args) -> int:
    raw = convert_degrees(_raw_config(args))
    base = parse_config({**raw, "betas_rad": [QUARTER_PI]}, seed=args.seed)
    if not isinstance(base.model, TwoSource):
        raise CliError("estimate-phase needs a TwoSource model")
    deltas = _float_list(raw, "deltas_rad", default_delta_grid())
    method = analysis.PhaseMethod(raw.get("method", args.method))
    per_delta = raw.get("good_events_per_delta")
    summaries = []
    logs = []
    for delta in deltas:
        cfg = replace(base, delta=delta)
        if per_delta:
            events = engine.collect_good_events(cfg, QUARTER_PI, int(per_delta))
        else:
            events = engine.run_sweep(cfg).log
        logs.append(events)
        summaries.extend(engine.summarize(events))
    estimate = analysis.estimate_phase_difference(summaries, method)
    report = estimate.to_dict()
    report["true_delta_rad"] = base.model.phase_difference
    report["deltas_rad"] = deltas
    out = _out_dir(args)
    if out is not None:
        write_events_csv(engine.EventLog.concat(logs), out / "events.csv")
        dump_json(summaries_to_json(summaries), out / "summary.json")
    _emit(dump_json(report), args, "phase_estimate.json")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    raw = _raw_config(args, required=False)
    if raw is None:
        config = oracle.default_config()
        if args.seed is not None:
            config = replace(config, seed=args.seed)
    else:
        config = parse_config(raw, seed=args.seed, allow_zero_shots=True)
    results = oracle.run_oracle_checks(config, _out_dir(args))
    for r in results:
        print(r.line())
    out = _out_dir(args)
    if out is not None:
        dump_json([r.__dict__ for r in results], out / "oracle_report.json")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"oracle failure: {', '.join(failed)}", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def cmd_ingest(args) -> int:
    if not args.events:
        raise CliError("ingest needs --events PATH")
    summaries = engine.summarize(read_events_csv(args.events))
    if args.summary:
        stored = summaries_from_json(load_json(args.summary))
        if stored != summaries:
            print("stored summary disagrees with the event log recount", file=sys.stderr)
            return EXIT_ORACLE
    text = summaries_to_csv(summaries) if args.format == "csv" else dump_json(summaries_to_json(summaries))
    _emit(text, args, "summary.csv" if args.format == "csv" else "summary.json")
    return EXIT_OK


COMMANDS = {
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "discriminate": cmd_discriminate,
    "estimate-phase": cmd_estimate_phase,
    "oracle-check": cmd_oracle_check,
    "ingest": cmd_ingest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config (or run manifest)")
    common.add_argument("--out", metavar="DIR", help="output directory (default: stdout)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="phasewitness", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("predict", parents=[common], help="closed-form prediction tables")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo sweep with event log and manifest")
    p = sub.add_parser("discriminate", parents=[common], help="fixed- vs random-phase verdict")
    p.add_argument("--events", metavar="PATH", help="event log CSV (otherwise simulate --config)")
    p.add_argument("--threshold", type=float, default=analysis.DEFAULT_THRESHOLD, help="decision threshold in nats")
    p = sub.add_parser("estimate-phase", parents=[common], help="two-source phase difference")
    p.add_argument("--method", choices=[m.value for m in analysis.PhaseMethod], default="FringeFit")
    sub.add_parser("oracle-check", parents=[common], help="run the invariant and oracle suite")
    p = sub.add_parser("ingest", parents=[common], help="recount summaries from an event log")
    p.add_argument("--events", metavar="PATH")
    p.add_argument("--summary", metavar="PATH", help="stored summary JSON to verify")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    if args.format is None:
        args.format = "csv" if args.command == "predict" else "json"
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TruncationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, FockError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
