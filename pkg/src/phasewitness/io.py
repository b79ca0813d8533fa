"""Configuration parsing and on-disk formats.

Config files are JSON with units in the field names (``*_rad``).  Any
``*_deg`` field is converted to its ``*_rad`` twin when parsed.  Event logs
are CSV with a fixed header, ``.`` decimals, ``\\n`` line endings and
shortest round-trip float formatting, so equal runs give equal bytes.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
from scipy import stats

from .engine import (
    CODE_NOT_GOOD,
    CorrelationSummary,
    Destructive,
    EventLog,
    ExperimentConfig,
    GoodClass,
    QND,
    classify_counts,
)
from .fock import SqueezeParams
from .optics import DetectorModel, Resolving, Topology
from .sources import CustomPhase, RudolphSanders, SourceModel, TwoSource, VanEnkFuchs

ARTIFACT_VERSION = "0.1.0"

EVENT_COLUMNS = (
    "shot_index", "beta_rad", "delta_rad", "count_a", "count_b",
    "good", "good_class", "phi1_rad", "phi2_rad",
)
PREDICTION_COLUMNS = ("beta_rad", "delta_rad", "model", "p11", "p_diff", "p00", "conditional_coincidence")
RATE_COLUMNS = ("r", "lambda", "good_event_rate", "contamination_ratio")


class ConfigError(ValueError):
    """Configuration cannot be parsed or fails validation."""


def convert_degrees(obj: Any) -> Any:
    """Recursively replace ``*_deg`` keys by ``*_rad`` keys."""
    if isinstance(obj, list):
        return [convert_degrees(v) for v in obj]
    if not isinstance(obj, dict):
        return obj
    out = {}
    for key, value in obj.items():
        value = convert_degrees(value)
        if isinstance(key, str) and key.endswith("_deg"):
            rad_key = key[: -len("_deg")] + "_rad"
            if rad_key in obj:
                raise ConfigError(f"both {key!r} and {rad_key!r} given")
            out[rad_key] = _to_radians(value, key)
        else:
            out[key] = value
    return out


def _to_radians(value, key):
    if isinstance(value, list):
        return [_to_radians(v, key) for v in value]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{key} must be numeric")
    return math.radians(value)


def load_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _number(d: dict, key: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ConfigError(f"missing field {key!r}")
        return default
    v = d[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ConfigError(f"{key} must be a finite number, got {v!r}")
    return float(v)


def parse_params(d: dict) -> SqueezeParams:
    if "r" in d and "lambda" in d:
        raise ConfigError("give either r or lambda, not both")
    try:
        if "lambda" in d:
            return SqueezeParams.from_lambda(_number(d, "lambda"))
        return SqueezeParams(_number(d, "r"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_model(d: Any) -> SourceModel:
    if isinstance(d, str):
        d = {"kind": d}
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("model must be an object with a 'kind'")
    kind = d["kind"]
    if kind in ("VanEnkFuchs", "vEF"):
        return VanEnkFuchs(_number(d, "phi_rad", 0.0))
    if kind in ("RudolphSanders", "RS"):
        return RudolphSanders()
    if kind == "TwoSource":
        return TwoSource(_number(d, "phi1_rad", 0.0), _number(d, "phi2_rad"))
    if kind == "CustomPhase":
        name = d.get("distribution")
        dist = getattr(stats, str(name), None)
        if dist is None or not hasattr(dist, "ppf"):
            raise ConfigError(f"unknown scipy.stats distribution {name!r}")
        try:
            frozen = dist(**d.get("args", {}))
            spec = {"kind": "CustomPhase", "distribution": name, "args": d.get("args", {}),
                    "shared": bool(d.get("shared", False))}
            return CustomPhase(frozen, bool(d.get("shared", False)), json.dumps(spec, sort_keys=True))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad CustomPhase distribution: {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


def model_to_dict(model: SourceModel) -> dict:
    if isinstance(model, VanEnkFuchs):
        return {"kind": "VanEnkFuchs", "phi_rad": model.phi}
    if isinstance(model, RudolphSanders):
        return {"kind": "RudolphSanders"}
    if isinstance(model, TwoSource):
        return {"kind": "TwoSource", "phi1_rad": model.phi1, "phi2_rad": model.phi2}
    if isinstance(model, CustomPhase):
        try:
            return json.loads(model.label)
        except json.JSONDecodeError:
            raise ConfigError("CustomPhase built in code cannot be serialized") from None
    raise ConfigError(f"unknown model {model!r}")


def parse_detector(d: Any) -> DetectorModel:
    d = d or {}
    try:
        return DetectorModel(
            Topology(d.get("topology", Topology.ABSORBING_POLARIZER.value)),
            Resolving(d.get("resolving", Resolving.PHOTON_NUMBER_RESOLVING.value)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_pipeline(d: Any):
    if d is None or d == "Destructive" or (isinstance(d, dict) and d.get("kind") == "Destructive"):
        return Destructive()
    if isinstance(d, dict) and d.get("kind") == "QND":
        n = d.get("n", 1)
        if not isinstance(n, int) or n < 0:
            raise ConfigError("QND pipeline needs an integer n >= 0")
        return QND(n)
    raise ConfigError(f"unknown pipeline {d!r}")


def parse_config(raw: dict, *, seed: int | None = None, allow_zero_shots: bool = False) -> ExperimentConfig:
    """Build a validated :class:`ExperimentConfig` from a JSON object.

    A run manifest is accepted too; its embedded config is used.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]
    raw = convert_degrees(raw)
    params = parse_params(raw)
    betas = raw.get("betas_rad")
    if not isinstance(betas, list) or not betas:
        raise ConfigError("betas_rad must be a non-empty list")
    betas = [_number({"beta": b}, "beta") for b in betas]
    for b in betas:
        if not 0.0 <= b < math.pi:
            raise ConfigError(f"beta {b!r} outside [0, pi)")
    shots = raw.get("shots_per_beta", 1000)
    if not isinstance(shots, int) or isinstance(shots, bool) or shots < 0:
        raise ConfigError("shots_per_beta must be a non-negative integer")
    if shots == 0 and not allow_zero_shots:
        raise ConfigError("shots_per_beta must be >= 1")
    cutoff = raw.get("cutoff")
    if cutoff is not None and (not isinstance(cutoff, int) or isinstance(cutoff, bool)):
        raise ConfigError("cutoff must be an integer or null")
    run_seed = raw.get("seed", 0) if seed is None else seed
    if not isinstance(run_seed, int) or isinstance(run_seed, bool):
        raise ConfigError("seed must be an integer")
    # TruncationError from the cutoff check propagates unchanged
    return ExperimentConfig(
        params=params,
        model=parse_model(raw.get("model", "VanEnkFuchs")),
        detector=parse_detector(raw.get("detector")),
        betas=tuple(betas),
        delta=_number(raw, "delta_rad", 0.0),
        shots_per_beta=shots,
        pipeline=parse_pipeline(raw.get("pipeline")),
        seed=run_seed,
        cutoff=cutoff,
    )


def config_to_dict(config: ExperimentConfig) -> dict:
    pipeline = {"kind": "QND", "n": config.pipeline.n} if isinstance(config.pipeline, QND) else {"kind": "Destructive"}
    return {
        "r": config.params.r,
        "cutoff": config.cutoff,
        "model": model_to_dict(config.model),
        "detector": {
            "topology": config.detector.topology.value,
            "resolving": config.detector.resolving.value,
        },
        "betas_rad": list(config.betas),
        "delta_rad": config.delta,
        "shots_per_beta": config.shots_per_beta,
        "pipeline": pipeline,
        "seed": config.seed,
    }


# ---------------------------------------------------------------- event CSV

def _fmt(x: float) -> str:
    return repr(float(x))


def event_csv_lines(log: EventLog):
    yield ",".join(EVENT_COLUMNS) + "\n"
    names = [GoodClass.from_code(c).value for c in range(4)]
    cols = (
        log.shot_index.tolist(), log.beta.tolist(), log.delta.tolist(),
        log.count_a.tolist(), log.count_b.tolist(), log.good_class.tolist(),
        log.phi1.tolist(), log.phi2.tolist(),
    )
    for shot, beta, delta, a, b, code, p1, p2 in zip(*cols):
        yield (
            f"{shot},{beta!r},{delta!r},{a},{b},{0 if code == CODE_NOT_GOOD else 1},"
            f"{names[code]},{p1!r},{p2!r}\n"
        )


def write_events_csv(log: EventLog, path) -> str:
    """Write the event log; returns its SHA-256."""
    digest = hashlib.sha256()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        buf = []
        for line in event_csv_lines(log):
            buf.append(line)
            if len(buf) >= 65536:
                chunk = "".join(buf)
                fh.write(chunk)
                digest.update(chunk.encode())
                buf.clear()
        chunk = "".join(buf)
        fh.write(chunk)
        digest.update(chunk.encode())
    return digest.hexdigest()


def events_csv_bytes(log: EventLog) -> bytes:
    return "".join(event_csv_lines(log)).encode()


def read_events_csv(path) -> EventLog:
    """Load an event log, checking that stored classes match the counts."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != EVENT_COLUMNS:
            raise ConfigError(f"{path}: header must be {','.join(EVENT_COLUMNS)}")
        cols = [[] for _ in EVENT_COLUMNS]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(EVENT_COLUMNS):
                raise ConfigError(f"{path}:{lineno}: expected {len(EVENT_COLUMNS)} fields")
            for c, v in zip(cols, row):
                c.append(v)
    try:
        count_a = np.array(cols[3], dtype=np.int64)
        count_b = np.array(cols[4], dtype=np.int64)
        log = EventLog(
            shot_index=np.array(cols[0], dtype=np.int64),
            beta=np.array(cols[1], dtype=np.float64),
            delta=np.array(cols[2], dtype=np.float64),
            count_a=count_a,
            count_b=count_b,
            good_class=classify_counts(count_a, count_b),
            phi1=np.array(cols[7], dtype=np.float64),
            phi2=np.array(cols[8], dtype=np.float64),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed value: {exc}") from exc
    names = np.array([GoodClass.from_code(c).value for c in log.good_class.tolist()], dtype=object)
    stored = np.array(cols[6], dtype=object)
    good_flag = np.array(cols[5], dtype=object)
    expected_flag = np.where(log.good_class != CODE_NOT_GOOD, "1", "0")
    if len(log) and (np.any(names != stored) or np.any(good_flag != expected_flag)):
        bad = int(np.flatnonzero((names != stored) | (good_flag != expected_flag))[0])
        raise ConfigError(f"{path}: row {bad + 2} good/good_class inconsistent with counts")
    return log


# ------------------------------------------------------------- JSON outputs

def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def summaries_to_json(summaries) -> list[dict]:
    return [s.to_dict() for s in summaries]


def summaries_from_json(data) -> list[CorrelationSummary]:
    return [CorrelationSummary.from_dict(d) for d in data]


SUMMARY_COLUMNS = (
    "beta_rad", "delta_rad", "n_total", "n_good", "n_coincidence", "n_single", "n_single_10",
    "n_single_01", "n_zero_zero", "n_discarded", "conditional_coincidence",
    "unconditional_coincidence", "wilson_low", "wilson_high",
)


def rows_to_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join("" if row[c] is None else (repr(row[c]) if isinstance(row[c], float) else str(row[c])) for c in columns))
    return "\n".join(lines) + "\n"


def summaries_to_csv(summaries) -> str:
    return rows_to_csv(SUMMARY_COLUMNS, summaries_to_json(summaries))


def predictions_to_rows(rows) -> list[dict]:
    return [
        {
            "beta_rad": r.beta, "delta_rad": r.delta, "model": r.model, "p11": r.p11,
            "p_diff": r.p_diff, "p00": r.p00, "conditional_coincidence": r.conditional_coincidence,
        }
        for r in rows
    ]


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def make_manifest(config: ExperimentConfig, outputs: dict, started: _dt.datetime, events_sha256: str,
                  backend: str) -> dict:
    return {
        "artifact_version": ARTIFACT_VERSION,
        "seed": config.seed,
        "config": config_to_dict(config),
        "started_utc": started.isoformat(),
        "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "kernel_backend": backend,
        "outputs": outputs,
        "events_sha256": events_sha256,
    }
