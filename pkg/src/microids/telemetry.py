"""Telemetry data model, JSONL serialization, and time-window arithmetic.

Everything downstream (simulation, graph building, evaluation) consumes the
record types defined here. All types are immutable values after construction;
validation is explicit via ``validate_*`` and is always applied when records
are read from disk.

Timestamps are integer microseconds since epoch throughout, so interval
arithmetic is exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

SERVICES: Tuple[str, ...] = ("frontend", "auth", "catalog", "cart", "order", "payment")
SERVICE_INDEX = {s: i for i, s in enumerate(SERVICES)}

CLASS_LABELS: Tuple[str, ...] = (
    "normal",
    "http_flood",
    "bruteforce_login",
    "sql_injection_probe",
    "ssrf_probe",
    "exfiltration_sim",
)
CLASS_INDEX = {c: i for i, c in enumerate(CLASS_LABELS)}
ATTACK_LABELS: Tuple[str, ...] = CLASS_LABELS[1:]

LOG_LEVELS = ("info", "warn", "error")
SPAN_STATUSES = ("ok", "error")

# Channel list for MetricSample.values. The nine channels cover the attack
# symptoms the detector relies on (request rates, latency, auth failures,
# read volume / response size, connection counts). This naming is a stand-in:
# any standard service-monitoring set with the same shape would do.
METRIC_CHANNELS: Tuple[str, ...] = (
    "cpu_pct",
    "mem_pct",
    "requests_per_s",
    "mean_latency_ms",
    "p95_latency_ms",
    "error_rate",
    "net_in_kbps",
    "net_out_kbps",
    "active_connections",
)
N_METRIC_CHANNELS = len(METRIC_CHANNELS)

# Channels that can never legitimately be negative (rates and percentages).
_NONNEGATIVE_CHANNELS = (0, 1, 2, 5, 6, 7, 8)


class TelemetryError(Exception):
    """Base class for telemetry I/O and validation failures."""


class ParseError(TelemetryError):
    """A JSONL line could not be decoded."""

    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no


class ValidationError(TelemetryError):
    """A decoded record violates a type invariant."""


@dataclass(frozen=True)
class Span:
    span_id: str
    parent_span_id: Optional[str]
    service: str
    start_us: int
    end_us: int
    status: str


@dataclass(frozen=True)
class TraceRecord:
    trace_id: str
    run_id: str
    spans: Tuple[Span, ...]

    @property
    def start_us(self) -> int:
        return min(s.start_us for s in self.spans)

    @property
    def end_us(self) -> int:
        return max(s.end_us for s in self.spans)

    @property
    def interval(self) -> Tuple[int, int]:
        return (self.start_us, self.end_us)


@dataclass(frozen=True)
class LogRecord:
    ts_us: int
    service: str
    level: str
    message: str
    trace_id: Optional[str] = None


@dataclass(frozen=True)
class MetricSample:
    ts_us: int
    service: str
    values: Tuple[float, ...]


@dataclass(frozen=True)
class LabelWindow:
    run_id: str
    class_label: str
    start_us: int
    end_us: int


def windows_overlap(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    """True iff the two intervals share more than a single touching endpoint.

    Half-open rule: ``max(starts) < min(ends)``. A trace that ends exactly
    when an attack window begins does not overlap it.
    """
    return max(a_start, b_start) < min(a_end, b_end)


# ---------------------------------------------------------------------------
# validation


def validate_span(span: Span) -> None:
    if span.end_us < span.start_us:
        raise ValidationError(f"span {span.span_id}: end_us < start_us")
    if span.service not in SERVICE_INDEX:
        raise ValidationError(f"span {span.span_id}: unknown service {span.service!r}")
    if span.status not in SPAN_STATUSES:
        raise ValidationError(f"span {span.span_id}: bad status {span.status!r}")


def validate_trace(trace: TraceRecord) -> None:
    if not trace.spans:
        raise ValidationError(f"trace {trace.trace_id}: no spans")
    ids = {s.span_id for s in trace.spans}
    if len(ids) != len(trace.spans):
        raise ValidationError(f"trace {trace.trace_id}: duplicate span ids")
    roots = 0
    for span in trace.spans:
        validate_span(span)
        if span.parent_span_id is None:
            roots += 1
        elif span.parent_span_id not in ids:
            raise ValidationError(
                f"trace {trace.trace_id}: span {span.span_id} references "
                f"missing parent {span.parent_span_id}"
            )
    if roots != 1:
        raise ValidationError(f"trace {trace.trace_id}: {roots} root spans, expected 1")


def validate_log(log: LogRecord) -> None:
    if not log.message:
        raise ValidationError(f"log at {log.ts_us}: empty message")
    if log.service not in SERVICE_INDEX:
        raise ValidationError(f"log at {log.ts_us}: unknown service {log.service!r}")
    if log.level not in LOG_LEVELS:
        raise ValidationError(f"log at {log.ts_us}: bad level {log.level!r}")


def validate_metric(sample: MetricSample) -> None:
    if len(sample.values) != N_METRIC_CHANNELS:
        raise ValidationError(
            f"metric {sample.service}@{sample.ts_us}: expected "
            f"{N_METRIC_CHANNELS} values, got {len(sample.values)}"
        )
    if sample.service not in SERVICE_INDEX:
        raise ValidationError(f"metric at {sample.ts_us}: unknown service {sample.service!r}")
    for i, v in enumerate(sample.values):
        if v != v or v in (float("inf"), float("-inf")):
            raise ValidationError(
                f"metric {sample.service}@{sample.ts_us}: non-finite {METRIC_CHANNELS[i]}"
            )
        if i in _NONNEGATIVE_CHANNELS and v < 0:
            raise ValidationError(
                f"metric {sample.service}@{sample.ts_us}: negative {METRIC_CHANNELS[i]}"
            )


def validate_label_window(window: LabelWindow) -> None:
    if window.end_us <= window.start_us:
        raise ValidationError(f"label window {window.run_id}/{window.class_label}: end_us <= start_us")
    if window.class_label not in CLASS_INDEX:
        raise ValidationError(f"label window {window.run_id}: unknown class {window.class_label!r}")


# ---------------------------------------------------------------------------
# JSON object <-> record, with declared field order preserved on output


def _span_to_obj(span: Span) -> dict:
    return {
        "span_id": span.span_id,
        "parent_span_id": span.parent_span_id,
        "service": span.service,
        "start_us": span.start_us,
        "end_us": span.end_us,
        "status": span.status,
    }


def record_to_obj(record) -> dict:
    if isinstance(record, TraceRecord):
        return {
            "trace_id": record.trace_id,
            "run_id": record.run_id,
            "spans": [_span_to_obj(s) for s in record.spans],
        }
    if isinstance(record, LogRecord):
        return {
            "ts_us": record.ts_us,
            "service": record.service,
            "level": record.level,
            "message": record.message,
            "trace_id": record.trace_id,
        }
    if isinstance(record, MetricSample):
        return {
            "ts_us": record.ts_us,
            "service": record.service,
            "values": list(record.values),
        }
    if isinstance(record, LabelWindow):
        return {
            "run_id": record.run_id,
            "class_label": record.class_label,
            "start_us": record.start_us,
            "end_us": record.end_us,
        }
    raise TypeError(f"not a telemetry record: {type(record).__name__}")


def trace_from_obj(obj: dict) -> TraceRecord:
    spans = tuple(
        Span(
            span_id=s["span_id"],
            parent_span_id=s.get("parent_span_id"),
            service=s["service"],
            start_us=int(s["start_us"]),
            end_us=int(s["end_us"]),
            status=s["status"],
        )
        for s in obj["spans"]
    )
    return TraceRecord(trace_id=obj["trace_id"], run_id=obj["run_id"], spans=spans)


def log_from_obj(obj: dict) -> LogRecord:
    return LogRecord(
        ts_us=int(obj["ts_us"]),
        service=obj["service"],
        level=obj["level"],
        message=obj["message"],
        trace_id=obj.get("trace_id"),
    )


def metric_from_obj(obj: dict) -> MetricSample:
    return MetricSample(
        ts_us=int(obj["ts_us"]),
        service=obj["service"],
        values=tuple(float(v) for v in obj["values"]),
    )


def label_window_from_obj(obj: dict) -> LabelWindow:
    return LabelWindow(
        run_id=obj["run_id"],
        class_label=obj["class_label"],
        start_us=int(obj["start_us"]),
        end_us=int(obj["end_us"]),
    )


def serialize_records(records: Iterable) -> bytes:
    """Encode records as JSONL (one object per line, UTF-8, declared field order)."""
    lines = []
    for record in records:
        lines.append(json.dumps(record_to_obj(record), separators=(",", ":")))
        lines.append("\n")
    return "".join(lines).encode("utf-8")


TRIAL_FILES = {
    "traces.jsonl": (trace_from_obj, validate_trace),
    "logs.jsonl": (log_from_obj, validate_log),
    "metrics.jsonl": (metric_from_obj, validate_metric),
    "labels.jsonl": (label_window_from_obj, validate_label_window),
}


def _read_jsonl(path: Path, from_obj, validate):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"malformed JSON ({exc.msg})") from exc
            try:
                record = from_obj(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(path, line_no, f"bad record shape ({exc})") from exc
            validate(record)
            records.append(record)
    return records


def read_trial(dir_path):
    """Read one trial directory into validated, start-sorted record lists.

    Returns ``(traces, logs, metrics, label_windows)``. Raises
    FileNotFoundError if any of the four JSONL files is missing, ParseError
    for malformed lines, ValidationError for invariant violations.
    """
    dir_path = Path(dir_path)
    out = []
    for name, (from_obj, validate) in TRIAL_FILES.items():
        path = dir_path / name
        if not path.is_file():
            raise FileNotFoundError(f"missing trial file: {path}")
        out.append(_read_jsonl(path, from_obj, validate))
    traces, logs, metrics, windows = out
    traces.sort(key=lambda t: t.start_us)
    logs.sort(key=lambda r: r.ts_us)
    metrics.sort(key=lambda m: m.ts_us)
    windows.sort(key=lambda w: w.start_us)
    return traces, logs, metrics, windows


# ---------------------------------------------------------------------------
# run-spec CSV (header: run_id,scenario,trial_dir)

RUN_SPEC_HEADER = ("run_id", "scenario", "trial_dir")


def read_run_specs(path) -> list:
    """Read a run-spec CSV into ``[(run_id, scenario, trial_dir), ...]``."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != RUN_SPEC_HEADER:
            raise ValidationError(f"{path}: bad run-spec header {header!r}")
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}: bad run-spec row {row!r}")
            run_id, scenario, trial_dir = row
            if scenario not in CLASS_INDEX:
                raise ValidationError(f"{path}: unknown scenario {scenario!r}")
            rows.append((run_id, scenario, trial_dir))
    return rows
