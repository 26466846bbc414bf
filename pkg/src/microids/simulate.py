"""Synthetic trial generator: normal e-commerce traffic plus one attack window.

Each trial is a pure function of its ScenarioConfig (seed included), so trials
regenerate byte-identically and can be produced in parallel. A trial emits the
four JSONL files a trial directory must contain (traces, logs, metrics,
labels) and is shaped so that, at the default rates, the 50-trial corpus
reproduces the intended class-size ordering:

    http_flood > normal (per trial) > bruteforce_login > sql_injection_probe
    > exfiltration_sim > ssrf_probe

The attack window covers the middle 50% of the trial. Normal traffic is
thinned inside the window (attack load displaces users), which keeps the
window-overlap labels from being dominated by benign-looking traces.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .telemetry import (
    ATTACK_LABELS,
    CLASS_LABELS,
    LabelWindow,
    LogRecord,
    MetricSample,
    N_METRIC_CHANNELS,
    RUN_SPEC_HEADER,
    SERVICES,
    Span,
    TraceRecord,
    ValidationError,
    serialize_records,
)

BASE_EPOCH_US = 1_700_000_000_000_000
METRIC_TICK_US = 5_000_000  # one scrape per service every 5 s
_RECOVERY_TAU_US = 4_000_000  # metric decay time constant after the attack stops

# Fixed call topology. Every request path starts at frontend.
TOPOLOGY_EDGES: Tuple[Tuple[str, str], ...] = (
    ("frontend", "auth"),
    ("frontend", "catalog"),
    ("frontend", "cart"),
    ("frontend", "order"),
    ("order", "payment"),
    ("order", "cart"),
    ("cart", "catalog"),
)

# Per-edge service latency, lognormal: (median_ms, sigma).
DEFAULT_EDGE_LATENCY: Dict[Tuple[str, str], Tuple[float, float]] = {
    ("frontend", "auth"): (12.0, 0.35),
    ("frontend", "catalog"): (18.0, 0.40),
    ("frontend", "cart"): (14.0, 0.35),
    ("frontend", "order"): (25.0, 0.40),
    ("order", "payment"): (30.0, 0.45),
    ("order", "cart"): (10.0, 0.30),
    ("cart", "catalog"): (15.0, 0.35),
}
ROOT_LATENCY = (8.0, 0.30)  # frontend's own work


@dataclass(frozen=True)
class Topology:
    edges: Tuple[Tuple[str, str], ...] = TOPOLOGY_EDGES
    edge_latency_ms: Dict[Tuple[str, str], Tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_EDGE_LATENCY)
    )

    @property
    def edge_set(self):
        return frozenset(self.edges)


DEFAULT_TOPOLOGY = Topology()

# Normal user behaviors: (name, weight, call edges in DFS order).
BEHAVIORS: Tuple[Tuple[str, float, Tuple[Tuple[str, str], ...]], ...] = (
    ("browse", 0.30, (("frontend", "catalog"),)),
    ("login", 0.20, (("frontend", "auth"),)),
    ("cart", 0.20, (("frontend", "cart"), ("cart", "catalog"))),
    ("order", 0.15, (("frontend", "order"), ("order", "payment"), ("order", "cart"))),
    ("search", 0.15, (("frontend", "catalog"),)),
)
_BEHAVIOR_WEIGHTS = np.array([b[1] for b in BEHAVIORS])

# Metric channel indices (see telemetry.METRIC_CHANNELS).
_CPU, _MEM, _RPS, _MLAT, _P95, _ERR, _NET_IN, _NET_OUT, _CONN = range(9)

# Quiet-hours baseline per channel; per-service load share scales the
# traffic-driven channels.
_BASE_VALUES = np.array([15.0, 40.0, 4.0, 20.0, 55.0, 0.01, 200.0, 300.0, 10.0])
_SERVICE_LOAD_SHARE = {
    "frontend": 1.0,
    "auth": 0.35,
    "catalog": 0.75,
    "cart": 0.45,
    "order": 0.30,
    "payment": 0.20,
}

# Attack-window metric signature: service -> channel -> (multiplier, offset).
# Every scenario also leaves a distinct attenuated fingerprint on frontend,
# since all attack traffic transits it.
METRIC_EFFECTS: Dict[str, Dict[str, Dict[int, Tuple[float, float]]]] = {
    "http_flood": {
        "frontend": {_CPU: (4.0, 0), _RPS: (20.0, 0), _MLAT: (3.0, 0), _P95: (3.2, 0),
                     _ERR: (1.0, 0.15), _NET_IN: (10.0, 0), _CONN: (8.0, 0)},
        "catalog": {_CPU: (2.5, 0), _RPS: (8.0, 0), _MLAT: (2.2, 0), _ERR: (1.0, 0.08)},
    },
    "bruteforce_login": {
        "auth": {_ERR: (1.0, 0.45), _RPS: (3.5, 0), _CPU: (1.5, 0)},
        "frontend": {_ERR: (1.0, 0.05), _RPS: (1.4, 0)},
    },
    "sql_injection_probe": {
        "catalog": {_ERR: (1.0, 0.30), _MLAT: (1.6, 0), _P95: (1.8, 0), _CPU: (1.3, 0)},
        "frontend": {_ERR: (1.0, 0.03), _MLAT: (1.15, 0)},
    },
    "ssrf_probe": {
        "order": {_NET_OUT: (6.0, 0), _CONN: (3.0, 0), _RPS: (2.5, 0)},
        "frontend": {_NET_OUT: (1.5, 0), _CONN: (1.3, 0)},
    },
    "exfiltration_sim": {
        "catalog": {_NET_OUT: (25.0, 0), _NET_IN: (2.0, 0)},
        "frontend": {_NET_OUT: (4.0, 0)},
    },
}

# Fraction of attack requests that stay operationally quiet (normal-looking
# logs and span statuses); these are only separable through window metrics.
QUIET_FRACTION = {
    "http_flood": 0.0,
    "bruteforce_login": 0.40,
    "sql_injection_probe": 0.30,
    "ssrf_probe": 0.35,
    "exfiltration_sim": 0.10,
}

_USER_POOL = 40  # size of the brute-force username pool

# Per-trial attack-strength multiplier range (attacker tooling / botnet size
# differ from run to run), so held-out trials require extrapolating to unseen
# intensities instead of pattern-matching a single fixed fingerprint.
_INTENSITY_RANGE = (0.55, 1.45)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    duration_s: int
    normal_rps: float
    attack_rps: float
    seed: int
    run_id: str
    trace_drop_fraction: float = 0.05  # logs that lose their trace_id
    inwindow_normal_factor: float = 0.10  # user traffic surviving the attack window

    def __post_init__(self):
        if self.scenario not in CLASS_LABELS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.duration_s < 30:
            raise ValueError("duration_s must be >= 30")
        if self.normal_rps <= 0 or self.attack_rps <= 0:
            raise ValueError("rates must be positive")
        if not 0.0 <= self.trace_drop_fraction < 1.0:
            raise ValueError("trace_drop_fraction must be in [0, 1)")


def _stream(seed: int, run_id: str, purpose: int) -> np.random.Generator:
    # Per-(trial, purpose) stream, so trials can be generated in parallel
    # without changing the draw order inside any one trial.
    return np.random.default_rng(
        np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(run_id.encode()), purpose])
    )


def _draw_latency_us(rng: np.random.Generator, median_ms: float, sigma: float) -> int:
    return max(200, int(rng.lognormal(np.log(median_ms), sigma) * 1000.0))


def _make_spans(
    rng: np.random.Generator,
    topology: Topology,
    t_us: int,
    edges: Sequence[Tuple[str, str]],
    status_overrides: Optional[Dict[str, str]] = None,
) -> List[Span]:
    """Build the span tree for one request. ``edges`` is the DFS-ordered call
    list; each callee's parent is the most recent span of the caller service."""
    status_overrides = status_overrides or {}
    root_own = _draw_latency_us(rng, *ROOT_LATENCY)
    spans: List[Span] = []
    # span index -> (service, start, cursor); root first
    root = Span(
        span_id="s00",
        parent_span_id=None,
        service="frontend",
        start_us=t_us,
        end_us=t_us,  # patched below
        status=status_overrides.get("frontend", "ok"),
    )
    spans.append(root)
    last_span_for: Dict[str, int] = {"frontend": 0}
    cursor: Dict[int, int] = {0: t_us + root_own // 4}
    for k, (caller, callee) in enumerate(edges, start=1):
        parent_idx = last_span_for[caller]
        start = cursor[parent_idx] + 200  # dispatch overhead
        params = topology.edge_latency_ms.get((caller, callee), (15.0, 0.35))
        dur = _draw_latency_us(rng, *params)
        span = Span(
            span_id=f"s{k:02d}",
            parent_span_id=spans[parent_idx].span_id,
            service=callee,
            start_us=start,
            end_us=start + dur,
            status=status_overrides.get(callee, "ok"),
        )
        spans.append(span)
        last_span_for[callee] = k
        cursor[k] = start + dur // 4
        # the caller resumes after this child returns
        cursor[parent_idx] = start + dur
    end = max(t_us + root_own, max(s.end_us for s in spans) + root_own // 8)
    spans[0] = Span(
        span_id=root.span_id,
        parent_span_id=None,
        service="frontend",
        start_us=t_us,
        end_us=end,
        status=root.status,
    )
    return spans


def _maybe_drop(rng: np.random.Generator, trace_id: str, drop_fraction: float) -> Optional[str]:
    if drop_fraction > 0 and rng.random() < drop_fraction:
        return None
    return trace_id


def generate_normal_request(
    rng: np.random.Generator,
    topology: Topology,
    t_us: int,
    run_id: str = "run",
    trace_id: str = "trace",
    drop_fraction: float = 0.0,
) -> Tuple[TraceRecord, List[LogRecord]]:
    """One benign request following one of the five weighted user behaviors."""
    idx = rng.choice(len(BEHAVIORS), p=_BEHAVIOR_WEIGHTS)
    behavior, _, edges = BEHAVIORS[idx]
    spans = _make_spans(rng, topology, t_us, edges)
    trace = TraceRecord(trace_id=trace_id, run_id=run_id, spans=tuple(spans))
    logs = [
        LogRecord(
            ts_us=s.start_us,
            service=s.service,
            level="info",
            message=f"{behavior} request",
            trace_id=_maybe_drop(rng, trace_id, drop_fraction),
        )
        for s in spans
    ]
    return trace, logs


def _attack_request(
    rng: np.random.Generator,
    scenario: str,
    topology: Topology,
    t_us: int,
    run_id: str,
    trace_id: str,
    drop_fraction: float,
    force_anomalous: bool,
) -> Tuple[TraceRecord, List[LogRecord]]:
    logs: List[LogRecord] = []

    def log(span, message, level="info"):
        logs.append(
            LogRecord(
                ts_us=span.start_us,
                service=span.service,
                level=level,
                message=message,
                trace_id=_maybe_drop(rng, trace_id, drop_fraction),
            )
        )

    quiet = rng.random() < QUIET_FRACTION[scenario] and not force_anomalous

    if scenario == "http_flood":
        erred = rng.random() < 0.3
        overrides = {"frontend": "error"} if erred else {}
        spans = _make_spans(rng, topology, t_us, (("frontend", "catalog"),), overrides)
        for s in spans:
            if s.service == "frontend" and erred:
                log(s, "browse request timeout", "warn")
            else:
                log(s, "browse request")
    elif scenario == "bruteforce_login":
        # quiet requests are successful credential guesses: normal-looking
        overrides = {} if quiet else {"auth": "error"}
        spans = _make_spans(rng, topology, t_us, (("frontend", "auth"),), overrides)
        user = f"u{rng.integers(_USER_POOL)}x"
        for s in spans:
            if s.service == "auth" and not quiet:
                log(s, f"login failed invalid password user={user}", "warn")
            else:
                log(s, "login request")
    elif scenario == "sql_injection_probe":
        erred = not quiet and rng.random() < 0.8
        overrides = {"catalog": "error"} if erred else {}
        spans = _make_spans(rng, topology, t_us, (("frontend", "catalog"),), overrides)
        for s in spans:
            if s.service == "catalog" and not quiet:
                log(s, "search request union select or 1=1", "error" if erred else "warn")
            else:
                log(s, "search request")
    elif scenario == "ssrf_probe":
        edges: Tuple[Tuple[str, str], ...] = (("frontend", "order"),)
        if force_anomalous or rng.random() < 0.5:
            # pivot absent from the normal topology
            edges = (("frontend", "order"), ("order", "auth"))
        spans = _make_spans(rng, topology, t_us, edges)
        for s in spans:
            if s.service == "order" and not quiet:
                log(s, "outbound fetch internal address", "warn")
            elif s.service == "frontend":
                log(s, "request")  # no user-intent token
            else:
                log(s, "request")
    elif scenario == "exfiltration_sim":
        spans = _make_spans(rng, topology, t_us, (("frontend", "catalog"),))
        for s in spans:
            if s.service == "catalog" and not quiet:
                log(s, "browse request bulk")
            else:
                log(s, "browse request")
    else:  # pragma: no cover - guarded by caller
        raise ValueError(f"unknown attack scenario {scenario!r}")

    return TraceRecord(trace_id=trace_id, run_id=run_id, spans=tuple(spans)), logs


def generate_attack_traffic(
    rng: np.random.Generator,
    scenario: str,
    topology: Topology,
    window: Tuple[int, int],
    attack_rps: float,
    run_id: str = "run",
    drop_fraction: float = 0.0,
) -> Tuple[List[TraceRecord], List[LogRecord], Dict[str, Dict[int, Tuple[float, float]]]]:
    """Attack traffic across ``window`` plus the scenario's metric signature.

    Returns (traces, logs, metric effects); the effects map service ->
    channel index -> (multiplier, additive offset) and applies to metric
    samples whose timestamp falls inside the window.
    """
    if scenario == "normal":
        raise ValueError("generate_attack_traffic requires an attack scenario")
    if scenario not in ATTACK_LABELS:
        raise ValueError(f"unknown scenario {scenario!r}")
    start, end = window
    traces: List[TraceRecord] = []
    logs: List[LogRecord] = []
    t = float(start)
    i = 0
    while True:
        t += rng.exponential(1.0 / attack_rps) * 1e6
        if t >= end:
            break
        trace, trace_logs = _attack_request(
            rng,
            scenario,
            topology,
            int(t),
            run_id,
            f"{run_id}-a{i:05d}",
            drop_fraction,
            force_anomalous=(i == 0),
        )
        traces.append(trace)
        logs.extend(trace_logs)
        i += 1
    return traces, logs, METRIC_EFFECTS[scenario]


def _generate_metrics(
    rng: np.random.Generator,
    config: ScenarioConfig,
    t0: int,
    window: Optional[Tuple[int, int]],
    effects: Dict[str, Dict[int, Tuple[float, float]]],
    intensity: float = 1.0,
) -> List[MetricSample]:
    # Per-trial baseline jitter makes trials look like distinct deployments,
    # which is what makes the trial-level split strictly harder.
    jitter = {s: rng.uniform(0.75, 1.35, size=N_METRIC_CHANNELS) for s in SERVICES}
    samples = []
    n_ticks = config.duration_s * 1_000_000 // METRIC_TICK_US + 1
    for k in range(int(n_ticks)):
        ts = t0 + k * METRIC_TICK_US
        for service in SERVICES:
            base = _BASE_VALUES.copy()
            share = _SERVICE_LOAD_SHARE[service]
            base[_RPS] = config.normal_rps * share
            base[_NET_IN] *= share
            base[_NET_OUT] *= share
            base[_CONN] *= max(share, 0.3)
            vals = base * jitter[service]
            if window is not None and window[0] <= ts:
                # Full effect inside the window, then an exponential recovery
                # tail: saturated services drain queues rather than snapping
                # back to baseline the instant the attack stops.
                if ts < window[1]:
                    f = intensity
                else:
                    f = intensity * math.exp(-(ts - window[1]) / _RECOVERY_TAU_US)
                if f > 1e-3:
                    for ch, (mul, add) in effects.get(service, {}).items():
                        vals[ch] = vals[ch] * (1.0 + (mul - 1.0) * f) + add * f
            noise = 1.0 + rng.normal(0.0, 0.10, size=N_METRIC_CHANNELS)
            vals = np.maximum(vals * noise, 0.0)
            vals[_ERR] = min(float(vals[_ERR]), 1.0)
            samples.append(MetricSample(ts_us=ts, service=service, values=tuple(float(v) for v in vals)))
    return samples


@dataclass(frozen=True)
class TrialData:
    traces: Tuple[TraceRecord, ...]
    logs: Tuple[LogRecord, ...]
    metrics: Tuple[MetricSample, ...]
    windows: Tuple[LabelWindow, ...]


def simulate_trial(config: ScenarioConfig, out_dir=None, topology: Topology = DEFAULT_TOPOLOGY) -> TrialData:
    """Generate one trial; optionally write it as a trial directory.

    Identical configs produce byte-identical files. The normal window spans
    the full trial; the attack window (attack scenarios only) covers the
    middle 50% of the duration.
    """
    duration_us = config.duration_s * 1_000_000
    t0 = BASE_EPOCH_US
    window = (t0 + duration_us // 4, t0 + 3 * duration_us // 4)

    rng_normal = _stream(config.seed, config.run_id, 1)
    rng_attack = _stream(config.seed, config.run_id, 2)
    rng_metrics = _stream(config.seed, config.run_id, 3)
    intensity = float(_stream(config.seed, config.run_id, 4).uniform(*_INTENSITY_RANGE))

    traces: List[TraceRecord] = []
    logs: List[LogRecord] = []

    # Normal traffic over the full trial, thinned inside the attack window.
    t = float(t0)
    i = 0
    while True:
        t += rng_normal.exponential(1.0 / config.normal_rps) * 1e6
        if t >= t0 + duration_us:
            break
        if config.scenario != "normal" and window[0] <= t < window[1]:
            if rng_normal.random() >= config.inwindow_normal_factor:
                continue
        trace, trace_logs = generate_normal_request(
            rng_normal, topology, int(t), config.run_id, f"{config.run_id}-n{i:05d}",
            config.trace_drop_fraction,
        )
        traces.append(trace)
        logs.extend(trace_logs)
        i += 1

    effects: Dict[str, Dict[int, Tuple[float, float]]] = {}
    windows = [LabelWindow(config.run_id, "normal", t0, t0 + duration_us)]
    if config.scenario != "normal":
        attack_traces, attack_logs, effects = generate_attack_traffic(
            rng_attack, config.scenario, topology, window, config.attack_rps,
            config.run_id, config.trace_drop_fraction,
        )
        traces.extend(attack_traces)
        logs.extend(attack_logs)
        windows.append(LabelWindow(config.run_id, config.scenario, window[0], window[1]))

    metrics = _generate_metrics(
        rng_metrics, config, t0,
        window if config.scenario != "normal" else None, effects, intensity,
    )

    traces.sort(key=lambda tr: (tr.start_us, tr.trace_id))
    logs.sort(key=lambda r: (r.ts_us, r.service))
    data = TrialData(tuple(traces), tuple(logs), tuple(metrics), tuple(windows))

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, records in (
            ("traces.jsonl", data.traces),
            ("logs.jsonl", data.logs),
            ("metrics.jsonl", data.metrics),
            ("labels.jsonl", data.windows),
        ):
            (out_dir / name).write_bytes(serialize_records(records))
    return data


def write_run_specs(trials: Sequence[Tuple[str, str, str]], path) -> None:
    """Write the run-spec CSV (header: run_id,scenario,trial_dir)."""
    seen = set()
    for run_id, _, _ in trials:
        if run_id in seen:
            raise ValidationError(f"duplicate run_id {run_id!r}")
        seen.add(run_id)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUN_SPEC_HEADER)
        for row in trials:
            writer.writerow(row)


# Default attack rates chosen so the corpus reproduces the intended class-size
# ordering at the default normal_rps.
DEFAULT_ATTACK_RPS = {
    "http_flood": 16.0,
    "bruteforce_login": 1.5,
    "sql_injection_probe": 1.2,
    "exfiltration_sim": 0.9,
    "ssrf_probe": 0.6,
}
DEFAULT_NORMAL_RPS = 2.5
DEFAULT_DURATION_S = 120


def default_trial_plan(
    n_trials: int = 50,
    seed: int = 7,
    duration_s: int = DEFAULT_DURATION_S,
    normal_rps: float = DEFAULT_NORMAL_RPS,
) -> List[ScenarioConfig]:
    """Round-robin trial plan over the five attack scenarios (default: 10 each)."""
    order = ("http_flood", "bruteforce_login", "sql_injection_probe", "ssrf_probe", "exfiltration_sim")
    plan = []
    for i in range(n_trials):
        scenario = order[i % len(order)]
        k = i // len(order)
        plan.append(
            ScenarioConfig(
                scenario=scenario,
                duration_s=duration_s,
                normal_rps=normal_rps,
                attack_rps=DEFAULT_ATTACK_RPS[scenario],
                seed=seed,
                run_id=f"{scenario}_{k:02d}",
            )
        )
    return plan


def simulate_corpus(plan: Sequence[ScenarioConfig], out_dir) -> List[Tuple[str, str, str]]:
    """Simulate every trial in ``plan`` under ``out_dir`` and write run_specs.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for config in plan:
        trial_dir = out_dir / config.run_id
        simulate_trial(config, trial_dir)
        rows.append((config.run_id, config.scenario, str(trial_dir)))
    write_run_specs(rows, out_dir / "run_specs.csv")
    return rows
