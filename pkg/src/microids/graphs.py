"""Trace + telemetry -> labeled request graphs with per-modality node features.

A request graph has one node per distinct service in the trace and an
undirected (symmetrized) edge per observed caller->callee relation. Node
features are assembled per modality:

  trace_only        10 dims: one-hot service (6) + degree + node count
                    + undirected edge count + is-root flag
  logs_only         log_dim TF-IDF dims over the node's log document
  metrics_only      9 standardized metric channels (last sample at or before
                    trace start, 15 s lookback; zeros when none qualifies)
  logs_plus_metrics log_dim + 9 (the reported 25-dim setting)

The TF-IDF vocabulary and the metric scaler are fitted on training-side
graphs only; ``assemble_dataset`` takes the training designation explicitly
and exposes the fitted objects so leakage is testable.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import textfeat
from .telemetry import (
    CLASS_LABELS,
    METRIC_CHANNELS,
    LabelWindow,
    LogRecord,
    MetricSample,
    N_METRIC_CHANNELS,
    SERVICE_INDEX,
    SERVICES,
    TraceRecord,
    read_run_specs,
    read_trial,
    windows_overlap,
)

MODALITIES = ("trace_only", "logs_only", "metrics_only", "logs_plus_metrics")

TRACE_FEAT_DIM = len(SERVICES) + 4  # one-hot + degree + |V| + |E| + is_root
LOG_FALLBACK_SLACK_US = 500_000  # time-window log attribution slack
METRIC_LOOKBACK_US = 15_000_000


@dataclass(frozen=True)
class ModalityConfig:
    mode: str = "logs_plus_metrics"
    log_dim: int = textfeat.DEFAULT_LOG_DIM
    metric_dim: int = N_METRIC_CHANNELS

    def __post_init__(self):
        if self.mode not in MODALITIES:
            raise ValueError(f"unknown modality {self.mode!r}")
        if self.metric_dim != N_METRIC_CHANNELS:
            raise ValueError("metric_dim is fixed at 9")

    @property
    def width(self) -> int:
        if self.mode == "trace_only":
            return TRACE_FEAT_DIM
        if self.mode == "logs_only":
            return self.log_dim
        if self.mode == "metrics_only":
            return self.metric_dim
        return self.log_dim + self.metric_dim


@dataclass(frozen=True)
class RequestGraph:
    graph_id: str
    run_id: str
    nodes: Tuple[str, ...]
    edges: Tuple[Tuple[int, int], ...]  # symmetrized, no self-loops
    features: np.ndarray  # |V| x d
    label: str
    trace_interval: Tuple[int, int]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_undirected_edges(self) -> int:
        return len(self.edges) // 2


class GraphStructureError(ValueError):
    pass


def trace_to_graph(trace: TraceRecord) -> Tuple[List[str], List[Tuple[int, int]]]:
    """Service nodes (order of first appearance) and symmetrized call edges.

    Duplicate service-pair calls collapse to a single undirected edge;
    same-service parent links add no edge.
    """
    by_id = {s.span_id: s for s in trace.spans}
    nodes: List[str] = []
    index: Dict[str, int] = {}
    for span in trace.spans:
        if span.service not in index:
            index[span.service] = len(nodes)
            nodes.append(span.service)
    edge_set: Set[Tuple[int, int]] = set()
    for span in trace.spans:
        if span.parent_span_id is None:
            continue
        parent = by_id.get(span.parent_span_id)
        if parent is None:
            raise GraphStructureError(
                f"trace {trace.trace_id}: span {span.span_id} references missing parent"
            )
        if parent.service == span.service:
            continue
        i, j = index[parent.service], index[span.service]
        edge_set.add((i, j))
        edge_set.add((j, i))
    return nodes, sorted(edge_set)


def label_graph(trace_interval: Tuple[int, int], windows: Sequence[LabelWindow]) -> str:
    """Attack class of the run's attack window the trace overlaps, else normal."""
    for w in windows:
        if w.class_label == "normal":
            continue
        if windows_overlap(trace_interval[0], trace_interval[1], w.start_us, w.end_us):
            return w.class_label
    return "normal"


class MetricScaler:
    """Per-channel z-score scaler fitted on training node metric rows."""

    def __init__(self):
        self.mean_: Optional[np.ndarray] = None
        self.std_: Optional[np.ndarray] = None

    @property
    def fitted(self) -> bool:
        return self.mean_ is not None

    def fit(self, rows: np.ndarray) -> "MetricScaler":
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ValueError("scaler needs a nonempty 2-D row matrix")
        self.mean_ = rows.mean(axis=0)
        std = rows.std(axis=0)
        self.std_ = np.where(std > 0, std, 1.0)  # constant channels pass through centered
        return self

    def transform(self, rows: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("scaler is not fitted")
        return (rows - self.mean_) / self.std_

    def to_json(self) -> dict:
        return {"mean": self.mean_.tolist(), "std": self.std_.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "MetricScaler":
        scaler = cls()
        scaler.mean_ = np.asarray(obj["mean"], dtype=np.float64)
        scaler.std_ = np.asarray(obj["std"], dtype=np.float64)
        return scaler


@dataclass
class GraphSkeleton:
    """Structure, label, and raw per-node inputs before feature fitting."""

    graph_id: str
    run_id: str
    nodes: Tuple[str, ...]
    edges: Tuple[Tuple[int, int], ...]
    label: str
    trace_interval: Tuple[int, int]
    node_docs: Tuple[Tuple[str, ...], ...]  # token lists per node
    node_metrics: Tuple[Optional[Tuple[float, ...]], ...]  # raw aligned rows


class _TrialIndex:
    """Per-trial lookup structures for log attribution and metric alignment."""

    def __init__(self, logs: Sequence[LogRecord], metrics: Sequence[MetricSample]):
        self.logs_by_trace: Dict[Tuple[str, str], List[str]] = {}
        self.orphan_logs: Dict[str, List[Tuple[int, str]]] = {s: [] for s in SERVICES}
        for log in logs:
            if log.trace_id is not None:
                self.logs_by_trace.setdefault((log.trace_id, log.service), []).append(log.message)
            else:
                self.orphan_logs[log.service].append((log.ts_us, log.message))
        for rows in self.orphan_logs.values():
            rows.sort(key=lambda r: r[0])
        self.metrics_by_service: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
        per_service: Dict[str, List[MetricSample]] = {s: [] for s in SERVICES}
        for m in metrics:
            per_service[m.service].append(m)
        for service, rows in per_service.items():
            rows.sort(key=lambda m: m.ts_us)
            ts = np.array([m.ts_us for m in rows], dtype=np.int64)
            vals = np.array([m.values for m in rows], dtype=np.float64)
            vals = vals.reshape(len(rows), len(METRIC_CHANNELS))
            self.metrics_by_service[service] = (ts, vals)

    def node_document(self, trace: TraceRecord, service: str) -> List[str]:
        messages = list(self.logs_by_trace.get((trace.trace_id, service), []))
        # Fallback for logs that lost their trace context: attribute by
        # service and proximity to the trace interval.
        lo = trace.start_us - LOG_FALLBACK_SLACK_US
        hi = trace.end_us + LOG_FALLBACK_SLACK_US
        orphans = self.orphan_logs[service]
        if orphans:
            ts = [r[0] for r in orphans]
            left = bisect.bisect_left(ts, lo)
            right = bisect.bisect_right(ts, hi)
            messages.extend(msg for _, msg in orphans[left:right])
        tokens: List[str] = []
        for msg in messages:
            tokens.extend(textfeat.tokenize(msg))
        return tokens

    def aligned_metrics(self, service: str, trace_start_us: int) -> Optional[Tuple[float, ...]]:
        ts, vals = self.metrics_by_service[service]
        if len(ts) == 0:
            return None
        idx = int(np.searchsorted(ts, trace_start_us, side="right")) - 1
        if idx < 0 or ts[idx] < trace_start_us - METRIC_LOOKBACK_US:
            return None
        return tuple(vals[idx])


def build_skeletons_for_trial(
    run_id: str,
    traces: Sequence[TraceRecord],
    logs: Sequence[LogRecord],
    metrics: Sequence[MetricSample],
    windows: Sequence[LabelWindow],
) -> List[GraphSkeleton]:
    index = _TrialIndex(logs, metrics)
    skeletons = []
    for trace in traces:
        nodes, edges = trace_to_graph(trace)
        skeletons.append(
            GraphSkeleton(
                graph_id=f"{run_id}/{trace.trace_id}",
                run_id=run_id,
                nodes=tuple(nodes),
                edges=tuple(edges),
                label=label_graph(trace.interval, windows),
                trace_interval=trace.interval,
                node_docs=tuple(tuple(index.node_document(trace, s)) for s in nodes),
                node_metrics=tuple(index.aligned_metrics(s, trace.start_us) for s in nodes),
            )
        )
    return skeletons


def load_skeletons(run_specs: Sequence[Tuple[str, str, str]]) -> List[GraphSkeleton]:
    """Read every trial named by the run specs and build graph skeletons."""
    skeletons: List[GraphSkeleton] = []
    for run_id, _, trial_dir in run_specs:
        traces, logs, metrics, windows = read_trial(trial_dir)
        skeletons.extend(build_skeletons_for_trial(run_id, traces, logs, metrics, windows))
    return skeletons


def fit_features(
    skeletons: Sequence[GraphSkeleton],
    train_graph_ids: Set[str],
    log_dim: int = textfeat.DEFAULT_LOG_DIM,
) -> Tuple[textfeat.TfidfVocab, MetricScaler]:
    """Fit the TF-IDF vocabulary and metric scaler on training graphs only."""
    docs: List[Tuple[str, ...]] = []
    metric_rows: List[Tuple[float, ...]] = []
    for s in skeletons:
        if s.graph_id not in train_graph_ids:
            continue
        docs.extend(s.node_docs)
        metric_rows.extend(row for row in s.node_metrics if row is not None)
    if not docs:
        raise ValueError("no training graphs designated; cannot fit features")
    vocab = textfeat.fit_vocab(docs, log_dim)
    scaler = MetricScaler().fit(np.asarray(metric_rows, dtype=np.float64))
    return vocab, scaler


def _trace_only_row(skeleton: GraphSkeleton, node_idx: int) -> np.ndarray:
    row = np.zeros(TRACE_FEAT_DIM, dtype=np.float64)
    service = skeleton.nodes[node_idx]
    row[SERVICE_INDEX[service]] = 1.0
    degree = sum(1 for (i, _) in skeleton.edges if i == node_idx)
    row[len(SERVICES)] = degree
    row[len(SERVICES) + 1] = len(skeleton.nodes)
    row[len(SERVICES) + 2] = len(skeleton.edges) // 2
    row[len(SERVICES) + 3] = 1.0 if node_idx == 0 else 0.0  # first-appearing = root service
    return row


def attach_features(
    skeleton: GraphSkeleton,
    vocab: Optional[textfeat.TfidfVocab],
    scaler: Optional[MetricScaler],
    mode: ModalityConfig,
) -> RequestGraph:
    """Materialize a RequestGraph with features for the requested modality."""
    needs_logs = mode.mode in ("logs_only", "logs_plus_metrics")
    needs_metrics = mode.mode in ("metrics_only", "logs_plus_metrics")
    if needs_logs and vocab is None:
        raise RuntimeError("modality requires a fitted vocabulary")
    if needs_metrics and (scaler is None or not scaler.fitted):
        raise RuntimeError("modality requires a fitted metric scaler")

    rows = []
    for i in range(len(skeleton.nodes)):
        parts = []
        if mode.mode == "trace_only":
            parts.append(_trace_only_row(skeleton, i))
        if needs_logs:
            parts.append(textfeat.transform(skeleton.node_docs[i], vocab))
        if needs_metrics:
            raw = skeleton.node_metrics[i]
            if raw is None:
                # Missing alignment convention: zeros in standardized space
                # (i.e. the training mean).
                parts.append(np.zeros(N_METRIC_CHANNELS, dtype=np.float64))
            else:
                parts.append(scaler.transform(np.asarray(raw, dtype=np.float64)[None, :])[0])
        rows.append(np.concatenate(parts))
    features = np.vstack(rows)
    return RequestGraph(
        graph_id=skeleton.graph_id,
        run_id=skeleton.run_id,
        nodes=skeleton.nodes,
        edges=skeleton.edges,
        features=features,
        label=skeleton.label,
        trace_interval=skeleton.trace_interval,
    )


def featurize(
    skeletons: Sequence[GraphSkeleton],
    mode: ModalityConfig,
    vocab: Optional[textfeat.TfidfVocab],
    scaler: Optional[MetricScaler],
) -> List[RequestGraph]:
    return [attach_features(s, vocab, scaler, mode) for s in skeletons]


def class_counts(items: Iterable) -> Dict[str, int]:
    counts = {c: 0 for c in CLASS_LABELS}
    for item in items:
        counts[item.label] += 1
    return {c: n for c, n in counts.items() if n}


def assemble_dataset(
    run_specs: Sequence[Tuple[str, str, str]],
    mode: ModalityConfig,
    fit_on: Optional[Set[str]] = None,
) -> Tuple[List[RequestGraph], textfeat.TfidfVocab, MetricScaler, Dict[str, int]]:
    """One RequestGraph per trace across all trials.

    ``fit_on`` is the set of training graph_ids used to fit the vocabulary
    and scaler; None fits on every graph (only appropriate when the caller
    splits at the trial level afterwards and refits).
    Returns (graphs, vocab, scaler, per-class counts).
    """
    skeletons = load_skeletons(run_specs)
    if not skeletons:
        raise ValueError("empty dataset: no traces in any trial")
    train_ids = fit_on if fit_on is not None else {s.graph_id for s in skeletons}
    vocab, scaler = fit_features(skeletons, train_ids, mode.log_dim)
    graphs = featurize(skeletons, mode, vocab, scaler)
    return graphs, vocab, scaler, class_counts(graphs)


# ---------------------------------------------------------------------------
# dataset persistence: JSONL of graphs + JSON sidecar


def save_dataset(
    graphs: Sequence[RequestGraph],
    vocab: textfeat.TfidfVocab,
    scaler: MetricScaler,
    mode: ModalityConfig,
    path,
) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            obj = {
                "graph_id": g.graph_id,
                "run_id": g.run_id,
                "nodes": list(g.nodes),
                "edges": [list(e) for e in g.edges],
                "features": np.round(g.features, 12).tolist(),
                "label": g.label,
                "trace_interval": list(g.trace_interval),
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sidecar = {
        "modality": {"mode": mode.mode, "log_dim": mode.log_dim, "metric_dim": mode.metric_dim},
        "vocab": textfeat.vocab_to_json(vocab),
        "scaler": scaler.to_json(),
        "class_counts": class_counts(graphs),
    }
    with open(path.with_suffix(".meta.json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_dataset(path) -> Tuple[List[RequestGraph], dict]:
    path = Path(path)
    graphs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            graphs.append(
                RequestGraph(
                    graph_id=obj["graph_id"],
                    run_id=obj["run_id"],
                    nodes=tuple(obj["nodes"]),
                    edges=tuple(tuple(e) for e in obj["edges"]),
                    features=np.asarray(obj["features"], dtype=np.float64),
                    label=obj["label"],
                    trace_interval=tuple(obj["trace_interval"]),
                )
            )
    with open(path.with_suffix(".meta.json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    return graphs, sidecar
