import numpy as np
import pytest

from microids import graphs, textfeat
from microids.telemetry import (
    LabelWindow,
    LogRecord,
    MetricSample,
    N_METRIC_CHANNELS,
    Span,
    TraceRecord,
)


def span(span_id, parent, service, start=0, end=100):
    return Span(span_id=span_id, parent_span_id=parent, service=service,
                start_us=start, end_us=end, status="ok")


def order_trace():
    """frontend -> order -> payment, order -> cart."""
    return TraceRecord(
        trace_id="t1",
        run_id="r1",
        spans=(
            span("s0", None, "frontend", 0, 400),
            span("s1", "s0", "order", 10, 350),
            span("s2", "s1", "payment", 20, 150),
            span("s3", "s1", "cart", 160, 300),
        ),
    )


class TestTraceToGraph:
    def test_nodes_ordered_by_first_appearance(self):
        nodes, edges = graphs.trace_to_graph(order_trace())
        assert nodes == ["frontend", "order", "payment", "cart"]
        assert edges == [(0, 1), (1, 0), (1, 2), (1, 3), (2, 1), (3, 1)]

    def test_duplicate_calls_collapse(self):
        trace = TraceRecord("t", "r", (
            span("s0", None, "frontend"),
            span("s1", "s0", "catalog"),
            span("s2", "s0", "catalog"),
        ))
        nodes, edges = graphs.trace_to_graph(trace)
        assert nodes == ["frontend", "catalog"]
        assert edges == [(0, 1), (1, 0)]

    def test_same_service_parent_adds_no_edge(self):
        trace = TraceRecord("t", "r", (
            span("s0", None, "frontend"),
            span("s1", "s0", "frontend"),
        ))
        nodes, edges = graphs.trace_to_graph(trace)
        assert nodes == ["frontend"]
        assert edges == []

    def test_missing_parent_raises(self):
        trace = TraceRecord("t", "r", (
            span("s0", None, "frontend"),
            span("s1", "sX", "catalog"),
        ))
        with pytest.raises(graphs.GraphStructureError):
            graphs.trace_to_graph(trace)


class TestLabelGraph:
    WINDOWS = (
        LabelWindow("r", "normal", 0, 1000),
        LabelWindow("r", "http_flood", 250, 750),
    )

    def test_overlapping_trace_gets_attack_label(self):
        assert graphs.label_graph((700, 800), self.WINDOWS) == "http_flood"

    def test_outside_window_is_normal(self):
        assert graphs.label_graph((800, 900), self.WINDOWS) == "normal"

    def test_touching_endpoint_is_normal(self):
        assert graphs.label_graph((100, 250), self.WINDOWS) == "normal"
        assert graphs.label_graph((750, 900), self.WINDOWS) == "normal"


class TestMetricScaler:
    def test_z_score_oracle(self):
        rows = np.array([[1.0, 10.0], [3.0, 10.0], [5.0, 10.0]])
        scaler = graphs.MetricScaler().fit(rows)
        out = scaler.transform(rows)
        assert np.allclose(out[:, 0], (rows[:, 0] - 3.0) / rows[:, 0].std())
        # constant channel: centered, divisor forced to 1
        assert np.allclose(out[:, 1], 0.0)

    def test_unfitted_transform_raises(self):
        with pytest.raises(RuntimeError):
            graphs.MetricScaler().transform(np.zeros((1, 2)))

    def test_empty_fit_raises(self):
        with pytest.raises(ValueError):
            graphs.MetricScaler().fit(np.zeros((0, 2)))

    def test_json_round_trip(self):
        scaler = graphs.MetricScaler().fit(np.array([[1.0, 2.0], [3.0, 8.0]]))
        loaded = graphs.MetricScaler.from_json(scaler.to_json())
        assert np.array_equal(loaded.mean_, scaler.mean_)
        assert np.array_equal(loaded.std_, scaler.std_)


class TestModalityConfig:
    def test_widths(self):
        assert graphs.ModalityConfig("trace_only").width == 10
        assert graphs.ModalityConfig("logs_only", log_dim=16).width == 16
        assert graphs.ModalityConfig("metrics_only").width == 9
        assert graphs.ModalityConfig("logs_plus_metrics", log_dim=16).width == 25

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            graphs.ModalityConfig("logs_and_traces")


def one_graph_trial(message, metrics_row=None, run_id="r1", t0=0):
    trace = TraceRecord(f"{run_id}-t", run_id, (
        span("s0", None, "frontend", t0, t0 + 100),
        span("s1", "s0", "auth", t0 + 10, t0 + 90),
    ))
    logs = [LogRecord(t0 + 10, "auth", "info", message, trace_id=trace.trace_id)]
    metrics = []
    if metrics_row is not None:
        metrics = [MetricSample(t0 - 1000, s, tuple(metrics_row)) for s in ("frontend", "auth")]
    windows = [LabelWindow(run_id, "normal", t0, t0 + 1000)]
    return graphs.build_skeletons_for_trial(run_id, [trace], logs, metrics, windows)


class TestSkeletonsAndFeatures:
    def test_log_attribution_by_trace_id(self):
        (skel,) = one_graph_trial("login failed badly")
        auth_idx = skel.nodes.index("auth")
        assert skel.node_docs[auth_idx] == ("login", "failed", "badly")
        assert skel.node_docs[0] == ()

    def test_orphan_logs_attributed_by_time_window(self):
        trace = TraceRecord("t", "r", (span("s0", None, "frontend", 1000, 2000),))
        near = LogRecord(1500, "frontend", "info", "orphan near", trace_id=None)
        far = LogRecord(10_000_000, "frontend", "info", "orphan far", trace_id=None)
        (skel,) = graphs.build_skeletons_for_trial(
            "r", [trace], [near, far], [], [LabelWindow("r", "normal", 0, 10**8)]
        )
        assert "near" in skel.node_docs[0]
        assert "far" not in skel.node_docs[0]

    def test_metric_alignment_uses_last_sample_at_or_before_start(self):
        row_old = [1.0] * N_METRIC_CHANNELS
        row_new = [2.0] * N_METRIC_CHANNELS
        trace = TraceRecord("t", "r", (span("s0", None, "frontend", 10_000_000, 10_001_000),))
        metrics = [
            MetricSample(4_000_000, "frontend", tuple(row_old)),
            MetricSample(9_000_000, "frontend", tuple(row_new)),
            MetricSample(11_000_000, "frontend", tuple(row_old)),
        ]
        (skel,) = graphs.build_skeletons_for_trial(
            "r", [trace], [], metrics, [LabelWindow("r", "normal", 0, 10**8)]
        )
        assert skel.node_metrics[0] == tuple(row_new)

    def test_stale_metrics_beyond_lookback_ignored(self):
        trace = TraceRecord("t", "r", (span("s0", None, "frontend", 50_000_000, 50_001_000),))
        metrics = [MetricSample(10_000_000, "frontend", tuple([1.0] * N_METRIC_CHANNELS))]
        (skel,) = graphs.build_skeletons_for_trial(
            "r", [trace], [], metrics, [LabelWindow("r", "normal", 0, 10**8)]
        )
        assert skel.node_metrics[0] is None

    def test_missing_metrics_become_zeros_in_standardized_space(self):
        (skel,) = one_graph_trial("hello world")
        vocab = textfeat.fit_vocab([("hello", "world")], log_dim=4)
        scaler = graphs.MetricScaler().fit(np.arange(2 * N_METRIC_CHANNELS, dtype=float).reshape(2, -1))
        graph = graphs.attach_features(skel, vocab, scaler, graphs.ModalityConfig("logs_plus_metrics", 4))
        assert np.allclose(graph.features[:, 4:], 0.0)

    def test_trace_only_features(self):
        (skel,) = one_graph_trial("x")
        graph = graphs.attach_features(skel, None, None, graphs.ModalityConfig("trace_only"))
        frontend = graph.features[0]
        assert frontend[0] == 1.0  # one-hot frontend
        assert frontend[6] == 1.0  # degree
        assert frontend[7] == 2.0  # node count
        assert frontend[8] == 1.0  # undirected edge count
        assert frontend[9] == 1.0  # root flag
        assert graph.features[1][9] == 0.0

    def test_modality_requires_fitted_inputs(self):
        (skel,) = one_graph_trial("x")
        with pytest.raises(RuntimeError):
            graphs.attach_features(skel, None, None, graphs.ModalityConfig("logs_only"))
        with pytest.raises(RuntimeError):
            graphs.attach_features(skel, None, graphs.MetricScaler(), graphs.ModalityConfig("metrics_only"))


class TestLeakageGuard:
    def test_test_only_token_absent_from_vocab(self):
        train = one_graph_trial("common words here", run_id="train_run")
        test = one_graph_trial("common words plus leakedsecret", run_id="test_run")
        skeletons = train + test
        vocab, _scaler = graphs.fit_features(
            skeletons + one_graph_trial("common", metrics_row=[1.0] * N_METRIC_CHANNELS, run_id="m"),
            {s.graph_id for s in train} | {"m/m-t"},
            log_dim=16,
        )
        assert "leakedsecret" not in vocab.tokens
        assert "common" in vocab.tokens

    def test_no_training_graphs_raises(self):
        skeletons = one_graph_trial("a b")
        with pytest.raises(ValueError):
            graphs.fit_features(skeletons, set())


class TestDatasetRoundTrip:
    def test_save_load(self, tmp_path, tiny_corpus):
        mode = graphs.ModalityConfig("logs_plus_metrics", 8)
        dataset, vocab, scaler, counts = graphs.assemble_dataset(tiny_corpus[:1], mode)
        path = tmp_path / "dataset.jsonl"
        graphs.save_dataset(dataset, vocab, scaler, mode, path)
        loaded, sidecar = graphs.load_dataset(path)
        assert len(loaded) == len(dataset)
        first, again = dataset[0], loaded[0]
        assert first.graph_id == again.graph_id
        assert first.nodes == again.nodes
        assert first.edges == again.edges
        assert first.label == again.label
        assert np.allclose(first.features, again.features, atol=1e-11)
        assert sidecar["class_counts"] == counts
        assert sidecar["modality"]["mode"] == "logs_plus_metrics"

    def test_class_counts_drop_empty_classes(self, tiny_skeletons):
        counts = graphs.class_counts(tiny_skeletons)
        assert all(n > 0 for n in counts.values())
        assert set(counts) > {"normal"}
