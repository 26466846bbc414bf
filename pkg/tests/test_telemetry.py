import json

import pytest
from hypothesis import given, strategies as st

from microids import telemetry as tm


def make_span(span_id="s00", parent=None, service="frontend", start=0, end=10, status="ok"):
    return tm.Span(span_id=span_id, parent_span_id=parent, service=service,
                   start_us=start, end_us=end, status=status)


def make_trace():
    return tm.TraceRecord(
        trace_id="t1",
        run_id="r1",
        spans=(
            make_span("s00", None, "frontend", 0, 100),
            make_span("s01", "s00", "catalog", 10, 60),
        ),
    )


class TestWindowsOverlap:
    def test_touching_endpoints_do_not_overlap(self):
        assert not tm.windows_overlap(0, 10, 10, 20)
        assert not tm.windows_overlap(10, 20, 0, 10)

    def test_containment_overlaps(self):
        assert tm.windows_overlap(0, 100, 40, 60)
        assert tm.windows_overlap(40, 60, 0, 100)

    def test_partial_overlap(self):
        assert tm.windows_overlap(0, 50, 49, 100)
        assert not tm.windows_overlap(0, 50, 50, 100)

    @given(st.tuples(*[st.integers(-1000, 1000)] * 4))
    def test_symmetric(self, bounds):
        a0, a1, b0, b1 = bounds
        assert tm.windows_overlap(a0, a1, b0, b1) == tm.windows_overlap(b0, b1, a0, a1)


class TestValidation:
    def test_valid_trace_passes(self):
        tm.validate_trace(make_trace())

    def test_two_roots_rejected(self):
        trace = tm.TraceRecord("t", "r", (make_span("a"), make_span("b")))
        with pytest.raises(tm.ValidationError, match="root"):
            tm.validate_trace(trace)

    def test_missing_parent_rejected(self):
        trace = tm.TraceRecord("t", "r", (make_span("a"), make_span("b", parent="zz")))
        with pytest.raises(tm.ValidationError, match="missing parent"):
            tm.validate_trace(trace)

    def test_duplicate_span_ids_rejected(self):
        trace = tm.TraceRecord("t", "r", (make_span("a"), make_span("a", parent="a")))
        with pytest.raises(tm.ValidationError, match="duplicate"):
            tm.validate_trace(trace)

    def test_negative_duration_rejected(self):
        with pytest.raises(tm.ValidationError):
            tm.validate_span(make_span(start=10, end=5))

    def test_unknown_service_rejected(self):
        with pytest.raises(tm.ValidationError):
            tm.validate_span(make_span(service="db"))
        with pytest.raises(tm.ValidationError):
            tm.validate_log(tm.LogRecord(0, "db", "info", "x"))

    def test_metric_wrong_width_rejected(self):
        with pytest.raises(tm.ValidationError, match="expected 9"):
            tm.validate_metric(tm.MetricSample(0, "auth", (1.0, 2.0)))

    def test_metric_nonfinite_rejected(self):
        values = [1.0] * tm.N_METRIC_CHANNELS
        values[3] = float("nan")
        with pytest.raises(tm.ValidationError, match="non-finite"):
            tm.validate_metric(tm.MetricSample(0, "auth", tuple(values)))

    def test_metric_negative_rate_rejected(self):
        values = [1.0] * tm.N_METRIC_CHANNELS
        values[tm.METRIC_CHANNELS.index("requests_per_s")] = -1.0
        with pytest.raises(tm.ValidationError, match="negative"):
            tm.validate_metric(tm.MetricSample(0, "auth", tuple(values)))

    def test_label_window_rejects_empty_interval(self):
        with pytest.raises(tm.ValidationError):
            tm.validate_label_window(tm.LabelWindow("r", "normal", 10, 10))

    def test_label_window_rejects_unknown_class(self):
        with pytest.raises(tm.ValidationError):
            tm.validate_label_window(tm.LabelWindow("r", "dos", 0, 10))


class TestSerialization:
    def test_round_trip_all_record_types(self):
        trace = make_trace()
        log = tm.LogRecord(5, "auth", "warn", "login failed", trace_id=None)
        metric = tm.MetricSample(7, "cart", tuple(float(i) for i in range(9)))
        window = tm.LabelWindow("r1", "http_flood", 0, 50)
        assert tm.trace_from_obj(tm.record_to_obj(trace)) == trace
        assert tm.log_from_obj(tm.record_to_obj(log)) == log
        assert tm.metric_from_obj(tm.record_to_obj(metric)) == metric
        assert tm.label_window_from_obj(tm.record_to_obj(window)) == window

    def test_serialize_records_is_jsonl(self):
        data = tm.serialize_records([make_trace(), make_trace()])
        lines = data.decode("utf-8").splitlines()
        assert len(lines) == 2
        assert json.loads(lines[0])["trace_id"] == "t1"

    def test_unknown_record_type_rejected(self):
        with pytest.raises(TypeError):
            tm.record_to_obj({"not": "a record"})

    @given(st.integers(0, 10**12), st.sampled_from(tm.SERVICES),
           st.sampled_from(tm.LOG_LEVELS), st.text(min_size=1, max_size=40))
    def test_log_round_trip_property(self, ts, service, level, message):
        log = tm.LogRecord(ts, service, level, message, trace_id="t")
        assert tm.log_from_obj(json.loads(json.dumps(tm.record_to_obj(log)))) == log


class TestReadTrial:
    def _write_trial(self, path, traces=(), logs=(), metrics=(), windows=()):
        path.mkdir(exist_ok=True)
        for name, records in (("traces.jsonl", traces), ("logs.jsonl", logs),
                              ("metrics.jsonl", metrics), ("labels.jsonl", windows)):
            (path / name).write_bytes(tm.serialize_records(records))

    def test_round_trip_and_sorting(self, tmp_path):
        early = tm.TraceRecord("t0", "r", (make_span(start=0, end=10),))
        late = tm.TraceRecord("t1", "r", (make_span(start=100, end=110),))
        logs = [tm.LogRecord(50, "auth", "info", "b"), tm.LogRecord(5, "cart", "info", "a")]
        window = tm.LabelWindow("r", "normal", 0, 200)
        self._write_trial(tmp_path, [late, early], logs, [], [window])
        traces, read_logs, metrics, windows = tm.read_trial(tmp_path)
        assert [t.trace_id for t in traces] == ["t0", "t1"]
        assert [l.ts_us for l in read_logs] == [5, 50]
        assert windows == [window]

    def test_missing_file_raises(self, tmp_path):
        (tmp_path / "traces.jsonl").write_text("")
        with pytest.raises(FileNotFoundError):
            tm.read_trial(tmp_path)

    def test_malformed_line_reports_location(self, tmp_path):
        self._write_trial(tmp_path)
        (tmp_path / "logs.jsonl").write_text('{"ts_us": 1}\nnot json\n')
        with pytest.raises(tm.ParseError) as exc_info:
            tm.read_trial(tmp_path)
        assert exc_info.value.line_no == 1  # first line lacks required fields

    def test_invalid_record_raises_validation_error(self, tmp_path):
        bad = tm.TraceRecord("t", "r", (make_span("a"), make_span("b")))
        self._write_trial(tmp_path, [bad])
        with pytest.raises(tm.ValidationError):
            tm.read_trial(tmp_path)


class TestRunSpecs:
    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "specs.csv"
        path.write_text("runid,scen,dir\n")
        with pytest.raises(tm.ValidationError, match="header"):
            tm.read_run_specs(path)

    def test_unknown_scenario_rejected(self, tmp_path):
        path = tmp_path / "specs.csv"
        path.write_text("run_id,scenario,trial_dir\nr1,dos,/tmp/x\n")
        with pytest.raises(tm.ValidationError, match="scenario"):
            tm.read_run_specs(path)

    def test_round_trip(self, tmp_path):
        from microids.simulate import write_run_specs

        rows = [("r1", "http_flood", "/tmp/a"), ("r2", "normal", "/tmp/b")]
        path = tmp_path / "specs.csv"
        write_run_specs(rows, path)
        assert tm.read_run_specs(path) == rows
