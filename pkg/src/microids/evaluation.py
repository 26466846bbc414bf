"""Splits, metrics, the experiment grid, t-SNE projection, and report files.

Two split protocols:

  random_stratified  per-class shuffled split at the requested test fraction
  trial_level        whole runs (run_ids) assigned to one side, chosen
                     greedily per scenario to approach the test fraction

The experiment grid reproduces the comparison protocol: GCN modality ablation
under the trial-level split, GCN/baseline comparison under both splits, and
runtime accounting. Reports are emitted as JSON + CSV plus minimal
hand-rolled SVG bar charts so there is no plotting dependency.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import baselines, gcn, textfeat
from .graphs import (
    GraphSkeleton,
    MetricScaler,
    ModalityConfig,
    RequestGraph,
    featurize,
    fit_features,
)
from .telemetry import CLASS_INDEX, CLASS_LABELS


@dataclass(frozen=True)
class SplitSpec:
    kind: str = "random_stratified"
    test_size: float = 0.3
    seed: int = 7

    def __post_init__(self):
        if self.kind not in ("random_stratified", "trial_level"):
            raise ValueError(f"unknown split kind {self.kind!r}")
        if not 0.0 < self.test_size < 1.0:
            raise ValueError("test_size must be in (0, 1)")


def split(items: Sequence, spec: SplitSpec) -> Tuple[Set[str], Set[str]]:
    """Split graphs (or skeletons) into train/test graph_id sets.

    Items need ``graph_id``, ``run_id`` and ``label`` attributes.
    """
    if not items:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    train: Set[str] = set()
    test: Set[str] = set()
    if spec.kind == "random_stratified":
        by_class: Dict[str, List[str]] = {}
        for item in items:
            by_class.setdefault(item.label, []).append(item.graph_id)
        for label in sorted(by_class):
            ids = sorted(by_class[label])
            rng.shuffle(ids)
            n = len(ids)
            n_test = int(round(spec.test_size * n))
            if n >= 2:
                n_test = min(max(n_test, 1), n - 1)
            test.update(ids[:n_test])
            train.update(ids[n_test:])
    else:
        # Greedy per-scenario run assignment toward the target graph fraction.
        runs: Dict[str, Dict[str, int]] = {}
        run_scenario: Dict[str, str] = {}
        for item in items:
            runs.setdefault(item.run_id, {"n": 0})["n"] += 1
            if item.label != "normal":
                run_scenario[item.run_id] = item.label
        by_scenario: Dict[str, List[str]] = {}
        for run_id in sorted(runs):
            by_scenario.setdefault(run_scenario.get(run_id, "normal"), []).append(run_id)
        test_runs: Set[str] = set()
        for scenario in sorted(by_scenario):
            run_ids = by_scenario[scenario]
            if len(run_ids) < 2:
                warnings.warn(
                    f"scenario {scenario!r} present in only one run; "
                    "it may vanish from one split side"
                )
            rng.shuffle(run_ids)
            total = sum(runs[r]["n"] for r in run_ids)
            target = spec.test_size * total
            picked = 0
            for run_id in run_ids:
                if picked >= target:
                    break
                test_runs.add(run_id)
                picked += runs[run_id]["n"]
        for item in items:
            (test if item.run_id in test_runs else train).add(item.graph_id)
    return train, test


@dataclass
class EvalReport:
    model: str
    split: str
    modality: str
    per_class: Dict[str, Dict[str, float]]  # precision/recall/f1/support
    accuracy: float
    macro_f1: float
    weighted_f1: float
    confusion: List[List[int]]  # rows true, columns predicted
    train_seconds: float = 0.0
    predict_ms_per_graph: float = 0.0

    @property
    def cell_name(self) -> str:
        return f"{self.split}_{self.model}_{self.modality}"

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "split": self.split,
            "modality": self.modality,
            "per_class": self.per_class,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "confusion": self.confusion,
            "train_seconds": self.train_seconds,
            "predict_ms_per_graph": self.predict_ms_per_graph,
        }


def compute_metrics(
    y_true: Sequence[int],
    y_pred: Sequence[int],
    class_names: Sequence[str] = CLASS_LABELS,
) -> dict:
    """Per-class precision/recall/F1/support, accuracy, macro/weighted F1,
    and the confusion matrix. All 0/0 ratios are 0 by convention."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("label vectors must be equal length")
    c = len(class_names)
    if len(y_true) and (min(y_true.min(), y_pred.min()) < 0 or max(y_true.max(), y_pred.max()) >= c):
        raise ValueError("label outside the class set")
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros(c), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros(c), where=support > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros(c), where=pr > 0)
    n = len(y_true)
    per_class = {
        name: {
            "precision": float(precision[i]),
            "recall": float(recall[i]),
            "f1": float(f1[i]),
            "support": int(support[i]),
        }
        for i, name in enumerate(class_names)
    }
    return {
        "per_class": per_class,
        "accuracy": float(tp.sum() / n) if n else 0.0,
        "macro_f1": float(f1.mean()),
        "weighted_f1": float((f1 * support).sum() / n) if n else 0.0,
        "confusion": confusion.tolist(),
    }


# ---------------------------------------------------------------------------
# experiment grid

GRID_CELLS: Tuple[Tuple[str, str, str], ...] = (
    ("random_stratified", "gcn", "logs_plus_metrics"),
    ("trial_level", "gcn", "trace_only"),
    ("trial_level", "gcn", "logs_only"),
    ("trial_level", "gcn", "metrics_only"),
    ("trial_level", "gcn", "logs_plus_metrics"),
    ("random_stratified", "forest", "logs_plus_metrics"),
    ("random_stratified", "mlp", "logs_plus_metrics"),
    ("trial_level", "forest", "logs_plus_metrics"),
    ("trial_level", "mlp", "logs_plus_metrics"),
)


@dataclass(frozen=True)
class ExperimentConfig:
    epochs: int = 5
    log_dim: int = 16
    hidden_dim: int = 32
    test_size: float = 0.3
    seed: int = 7
    learning_rate: float = 1e-3
    batch_size: int = 64
    tsne_sample_cap: int = 2000
    tsne_perplexity: float = 30.0
    tsne_iterations: int = 500


@dataclass
class ExperimentOutput:
    reports: List[EvalReport]
    errors: Dict[str, List[dict]] = field(default_factory=dict)  # cell -> misclassified records
    tsne_points: List[Tuple[float, float, str]] = field(default_factory=list)
    failures: Dict[str, str] = field(default_factory=dict)  # cell -> error message


def _labels_of(graphs: Sequence[RequestGraph]) -> np.ndarray:
    return np.asarray([CLASS_INDEX[g.label] for g in graphs], dtype=np.int64)


def _run_gcn_cell(train_graphs, test_graphs, config: ExperimentConfig):
    y_train = _labels_of(train_graphs)
    y_test = _labels_of(test_graphs)
    model = gcn.init_model(
        train_graphs[0].features.shape[1], config.hidden_dim, len(CLASS_LABELS), config.seed
    )
    train_cfg = gcn.TrainConfig(
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        seed=config.seed,
    )
    _, _, train_seconds = gcn.train(model, train_graphs, y_train, train_cfg)
    y_pred, logits, latency_us = gcn.predict(model, test_graphs)
    core = compute_metrics(y_test, y_pred)
    core["train_seconds"] = train_seconds
    core["predict_ms_per_graph"] = latency_us / 1000.0
    return core, y_pred, logits


def _run_baseline_cell(model_name, train_graphs, test_graphs, config: ExperimentConfig):
    x_train = np.vstack([baselines.flatten(g).features for g in train_graphs])
    x_test = np.vstack([baselines.flatten(g).features for g in test_graphs])
    y_train = _labels_of(train_graphs)
    y_test = _labels_of(test_graphs)
    if model_name == "forest":
        model, train_seconds = baselines.train_random_forest(
            x_train, y_train, baselines.ForestConfig(seed=config.seed)
        )
    else:
        model, train_seconds = baselines.train_mlp(
            x_train, y_train, len(CLASS_LABELS), seed=config.seed
        )
    y_pred, latency_us = baselines.predict_baseline(model, x_test)
    core = compute_metrics(y_test, y_pred)
    core["train_seconds"] = train_seconds
    core["predict_ms_per_graph"] = latency_us / 1000.0
    return core, y_pred


def run_experiment_matrix(
    skeletons: Sequence[GraphSkeleton],
    config: ExperimentConfig = ExperimentConfig(),
    cells: Sequence[Tuple[str, str, str]] = GRID_CELLS,
) -> ExperimentOutput:
    """Execute the full split x model x modality grid with shared seeds.

    The vocabulary and scaler are refit on each split's training side. Cell
    failures are recorded and remaining cells continue.
    """
    out = ExperimentOutput(reports=[])
    split_ids: Dict[str, Tuple[Set[str], Set[str]]] = {}
    fitted: Dict[str, tuple] = {}
    datasets: Dict[Tuple[str, str], Tuple[list, list]] = {}

    def featurized(split_kind: str, modality: str):
        key = (split_kind, modality)
        if key not in datasets:
            if split_kind not in split_ids:
                split_ids[split_kind] = split(
                    skeletons, SplitSpec(kind=split_kind, test_size=config.test_size, seed=config.seed)
                )
            train_ids, test_ids = split_ids[split_kind]
            if split_kind not in fitted:
                fitted[split_kind] = fit_features(skeletons, train_ids, config.log_dim)
            vocab, scaler = fitted[split_kind]
            graphs = featurize(skeletons, ModalityConfig(modality, config.log_dim), vocab, scaler)
            by_id = {g.graph_id: g for g in graphs}
            datasets[key] = (
                [by_id[i] for i in sorted(train_ids)],
                [by_id[i] for i in sorted(test_ids)],
            )
        return datasets[key]

    for split_kind, model_name, modality in cells:
        cell = f"{split_kind}_{model_name}_{modality}"
        try:
            train_graphs, test_graphs = featurized(split_kind, modality)
            if model_name == "gcn":
                core, y_pred, logits = _run_gcn_cell(train_graphs, test_graphs, config)
            else:
                core, y_pred = _run_baseline_cell(model_name, train_graphs, test_graphs, config)
                logits = None
            report = EvalReport(
                model=model_name,
                split=split_kind,
                modality=modality,
                per_class=core["per_class"],
                accuracy=core["accuracy"],
                macro_f1=core["macro_f1"],
                weighted_f1=core["weighted_f1"],
                confusion=core["confusion"],
                train_seconds=core["train_seconds"],
                predict_ms_per_graph=core["predict_ms_per_graph"],
            )
            out.reports.append(report)
            y_test = _labels_of(test_graphs)
            out.errors[report.cell_name] = [
                {
                    "graph_id": g.graph_id,
                    "nodes": list(g.nodes),
                    "edge_count": g.n_undirected_edges,
                    "true": CLASS_LABELS[t],
                    "predicted": CLASS_LABELS[p],
                }
                for g, t, p in zip(test_graphs, y_test, y_pred)
                if t != p
            ]
            # t-SNE of the trial-level logs+metrics GCN test logits
            if model_name == "gcn" and split_kind == "trial_level" and modality == "logs_plus_metrics":
                labels = [CLASS_LABELS[t] for t in y_test]
                out.tsne_points = project_logits_2d(
                    logits,
                    labels,
                    sample_cap=config.tsne_sample_cap,
                    perplexity=config.tsne_perplexity,
                    iterations=config.tsne_iterations,
                    seed=config.seed,
                )
        except Exception as exc:  # record and continue with remaining cells
            out.failures[cell] = f"{type(exc).__name__}: {exc}"
    return out


# ---------------------------------------------------------------------------
# t-SNE (exact, O(n^2); corpora here are desk-scale)


def _perplexity_probabilities(sq_dists: np.ndarray, perplexity: float) -> np.ndarray:
    """Row-stochastic conditional affinities with per-point bandwidth found by
    binary search so that each row's entropy matches log(perplexity)."""
    n = sq_dists.shape[0]
    target = np.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        d = np.delete(sq_dists[i], i)
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        for _ in range(64):
            w = np.exp(-d * beta)
            s = w.sum()
            if s <= 0:
                entropy = 0.0
                probs = np.zeros_like(w)
            else:
                probs = w / s
                entropy = float(np.log(s) + beta * (d * probs).sum())
            diff = entropy - target
            if abs(diff) < 1e-5:
                break
            if diff > 0:
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if beta_min == -np.inf else (beta + beta_min) / 2.0
        row = np.insert(probs, i, 0.0)
        p[i] = row
    return p


def project_logits_2d(
    points: np.ndarray,
    labels: Sequence[str],
    sample_cap: int = 2000,
    perplexity: float = 30.0,
    iterations: int = 500,
    seed: int = 7,
) -> List[Tuple[float, float, str]]:
    """Exact t-SNE of (logit) vectors to 2-D on a stratified subsample.

    Early exaggeration x12 for the first 100 iterations, momentum 0.5 then
    0.8 after iteration 250. Deterministic for a fixed seed.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = list(labels)
    if len(points) < 10:
        raise ValueError("t-SNE needs at least 10 samples")
    rng = np.random.default_rng(seed)
    if len(points) > sample_cap:
        # stratified subsample proportional to class frequency
        keep: List[int] = []
        by_label: Dict[str, List[int]] = {}
        for i, lab in enumerate(labels):
            by_label.setdefault(lab, []).append(i)
        for lab in sorted(by_label):
            ids = np.array(by_label[lab])
            quota = max(1, int(round(sample_cap * len(ids) / len(points))))
            rng.shuffle(ids)
            keep.extend(ids[:quota].tolist())
        keep = sorted(keep)[:sample_cap]
        points = points[keep]
        labels = [labels[i] for i in keep]
    n = len(points)
    if perplexity >= n / 3:
        raise ValueError(f"perplexity {perplexity} too large for {n} samples")

    sq = np.sum(points**2, axis=1)
    sq_dists = np.maximum(sq[:, None] + sq[None, :] - 2.0 * points @ points.T, 0.0)
    p_cond = _perplexity_probabilities(sq_dists, perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)
    p = np.maximum(p, 1e-12)

    y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    lr = 200.0
    for it in range(iterations):
        exaggeration = 12.0 if it < 100 else 1.0
        momentum = 0.5 if it < 250 else 0.8
        sy = np.sum(y**2, axis=1)
        num = 1.0 / (1.0 + np.maximum(sy[:, None] + sy[None, :] - 2.0 * y @ y.T, 0.0))
        np.fill_diagonal(num, 0.0)
        q = np.maximum(num / num.sum(), 1e-12)
        pq = (exaggeration * p - q) * num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)
        velocity = momentum * velocity - lr * grad
        y = y + velocity
        y -= y.mean(axis=0)
    return [(float(y[i, 0]), float(y[i, 1]), labels[i]) for i in range(n)]


# ---------------------------------------------------------------------------
# report emission


def _svg_bar_chart(title: str, names: Sequence[str], values: Sequence[float], unit: str = "") -> str:
    width, height, margin = 640, 360, 60
    plot_w, plot_h = width - 2 * margin, height - 2 * margin
    vmax = max(max(values), 1e-12)
    bar_w = plot_w / max(len(values), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width/2:.0f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{margin}" y1="{height-margin}" x2="{width-margin}" y2="{height-margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height-margin}" stroke="black"/>',
    ]
    for i, (name, value) in enumerate(zip(names, values)):
        h = plot_h * value / vmax
        x = margin + i * bar_w + bar_w * 0.15
        y = height - margin - h
        parts.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w*0.7:.1f}" height="{h:.1f}" fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{x + bar_w*0.35:.1f}" y="{y - 6:.1f}" text-anchor="middle" font-size="11">'
            f"{value:.3g}{unit}</text>"
        )
        parts.append(
            f'<text x="{x + bar_w*0.35:.1f}" y="{height-margin+16:.0f}" text-anchor="middle" '
            f'font-size="11">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def emit_report(output: ExperimentOutput, out_dir) -> List[Path]:
    """Write results.json, per-cell confusion CSVs, the metrics/ablation/
    runtime tables, t-SNE coordinates, error dumps, and SVG bar charts."""
    if not output.reports:
        raise ValueError("emit_report requires at least one report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    def write(path: Path, text: str):
        path.write_text(text, encoding="utf-8")
        written.append(path)

    results = {
        "reports": [r.to_json() for r in output.reports],
        "failures": output.failures,
    }
    write(out_dir / "results.json", json.dumps(results, indent=2, sort_keys=True) + "\n")

    for report in output.reports:
        rows = ["true\\pred," + ",".join(CLASS_LABELS)]
        for name, row in zip(CLASS_LABELS, report.confusion):
            rows.append(name + "," + ",".join(str(v) for v in row))
        write(out_dir / f"confusion_{report.cell_name}.csv", "\n".join(rows) + "\n")

    # per-class metrics for every cell (classification-report shape)
    rows = ["cell,class,precision,recall,f1,support"]
    for report in output.reports:
        for name in CLASS_LABELS:
            m = report.per_class[name]
            rows.append(
                f"{report.cell_name},{name},{m['precision']:.6f},{m['recall']:.6f},"
                f"{m['f1']:.6f},{m['support']}"
            )
        rows.append(
            f"{report.cell_name},accuracy,{report.accuracy:.6f},,,"
        )
        rows.append(f"{report.cell_name},macro_f1,,,{report.macro_f1:.6f},")
        rows.append(f"{report.cell_name},weighted_f1,,,{report.weighted_f1:.6f},")
    write(out_dir / "metrics_table.csv", "\n".join(rows) + "\n")

    ablation = [r for r in output.reports if r.model == "gcn" and r.split == "trial_level"]
    rows = ["modality,accuracy,macro_f1,weighted_f1,train_s"]
    for report in ablation:
        rows.append(
            f"{report.modality},{report.accuracy:.6f},{report.macro_f1:.6f},"
            f"{report.weighted_f1:.6f},{report.train_seconds:.3f}"
        )
    write(out_dir / "ablation.csv", "\n".join(rows) + "\n")

    rows = ["split,model,modality,accuracy,macro_f1,train_s,pred_ms_per_graph"]
    for report in output.reports:
        rows.append(
            f"{report.split},{report.model},{report.modality},{report.accuracy:.6f},"
            f"{report.macro_f1:.6f},{report.train_seconds:.3f},{report.predict_ms_per_graph:.6f}"
        )
    write(out_dir / "runtime.csv", "\n".join(rows) + "\n")

    if output.tsne_points:
        rows = ["x,y,label"] + [f"{x:.6f},{y:.6f},{lab}" for x, y, lab in output.tsne_points]
        write(out_dir / "tsne.csv", "\n".join(rows) + "\n")

    for cell, records in output.errors.items():
        path = out_dir / f"errors_{cell}.jsonl"
        path.write_text(
            "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records),
            encoding="utf-8",
        )
        written.append(path)

    if ablation:
        write(
            out_dir / "ablation_macro_f1.svg",
            _svg_bar_chart(
                "GCN modality ablation (trial-level): macro F1",
                [r.modality for r in ablation],
                [r.macro_f1 for r in ablation],
            ),
        )
    trial_cells = [r for r in output.reports if r.split == "trial_level" and r.modality == "logs_plus_metrics"]
    if trial_cells:
        write(
            out_dir / "runtime_train_seconds.svg",
            _svg_bar_chart(
                "Training time (trial-level, logs+metrics)",
                [r.model for r in trial_cells],
                [r.train_seconds for r in trial_cells],
                unit="s",
            ),
        )
        write(
            out_dir / "runtime_predict_latency.svg",
            _svg_bar_chart(
                "Prediction latency (ms/graph)",
                [r.model for r in trial_cells],
                [r.predict_ms_per_graph for r in trial_cells],
            ),
        )
    return written
