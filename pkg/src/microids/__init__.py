"""Microservice intrusion-detection benchmark toolkit.

Simulates a six-service e-commerce system under normal and attack workloads,
converts request traces into labeled invocation graphs with multimodal node
features, and evaluates a two-layer GCN against non-graph baselines under
random and trial-level splits.
"""

from .telemetry import (
    ATTACK_LABELS,
    CLASS_LABELS,
    LabelWindow,
    LogRecord,
    MetricSample,
    SERVICES,
    Span,
    TraceRecord,
    read_trial,
    serialize_records,
    windows_overlap,
)
from .simulate import ScenarioConfig, Topology, default_trial_plan, simulate_corpus, simulate_trial
from .textfeat import TfidfVocab, fit_vocab, tokenize, transform
from .graphs import (
    ModalityConfig,
    RequestGraph,
    assemble_dataset,
    attach_features,
    label_graph,
    trace_to_graph,
)
from .gcn import GcnModel, TrainConfig, init_model, normalize_adjacency, predict, train
from .baselines import FlatSample, ForestConfig, flatten, train_mlp, train_random_forest
from .evaluation import (
    EvalReport,
    ExperimentConfig,
    SplitSpec,
    compute_metrics,
    emit_report,
    project_logits_2d,
    run_experiment_matrix,
    split,
)

__version__ = "0.1.0"
