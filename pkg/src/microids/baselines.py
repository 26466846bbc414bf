"""Non-graph baselines on flattened request features.

``flatten`` lays each graph out as six fixed per-service feature slots (in
canonical service order, zeros for absent services) plus node and edge
counts, so a 25-dim node feature setting yields 6*25+2 = 152 flat features.

The Random Forest is scikit-learn's (the conventional strong-default
baseline: 100 trees, Gini, sqrt feature subsets, bootstrap); prediction uses
argmax of averaged per-tree class probabilities, which for fully grown trees
is majority vote with ties to the lowest class index. The MLP is implemented
here (one ReLU hidden layer, softmax cross-entropy, Adam) so its analytic
gradients can be checked against finite differences like the GCN's.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .gcn import AdamOptimizer, TrainingDiverged, _softmax
from .graphs import RequestGraph
from .telemetry import SERVICE_INDEX, SERVICES


@dataclass(frozen=True)
class FlatSample:
    features: np.ndarray  # width 6*d + 2
    label: str
    run_id: str


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_leaf: int = 1
    bootstrap: bool = True
    seed: int = 7

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")


def flatten(graph: RequestGraph) -> FlatSample:
    """Fixed-slot flattening: slot s holds service s's node feature row (or
    zeros), followed by [node count, undirected edge count]."""
    d = graph.features.shape[1]
    flat = np.zeros(len(SERVICES) * d + 2, dtype=np.float64)
    for i, service in enumerate(graph.nodes):
        slot = SERVICE_INDEX[service]
        flat[slot * d : (slot + 1) * d] = graph.features[i]
    flat[-2] = graph.n_nodes
    flat[-1] = graph.n_undirected_edges
    return FlatSample(features=flat, label=graph.label, run_id=graph.run_id)


def unflatten_slot(sample: FlatSample, service: str, d: int) -> np.ndarray:
    slot = SERVICE_INDEX[service]
    return sample.features[slot * d : (slot + 1) * d]


def gini_impurity(class_counts: Sequence[float]) -> float:
    """Gini impurity of a label multiset given per-class counts."""
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p * p).sum())


def weighted_split_impurity(left_counts: Sequence[float], right_counts: Sequence[float]) -> float:
    left = np.asarray(left_counts, dtype=np.float64)
    right = np.asarray(right_counts, dtype=np.float64)
    n = left.sum() + right.sum()
    if n == 0:
        return 0.0
    return float(
        left.sum() / n * gini_impurity(left) + right.sum() / n * gini_impurity(right)
    )


@dataclass
class ForestModel:
    clf: RandomForestClassifier
    classes: Tuple[int, ...]
    config: ForestConfig


def train_random_forest(
    x: np.ndarray, y: np.ndarray, config: ForestConfig = ForestConfig()
) -> Tuple[ForestModel, float]:
    """Fit the forest; returns (model, train wall-clock seconds)."""
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        warnings.warn("single-class training set: forest degenerates to a constant predictor")
    clf = RandomForestClassifier(
        n_estimators=config.n_trees,
        criterion="gini",
        max_depth=config.max_depth,
        min_samples_leaf=config.min_leaf,
        max_features="sqrt",
        bootstrap=config.bootstrap,
        random_state=config.seed,
        n_jobs=1,
    )
    t0 = time.perf_counter()
    clf.fit(x, y)
    seconds = time.perf_counter() - t0
    return ForestModel(clf=clf, classes=tuple(int(c) for c in clf.classes_), config=config), seconds


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def params(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


def mlp_forward(model: MlpModel, x: np.ndarray, standardize: bool = True) -> Tuple[np.ndarray, dict]:
    if standardize:
        x = (x - model.mean) / model.std
    z1 = x @ model.W1 + model.b1
    h1 = np.maximum(z1, 0.0)
    logits = h1 @ model.W2 + model.b2
    return logits, {"x": x, "z1": z1, "h1": h1}


def mlp_loss_and_grad(
    model: MlpModel, x: np.ndarray, y: np.ndarray, standardize: bool = True
) -> Tuple[float, Dict[str, np.ndarray]]:
    logits, cache = mlp_forward(model, x, standardize)
    probs = _softmax(logits)
    n = len(y)
    logp = np.log(np.clip(probs[np.arange(n), y], 1e-300, None))
    loss = float(-logp.mean())
    dlogits = probs
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads = {
        "W2": cache["h1"].T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dh1 = dlogits @ model.W2.T
    dz1 = dh1 * (cache["z1"] > 0)
    grads["W1"] = cache["x"].T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return loss, grads


def train_mlp(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    hidden: int = 64,
    epochs: int = 50,
    lr: float = 1e-3,
    batch_size: int = 64,
    seed: int = 7,
) -> Tuple[MlpModel, float]:
    """One-hidden-layer ReLU classifier on internally standardized inputs."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    d = x.shape[1]
    limit1 = np.sqrt(6.0 / (d + hidden))
    limit2 = np.sqrt(6.0 / (hidden + n_classes))
    model = MlpModel(
        W1=rng.uniform(-limit1, limit1, size=(d, hidden)),
        b1=np.zeros(hidden),
        W2=rng.uniform(-limit2, limit2, size=(hidden, n_classes)),
        b2=np.zeros(n_classes),
        mean=mean,
        std=std,
    )
    xs = (x - mean) / std
    params = model.params()
    opt = AdamOptimizer(params, lr)
    order = np.arange(len(y))
    t0 = time.perf_counter()
    for epoch in range(epochs):
        rng.shuffle(order)
        for lo in range(0, len(order), batch_size):
            batch = order[lo : lo + batch_size]
            loss, grads = mlp_loss_and_grad(model, xs[batch], y[batch], standardize=False)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite MLP loss at epoch {epoch}, offset {lo}")
            opt.step(params, grads)
    return model, time.perf_counter() - t0


def predict_baseline(model, x: np.ndarray) -> Tuple[np.ndarray, float]:
    """(predicted labels, mean per-sample latency in µs), single-threaded.

    Accepts a ForestModel or MlpModel. Empty input yields latency 0.
    """
    if len(x) == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    t0 = time.perf_counter()
    if isinstance(model, ForestModel):
        proba = model.clf.predict_proba(x)
        labels = np.asarray(model.classes)[proba.argmax(axis=1)]
    elif isinstance(model, MlpModel):
        logits, _ = mlp_forward(model, x)
        labels = logits.argmax(axis=1)
    else:
        raise TypeError(f"unknown baseline model {type(model).__name__}")
    elapsed_us = (time.perf_counter() - t0) * 1e6
    return labels.astype(np.int64), elapsed_us / len(x)
