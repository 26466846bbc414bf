"""Two-layer graph convolutional classifier with hand-derived gradients.

Forward pass per graph, with Ahat the self-loop-normalized adjacency:

    H1     = ReLU(Ahat @ X @ W1)
    H2     = ReLU(Ahat @ H1 @ W2)
    h_G    = mean over nodes of H2
    logits = head_W2.T-side MLP: ReLU(h_G @ head_W1 + head_b1) @ head_W2 + head_b2

Training is softmax cross-entropy (optionally class-weighted) with Adam over
shuffled mini-batches, processing one graph at a time within a batch (graphs
have at most six nodes, so adjacency is dense). Everything is float64 numpy
and deterministic for a fixed seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .graphs import RequestGraph
from .telemetry import CLASS_LABELS

N_CLASSES = len(CLASS_LABELS)
DEFAULT_HIDDEN = 32

PARAM_NAMES = ("W1", "W2", "head_W1", "head_b1", "head_W2", "head_b2")


@dataclass
class GcnModel:
    W1: np.ndarray
    W2: np.ndarray
    head_W1: np.ndarray
    head_b1: np.ndarray
    head_W2: np.ndarray
    head_b2: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.head_W2.shape[1]

    def params(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 7
    class_weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(input_dim: int, hidden: int = DEFAULT_HIDDEN, n_classes: int = N_CLASSES, seed: int = 7) -> GcnModel:
    rng = np.random.default_rng(seed)
    return GcnModel(
        W1=_glorot(rng, input_dim, hidden),
        W2=_glorot(rng, hidden, hidden),
        head_W1=_glorot(rng, hidden, hidden),
        head_b1=np.zeros(hidden),
        head_W2=_glorot(rng, hidden, n_classes),
        head_b2=np.zeros(n_classes),
    )


def normalize_adjacency(nodes, edges: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Ahat = D^{-1/2} (A + I) D^{-1/2} for a symmetric edge set without
    stored self-loops. Isolated nodes get degree 1 from the self-loop."""
    n = nodes if isinstance(nodes, int) else len(nodes)
    a = np.zeros((n, n), dtype=np.float64)
    for i, j in edges:
        a[i, j] = 1.0
    a += np.eye(n)
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def _forward_stack(model: GcnModel, a_hat: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, dict]:
    """Batched forward over a stack of same-size graphs.

    a_hat: (B, n, n), x: (B, n, d). Returns (logits (B, C), h_g (B, h), cache).
    """
    z1 = a_hat @ x @ model.W1
    h1 = np.maximum(z1, 0.0)
    z2 = a_hat @ h1 @ model.W2
    h2 = np.maximum(z2, 0.0)
    h_g = h2.mean(axis=1)
    zh = h_g @ model.head_W1 + model.head_b1
    hh = np.maximum(zh, 0.0)
    logits = hh @ model.head_W2 + model.head_b2
    cache = {"a_hat": a_hat, "x": x, "z1": z1, "h1": h1, "z2": z2, "h2": h2,
             "h_g": h_g, "zh": zh, "hh": hh}
    return logits, h_g, cache


def forward(model: GcnModel, graph: RequestGraph, a_hat: Optional[np.ndarray] = None):
    """Forward pass for one graph: (logits, pooled embedding, caches)."""
    x = graph.features
    if x.shape[1] != model.input_dim:
        raise ValueError(f"feature width {x.shape[1]} != model input dim {model.input_dim}")
    if a_hat is None:
        a_hat = normalize_adjacency(graph.n_nodes, graph.edges)
    logits, h_g, cache = _forward_stack(model, a_hat[None], x[None])
    return logits[0], h_g[0], cache


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _backward_stack(model: GcnModel, cache: dict, dlogits: np.ndarray) -> Dict[str, np.ndarray]:
    a_hat, x = cache["a_hat"], cache["x"]
    n = x.shape[1]
    grads: Dict[str, np.ndarray] = {}
    grads["head_W2"] = cache["hh"].T @ dlogits
    grads["head_b2"] = dlogits.sum(axis=0)
    dhh = dlogits @ model.head_W2.T
    dzh = dhh * (cache["zh"] > 0)
    grads["head_W1"] = cache["h_g"].T @ dzh
    grads["head_b1"] = dzh.sum(axis=0)
    dhg = dzh @ model.head_W1.T
    dh2 = np.repeat(dhg[:, None, :], n, axis=1) / n
    dz2 = dh2 * (cache["z2"] > 0)
    m2 = a_hat @ cache["h1"]  # (B, n, h)
    grads["W2"] = np.einsum("bnh,bnk->hk", m2, dz2)
    dh1 = a_hat @ dz2 @ model.W2.T  # a_hat symmetric
    dz1 = dh1 * (cache["z1"] > 0)
    m1 = a_hat @ x
    grads["W1"] = np.einsum("bnd,bnk->dk", m1, dz1)
    return grads


def loss_and_grad(
    model: GcnModel,
    graphs: Sequence[RequestGraph],
    labels: Sequence[int],
    class_weights: Optional[np.ndarray] = None,
    a_hats: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean (weighted) softmax cross-entropy over a batch, with gradients for
    all six parameter tensors. Weighted mean follows the usual convention:
    sum(w_y * ce) / sum(w_y)."""
    if not graphs:
        raise ValueError("empty batch")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= model.n_classes:
        raise ValueError("label outside class range")
    if a_hats is None:
        a_hats = [normalize_adjacency(g.n_nodes, g.edges) for g in graphs]
    feats = [g.features for g in graphs]

    if class_weights is None:
        sample_w = np.ones(len(graphs))
    else:
        class_weights = np.asarray(class_weights, dtype=np.float64)
        sample_w = class_weights[labels]
    w_total = sample_w.sum()

    total_loss = 0.0
    grads = {name: np.zeros_like(p) for name, p in model.params().items()}
    for i in range(len(graphs)):
        y = labels[i]
        w = sample_w[i]
        logits, _, cache = _forward_stack(model, a_hats[i][None], feats[i][None])
        probs = _softmax(logits)
        logp = np.log(max(probs[0, y], 1e-300))
        total_loss += float(-w * logp)
        dlogits = probs.copy()
        dlogits[0, y] -= 1.0
        dlogits *= w / w_total
        for name, g in _backward_stack(model, cache, dlogits).items():
            grads[name] += g
    return total_loss / w_total, grads


class AdamOptimizer:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8) over named tensors."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            p -= self.lr * (self.m[name] / b1t) / (np.sqrt(self.v[name] / b2t) + self.eps)


class TrainingDiverged(RuntimeError):
    pass


def inverse_frequency_weights(labels: Sequence[int], n_classes: int = N_CLASSES) -> np.ndarray:
    counts = np.bincount(np.asarray(labels), minlength=n_classes).astype(np.float64)
    weights = np.where(counts > 0, len(labels) / (n_classes * np.maximum(counts, 1)), 0.0)
    return weights


def train(
    model: GcnModel,
    graphs: Sequence[RequestGraph],
    labels: Sequence[int],
    config: TrainConfig,
) -> Tuple[GcnModel, List[float], float]:
    """Train in place; returns (model, per-epoch mean loss, wall-clock seconds)."""
    rng = np.random.default_rng(config.seed)
    a_hats = [normalize_adjacency(g.n_nodes, g.edges) for g in graphs]
    labels = np.asarray(labels, dtype=np.int64)
    weights = np.asarray(config.class_weights) if config.class_weights is not None else None
    params = model.params()
    opt = AdamOptimizer(params, config.learning_rate)
    losses: List[float] = []
    t_start = time.perf_counter()
    order = np.arange(len(graphs))
    for epoch in range(config.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            loss, grads = loss_and_grad(
                model,
                [graphs[i] for i in batch],
                labels[batch],
                class_weights=weights,
                a_hats=[a_hats[i] for i in batch],
            )
            if not np.isfinite(loss):
                norms = {k: float(np.linalg.norm(v)) for k, v in params.items()}
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}; param norms {norms}"
                )
            opt.step(params, grads)
            epoch_loss += loss
            n_batches += 1
        losses.append(epoch_loss / max(n_batches, 1))
    return model, losses, time.perf_counter() - t_start


def predict(
    model: GcnModel, graphs: Sequence[RequestGraph]
) -> Tuple[np.ndarray, np.ndarray, float]:
    """(argmax labels, logits matrix, mean per-graph latency in µs).

    Ties break to the lowest class index. Latency is total single-threaded
    wall-clock divided by graph count.
    """
    if not graphs:
        return np.zeros(0, dtype=np.int64), np.zeros((0, model.n_classes)), 0.0
    logits = np.zeros((len(graphs), model.n_classes))
    t_start = time.perf_counter()
    for i, g in enumerate(graphs):
        logits[i], _, _ = forward(model, g)
    elapsed_us = (time.perf_counter() - t_start) * 1e6
    return logits.argmax(axis=1), logits, elapsed_us / len(graphs)


# ---------------------------------------------------------------------------
# checkpointing


def save_checkpoint(model: GcnModel, config: TrainConfig, path) -> None:
    import json

    obj = {name: p.tolist() for name, p in model.params().items()}
    obj["config"] = {
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "seed": config.seed,
        "class_weights": list(config.class_weights) if config.class_weights else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)


def load_checkpoint(path) -> Tuple[GcnModel, TrainConfig]:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    model = GcnModel(**{name: np.asarray(obj[name], dtype=np.float64) for name in PARAM_NAMES})
    cfg = obj["config"]
    config = TrainConfig(
        epochs=cfg["epochs"],
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        class_weights=tuple(cfg["class_weights"]) if cfg["class_weights"] else None,
    )
    return model, config
