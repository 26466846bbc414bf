"""Log tokenization and the 16-dimensional TF-IDF node features.

A "document" is the concatenation of all log messages attributed to one
(trace, service) pair, so log features are per-node. The vocabulary is fitted
on training documents only; the graph assembly pipeline enforces that.

The tokenizer and idf formula are deliberately simple stand-ins: lowercase,
split on non-alphanumerics, smoothed idf. Absolute feature values are not
comparable across differently-tokenized corpora, only downstream behavior is.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

_SPLIT_RE = re.compile(r"[^a-z0-9]+")
_DIGITS_RE = re.compile(r"^[0-9]+$")

DEFAULT_LOG_DIM = 16


def tokenize(message: str) -> List[str]:
    """Lowercase, split on non-alphanumerics, drop tokens shorter than 2 chars,
    replace pure-digit tokens with the placeholder "num"."""
    tokens = []
    for raw in _SPLIT_RE.split(message.lower()):
        if len(raw) < 2:
            continue
        tokens.append("num" if _DIGITS_RE.match(raw) else raw)
    return tokens


@dataclass(frozen=True)
class TfidfVocab:
    tokens: Tuple[str, ...]
    doc_freq: Dict[str, int]
    n_docs: int
    truncated: bool = False  # True when fewer distinct tokens than log_dim existed

    @property
    def dim(self) -> int:
        return len(self.tokens)

    def idf(self, token: str) -> float:
        return float(np.log((1.0 + self.n_docs) / (1.0 + self.doc_freq[token])) + 1.0)


def fit_vocab(documents: Sequence[Sequence[str]], log_dim: int = DEFAULT_LOG_DIM) -> TfidfVocab:
    """Keep the ``log_dim`` tokens with highest document frequency.

    Ties break lexicographically ascending. If fewer than ``log_dim`` distinct
    tokens exist, the vocabulary is shorter and flagged ``truncated``.
    """
    if not documents:
        raise ValueError("fit_vocab requires at least one document")
    if log_dim < 1:
        raise ValueError("log_dim must be positive")
    df: Dict[str, int] = {}
    for doc in documents:
        for token in set(doc):
            df[token] = df.get(token, 0) + 1
    ranked = sorted(df, key=lambda t: (-df[t], t))
    kept = tuple(ranked[:log_dim])
    return TfidfVocab(
        tokens=kept,
        doc_freq={t: df[t] for t in kept},
        n_docs=len(documents),
        truncated=len(kept) < log_dim,
    )


def transform(document: Sequence[str], vocab: TfidfVocab) -> np.ndarray:
    """TF-IDF vector for one document: tf * idf, L2-normalized.

    tf is the raw in-document count; idf(t) = ln((1+n_docs)/(1+df[t])) + 1.
    A document sharing no tokens with the vocabulary maps to the zero vector.
    """
    vec = np.zeros(vocab.dim, dtype=np.float64)
    if not document:
        return vec
    counts: Dict[str, int] = {}
    for token in document:
        counts[token] = counts.get(token, 0) + 1
    for i, token in enumerate(vocab.tokens):
        tf = counts.get(token, 0)
        if tf:
            vec[i] = tf * vocab.idf(token)
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def vocab_to_json(vocab: TfidfVocab) -> dict:
    return {
        "tokens": list(vocab.tokens),
        "doc_freq": [vocab.doc_freq[t] for t in vocab.tokens],
        "n_docs": vocab.n_docs,
        "truncated": vocab.truncated,
    }


def vocab_from_json(obj: dict) -> TfidfVocab:
    tokens = tuple(obj["tokens"])
    return TfidfVocab(
        tokens=tokens,
        doc_freq=dict(zip(tokens, obj["doc_freq"])),
        n_docs=int(obj["n_docs"]),
        truncated=bool(obj.get("truncated", False)),
    )


def save_vocab(vocab: TfidfVocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(vocab_to_json(vocab), fh, indent=2)


def load_vocab(path) -> TfidfVocab:
    with open(path, "r", encoding="utf-8") as fh:
        return vocab_from_json(json.load(fh))
