"""
Word embeddings consumed by the topic classifier.

``train_sgns`` is a small skip-gram trainer with negative sampling over the
preprocessed corpus; ``load_embeddings``/``save_embeddings`` speak the usual
word-vector text format (optional ``V d`` header, then ``word v1 ... vd``).
The SIF encoder turns a bag-of-words row into the weighted average
sum_w [a / (a + p(w))] * emb_w / (number of present words).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Graph, Node
from .corpus import Vocabulary
from .exceptions import CorpusError, EmbeddingFormatError

logger = logging.getLogger(__name__)

DEFAULT_SIF_A = 1e-3


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray
    missing_words: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise EmbeddingFormatError("embedding matrix must be 2-D")
        if not np.all(np.isfinite(self.vectors)):
            raise EmbeddingFormatError("embedding matrix has non-finite entries")

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class SgnsConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    seed: int = 0
    batch_size: int = 256

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.negatives < 1 or self.batch_size < 1:
            raise ValueError("dim, window, negatives and batch_size must be positive")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("epochs must be >= 0 and lr > 0")


@dataclass
class SifParams:
    """SIF smoothing constant, stored as log(a) so that a = exp(a_raw) stays positive."""

    a_raw: float = math.log(DEFAULT_SIF_A)

    @property
    def a(self) -> float:
        return math.exp(self.a_raw)


def _initial_vectors(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    return (rng.random((rows, dim)) - 0.5) / dim


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


def _skipgram_pairs(ids: Sequence[np.ndarray], window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    for seq in ids:
        n = len(seq)
        for offset in range(1, window + 1):
            if offset >= n:
                break
            centers += [seq[:-offset], seq[offset:]]
            contexts += [seq[offset:], seq[:-offset]]
    if not centers:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def train_sgns(streams: Sequence[Sequence[str]], vocab: Vocabulary, config: SgnsConfig = SgnsConfig()) -> EmbeddingMatrix:
    """Skip-gram with negative sampling; noise distribution is unigram^(3/4)."""
    if not streams or not any(len(s) for s in streams):
        raise CorpusError("cannot train embeddings on an empty corpus")
    ids = []
    for seq in streams:
        try:
            ids.append(np.array([vocab.index[tok] for tok in seq], dtype=np.int64))
        except KeyError as exc:
            raise CorpusError(f"token {exc.args[0]!r} is not in the vocabulary") from exc

    rng = np.random.default_rng(config.seed)
    size, dim = len(vocab), config.dim
    w_in = _initial_vectors(rng, size, dim)
    if config.epochs == 0:
        return EmbeddingMatrix(w_in)
    w_out = np.zeros((size, dim))

    noise = vocab.counts.astype(np.float64) ** 0.75
    noise /= noise.sum()
    centers, contexts = _skipgram_pairs(ids, config.window)
    pairs = len(centers)
    if pairs == 0:
        logger.warning("no skip-gram pairs; every document has a single token")
        return EmbeddingMatrix(w_in)

    batches = math.ceil(pairs / config.batch_size)
    total_steps = config.epochs * batches
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(pairs)
        loss_sum = 0.0
        for b in range(batches):
            lr = config.lr * max(1.0 - step / total_steps, 1e-4)
            step += 1
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            c, o = centers[idx], contexts[idx]
            neg = rng.choice(size, size=(len(idx), config.negatives), p=noise)

            vc, uo, un = w_in[c], w_out[o], w_out[neg]
            pos = _sigmoid(np.sum(vc * uo, axis=1))
            negs = _sigmoid(np.einsum("bkd,bd->bk", un, vc))
            loss_sum += float(-np.log(pos + 1e-12).sum() - np.log(1.0 - negs + 1e-12).sum())

            g_pos = pos - 1.0
            grad_vc = g_pos[:, None] * uo + np.einsum("bk,bkd->bd", negs, un)
            grad_uo = g_pos[:, None] * vc
            grad_un = negs[:, :, None] * vc[:, None, :]
            np.add.at(w_in, c, -lr * grad_vc)
            np.add.at(w_out, o, -lr * grad_uo)
            np.add.at(w_out, neg.reshape(-1), -lr * grad_un.reshape(-1, dim))
        logger.info("sgns epoch %d/%d: mean loss %.4f", epoch + 1, config.epochs, loss_sum / pairs)
    return EmbeddingMatrix(w_in)


def load_embeddings(path: str | Path, vocab: Vocabulary, seed: int = 0) -> EmbeddingMatrix:
    """Read word vectors for ``vocab``; words absent from the file get seeded random rows."""
    found: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if number == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            if len(parts) < 2:
                raise EmbeddingFormatError(f"{path}:{number}: expected a word followed by floats")
            word, fields = parts[0], parts[1:]
            try:
                vector = np.array([float(x) for x in fields])
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}:{number}: {exc}") from exc
            if dim is None:
                dim = len(vector)
            elif len(vector) != dim:
                raise EmbeddingFormatError(f"{path}:{number}: dimension {len(vector)} disagrees with {dim}")
            if not np.all(np.isfinite(vector)):
                raise EmbeddingFormatError(f"{path}:{number}: non-finite value")
            if word in vocab and word not in found:
                found[word] = vector
    if dim is None:
        raise EmbeddingFormatError(f"{path}: no vectors found")

    fallback = _initial_vectors(np.random.default_rng(seed), len(vocab), dim)
    missing = [w for w in vocab.words if w not in found]
    vectors = np.vstack([found[w] if w in found else fallback[i] for i, w in enumerate(vocab.words)])
    if missing:
        logger.warning("%d vocabulary word(s) missing from %s; using random vectors", len(missing), path)
    return EmbeddingMatrix(vectors, missing_words=missing)


def save_embeddings(path: str | Path, embeddings: EmbeddingMatrix, vocab: Vocabulary) -> None:
    if len(embeddings) != len(vocab):
        raise EmbeddingFormatError("embedding rows do not match the vocabulary")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(vocab)} {embeddings.dim}\n")
        for word, row in zip(vocab.words, embeddings.vectors):
            fh.write(word + " " + " ".join(repr(float(x)) for x in row) + "\n")


# ---------------------------------------------------------------------------
# SIF


def sif_weights(a: float, frequencies: np.ndarray) -> np.ndarray:
    return a / (a + np.asarray(frequencies, dtype=np.float64))


def sif_document_vector(bow_row, embeddings: EmbeddingMatrix, sif: SifParams, frequencies) -> np.ndarray:
    row = np.asarray(bow_row, dtype=np.float64)
    present = np.flatnonzero(row)
    if present.size == 0:
        raise CorpusError("cannot embed an empty bag-of-words row")
    weights = sif_weights(sif.a, np.asarray(frequencies)[present])
    return (weights[:, None] * embeddings.vectors[present]).sum(axis=0) / present.size


def sif_document_nodes(graph: Graph, x: Node, embed: Node, a_raw: Node, frequencies: Node) -> Node:
    """Graph form of the SIF average for a batch ``x`` (rows may be soft, as for generated bags)."""
    a = graph.exp(a_raw)
    weights = graph.div(a, graph.add(a, frequencies))
    total = graph.matmul(graph.mul(x, weights), embed)
    return graph.div(total, graph.sum(x, axis=1, keepdims=True))
