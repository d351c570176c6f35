"""Embedding-average document vectors clustered with k-means, scored by vote accuracy."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import BowDataset
from .embeddings import EmbeddingMatrix, SifParams, sif_weights
from .evaluation import ClusterAssignment, EvalReport, vote_accuracy
from .exceptions import ConfigError, CorpusError, EvaluationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KmeansConfig:
    num_topics: int = 4
    restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    seed: int = 0
    use_sif: bool = False

    def __post_init__(self):
        if self.num_topics < 1 or self.restarts < 1 or self.max_iter < 1:
            raise ConfigError("num_topics, restarts and max_iter must be positive")
        if self.tol < 0:
            raise ConfigError("tol must be non-negative")


@dataclass
class KmeansResult:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    iterations: int


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(0, n))]
    closest = _squared_distances(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            index = int(rng.choice(n, p=closest / total))
        else:
            index = int(rng.integers(0, n))
        chosen.append(index)
        closest = np.minimum(closest, _squared_distances(points, points[index : index + 1])[:, 0])
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int, tol: float) -> KmeansResult:
    previous = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        distances = _squared_distances(points, centroids)
        assignments = np.argmin(distances, axis=1)
        nearest = distances[np.arange(len(points)), assignments]
        inertia = float(nearest.sum())
        if inertia > previous + 1e-9 * max(1.0, abs(previous)):
            raise EvaluationError(f"k-means inertia increased from {previous} to {inertia}")
        previous = inertia

        updated = centroids.copy()
        empty = []
        for k in range(len(centroids)):
            members = points[assignments == k]
            if len(members):
                updated[k] = members.mean(axis=0)
            else:
                empty.append(k)
        # empty clusters take the points currently farthest from their centroid
        for k, far in zip(empty, np.argsort(-nearest, kind="stable")):
            updated[k] = points[far]
        shift = float(np.max(np.linalg.norm(updated - centroids, axis=1)))
        centroids = updated
        if shift < tol and not empty:
            break

    distances = _squared_distances(points, centroids)
    assignments = np.argmin(distances, axis=1)
    inertia = float(distances[np.arange(len(points)), assignments].sum())
    return KmeansResult(centroids=centroids, assignments=assignments, inertia=inertia, iterations=iterations)


def kmeans(
    points,
    num_clusters: int,
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 300,
    tol: float = 1e-6,
) -> KmeansResult:
    """k-means++ seeded Lloyd iterations; the lowest-inertia restart wins (earliest on ties)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise EvaluationError("k-means needs a 2-D array of points")
    if num_clusters < 1:
        raise EvaluationError("need at least one cluster")
    if points.shape[0] < num_clusters:
        raise EvaluationError(f"cannot form {num_clusters} clusters from {points.shape[0]} points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        result = _lloyd(points, _plus_plus(points, num_clusters, rng), max_iter, tol)
        if best is None or result.inertia < best.inertia:
            best = result
    return best


def document_vectors(
    dataset: BowDataset,
    embeddings: EmbeddingMatrix,
    sif: SifParams | None = None,
    frequencies=None,
) -> np.ndarray:
    """Average the embeddings of the words present in each document, SIF-weighted when ``sif`` is set."""
    rows = dataset.rows
    if rows.shape[1] != len(embeddings):
        raise CorpusError(f"dataset width {rows.shape[1]} does not match {len(embeddings)} embedding rows")
    lengths = rows.sum(axis=1, keepdims=True)
    if np.any(lengths == 0):
        raise CorpusError("cannot average embeddings for an empty document")
    if sif is not None:
        if frequencies is None:
            raise CorpusError("SIF averaging needs word frequencies")
        rows = rows * sif_weights(sif.a, frequencies)
    return rows @ embeddings.vectors / lengths


def embedding_average_baseline(
    dataset: BowDataset,
    embeddings: EmbeddingMatrix,
    config: KmeansConfig = KmeansConfig(),
    sif: SifParams | None = None,
    frequencies=None,
) -> EvalReport:
    if dataset.labels is None:
        raise EvaluationError("the baseline is scored against gold labels; the dataset has none")
    vectors = document_vectors(dataset, embeddings, sif, frequencies)
    result = kmeans(vectors, config.num_topics, config.seed, config.restarts, config.max_iter, config.tol)
    assignment = ClusterAssignment(result.assignments, np.ones(len(dataset)), config.num_topics)
    mapping, accuracy = vote_accuracy(assignment, dataset.labels)
    logger.info("baseline k-means: inertia %.4f after %d iterations, accuracy %.4f", result.inertia, result.iterations, accuracy)
    return EvalReport(
        kind="baseline",
        num_documents=len(dataset),
        num_topics=config.num_topics,
        accuracy=accuracy,
        topic_to_label=mapping,
        label_names=dataset.label_names,
        config={"baseline": asdict(config)},
    )
