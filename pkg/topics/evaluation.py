"""
Scoring a trained model: vote accuracy, topical words, NPMI coherence and the
code/noise disentanglement check, collected into an ``EvalReport``.
"""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import BowDataset, Vocabulary
from .exceptions import EvaluationError
from .tigan import TiganModel, TopicClassifier, generate_bow, sample_noise_batch, topic_classifier_forward

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
NPMI_EPSILON = 1e-12


@dataclass
class ClusterAssignment:
    topics: np.ndarray
    probabilities: np.ndarray
    num_topics: int

    def __post_init__(self):
        self.topics = np.asarray(self.topics, dtype=np.int64)
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if self.topics.size and (self.topics.min() < 0 or self.topics.max() >= self.num_topics):
            raise EvaluationError("topic ids out of range")

    def __len__(self):
        return self.topics.shape[0]


@dataclass
class TopicWordTable:
    """Per-topic ranked words; ``importance`` is the full K x V score matrix when known."""

    words: list[list[str]]
    indices: list[list[int]]
    scores: list[list[float]]
    importance: np.ndarray | None = None

    def __len__(self):
        return len(self.words)

    @classmethod
    def from_words(cls, word_lists: Sequence[Sequence[str]], vocab: Vocabulary) -> "TopicWordTable":
        """A table over fixed word sets; words missing from ``vocab`` get index -1."""
        words = [list(ws) for ws in word_lists]
        indices = [[vocab.index.get(w, -1) for w in ws] for ws in words]
        return cls(words=words, indices=indices, scores=[[0.0] * len(ws) for ws in words])


@dataclass
class CoherenceScore:
    score: float
    per_topic: list[float]
    skipped_pairs: int = 0


@dataclass
class DisentanglementStats:
    cross_code_mean: float
    cross_code_std: float
    within_code_mean: float
    within_code_std: float
    top_m: int
    noise_samples: int


@dataclass
class EvalReport:
    kind: str
    num_documents: int
    num_topics: int
    accuracy: float | None = None
    topic_to_label: dict[int, int] = field(default_factory=dict)
    label_names: list[str] | None = None
    topical_words: list[list[str]] = field(default_factory=list)
    coherence: float | None = None
    coherence_per_topic: list[float] = field(default_factory=list)
    skipped_pairs: int = 0
    planted_precision: float | None = None
    planted_precision_per_topic: list[float] = field(default_factory=list)
    disentanglement: DisentanglementStats | None = None
    config: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def __post_init__(self):
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise EvaluationError(f"accuracy {self.accuracy} outside [0, 1]")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["topic_to_label"] = {str(k): int(v) for k, v in self.topic_to_label.items()}
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalReport":
        data = dict(data)
        version = data.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise EvaluationError(f"unsupported report schema version {version!r}")
        data["topic_to_label"] = {int(k): int(v) for k, v in data.get("topic_to_label", {}).items()}
        if data.get("disentanglement") is not None:
            data["disentanglement"] = DisentanglementStats(**data["disentanglement"])
        return cls(**data)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        logger.info("wrote evaluation report to %s", path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, ValueError, TypeError) as exc:
            raise EvaluationError(f"{path}: cannot read report: {exc}") from exc


# ---------------------------------------------------------------------------
# classification


def infer_topics(model: TiganModel, dataset: BowDataset | np.ndarray) -> ClusterAssignment:
    rows = dataset.rows if isinstance(dataset, BowDataset) else np.asarray(dataset, dtype=np.float64)
    probs = topic_classifier_forward(model, rows)
    # np.argmax returns the first maximum, so exact ties go to the lower topic id
    topics = np.argmax(probs, axis=1)
    return ClusterAssignment(topics, probs[np.arange(len(topics)), topics], model.config.num_topics)


def vote_accuracy(assignment: ClusterAssignment, labels) -> tuple[dict[int, int], float]:
    """Map each topic to its members' plurality gold label and score the mapping."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != assignment.topics.shape:
        raise EvaluationError("one gold label per assigned document is required")
    if labels.size == 0:
        raise EvaluationError("cannot score an empty assignment")
    if labels.min() < 0:
        raise EvaluationError("gold labels must be non-negative")
    num_labels = int(labels.max()) + 1
    mapping: dict[int, int] = {}
    correct = 0
    for topic in range(assignment.num_topics):
        members = labels[assignment.topics == topic]
        if members.size == 0:
            mapping[topic] = -1
            continue
        counts = np.bincount(members, minlength=num_labels)
        mapping[topic] = int(np.argmax(counts))
        correct += int(counts[mapping[topic]])
    return mapping, correct / labels.size


# ---------------------------------------------------------------------------
# topical words


def importance_matrix(classifier: TopicClassifier) -> np.ndarray:
    """K x V word importance: M W^T for embedding classifiers, the weight itself for the linear one."""
    weight = classifier.linear_weight
    if classifier.variant == "linear":
        return weight.T.copy()
    return weight.T @ classifier.embedding_matrix.T


def extract_topical_words(classifier: TopicClassifier, vocab: Vocabulary, top_n: int) -> TopicWordTable:
    scores = importance_matrix(classifier)
    if scores.shape[1] != len(vocab):
        raise EvaluationError(f"classifier covers {scores.shape[1]} words, vocabulary has {len(vocab)}")
    if not 1 <= top_n <= len(vocab):
        raise EvaluationError(f"top_n must lie in [1, {len(vocab)}], got {top_n}")
    words, indices, ranked = [], [], []
    for row in scores:
        order = np.argsort(-row, kind="stable")[:top_n]
        indices.append([int(i) for i in order])
        words.append([vocab.words[i] for i in order])
        ranked.append([float(row[i]) for i in order])
    return TopicWordTable(words=words, indices=indices, scores=ranked, importance=scores)


def topical_word_precision(table: TopicWordTable, planted_sets: Sequence[Sequence[str]], top_n: int) -> list[float]:
    """Per topic, the share of its top words inside the best-matching planted set."""
    sets = [set(s) for s in planted_sets]
    if not sets:
        raise EvaluationError("no planted word sets given")
    precision = []
    for words in table.words:
        top = words[:top_n]
        if not top:
            raise EvaluationError("topic has no words")
        precision.append(max(len(s.intersection(top)) for s in sets) / len(top))
    return precision


# ---------------------------------------------------------------------------
# coherence


def npmi(co_frequency: float, freq_i: float, freq_j: float) -> float:
    """NPMI from document frequencies; p(i,j) carries the additive epsilon."""
    joint = co_frequency + NPMI_EPSILON
    if joint >= 1.0:
        return 1.0
    value = np.log(joint / (freq_i * freq_j)) / -np.log(joint)
    return float(np.clip(value, -1.0, 1.0))


def npmi_coherence(table: TopicWordTable, dataset: BowDataset, top_n: int) -> CoherenceScore:
    """Mean NPMI over word pairs of each topic's top words, then over topics."""
    if top_n < 2:
        raise EvaluationError("coherence needs at least 2 words per topic")
    presence = dataset.rows > 0
    n_docs = presence.shape[0]
    if n_docs == 0:
        raise EvaluationError("coherence needs a non-empty dataset")
    doc_freq = presence.sum(axis=0) / n_docs

    per_topic, skipped = [], 0
    for ids in table.indices:
        scores = []
        for i, j in itertools.combinations(ids[:top_n], 2):
            if i < 0 or j < 0 or doc_freq[i] == 0 or doc_freq[j] == 0:
                skipped += 1
                continue
            co = np.count_nonzero(presence[:, i] & presence[:, j]) / n_docs
            scores.append(npmi(co, doc_freq[i], doc_freq[j]))
        if scores:
            per_topic.append(float(np.mean(scores)))
    if skipped:
        logger.info("npmi: skipped %d word pair(s) absent from the dataset", skipped)
    if not per_topic:
        raise EvaluationError("no scorable word pairs")
    return CoherenceScore(score=float(np.mean(per_topic)), per_topic=per_topic, skipped_pairs=skipped)


# ---------------------------------------------------------------------------
# disentanglement


def _jaccard(a: set, b: set) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def _mean_pairwise_jaccard(sets: Sequence[set]) -> float:
    return float(np.mean([_jaccard(a, b) for a, b in itertools.combinations(sets, 2)]))


def _top_words(probs: np.ndarray, top_m: int) -> list[set]:
    return [set(np.argsort(-row, kind="stable")[:top_m].tolist()) for row in probs]


def disentanglement_report(
    model: TiganModel, num_noise: int, top_m: int, rng: np.random.Generator
) -> DisentanglementStats:
    """Top-word overlap across codes at fixed noise, and across noise at a fixed code."""
    k, z_dim = model.config.num_topics, model.config.z_dim
    if num_noise < 2:
        raise EvaluationError("the disentanglement check needs at least 2 noise samples")
    if not 1 <= top_m <= model.vocab_size:
        raise EvaluationError(f"top_m must lie in [1, {model.vocab_size}]")
    noise = sample_noise_batch(z_dim, num_noise, rng)
    codes = np.eye(k)

    # one generation per (noise, code) pair, noise-major
    probs = generate_bow(model, np.tile(codes, (num_noise, 1)), np.repeat(noise, k, axis=0))
    tops = _top_words(probs, top_m)
    cross = [_mean_pairwise_jaccard(tops[r * k : (r + 1) * k]) for r in range(num_noise)]
    within = [_mean_pairwise_jaccard(tops[c::k]) for c in range(k)]
    return DisentanglementStats(
        cross_code_mean=float(np.mean(cross)),
        cross_code_std=float(np.std(cross)),
        within_code_mean=float(np.mean(within)),
        within_code_std=float(np.std(within)),
        top_m=top_m,
        noise_samples=num_noise,
    )


def evaluate_model(
    model: TiganModel,
    dataset: BowDataset,
    vocab: Vocabulary,
    top_n: int = 10,
    planted: Sequence[Sequence[str]] | None = None,
    noise_samples: int = 10,
    top_m: int = 50,
    seed: int = 0,
    config: Mapping | None = None,
) -> EvalReport:
    """Run every scorer that applies to ``dataset`` and collect the results."""
    assignment = infer_topics(model, dataset)
    report = EvalReport(
        kind="tigan",
        num_documents=len(dataset),
        num_topics=model.config.num_topics,
        label_names=dataset.label_names,
        config=dict(config) if config is not None else {"model": model.config.to_dict()},
    )
    if dataset.labels is not None:
        report.topic_to_label, report.accuracy = vote_accuracy(assignment, dataset.labels)

    table = extract_topical_words(model.classifier, vocab, top_n)
    report.topical_words = table.words
    if top_n >= 2:
        coherence = npmi_coherence(table, dataset, top_n)
        report.coherence = coherence.score
        report.coherence_per_topic = coherence.per_topic
        report.skipped_pairs = coherence.skipped_pairs
    if planted:
        report.planted_precision_per_topic = topical_word_precision(table, planted, top_n)
        report.planted_precision = float(np.mean(report.planted_precision_per_topic))
    if noise_samples >= 2:
        rng = np.random.default_rng([seed, 2])
        report.disentanglement = disentanglement_report(model, noise_samples, min(top_m, len(vocab)), rng)
    return report
