"""
Corpus ingestion: tokenizing, vocabulary building, binary bag-of-words rows,
and the synthetic planted-topic generator used as desk-scale ground truth.

Corpus files hold one document per line, UTF-8, optionally prefixed by a gold
label and a tab (``label<TAB>text``).
"""
from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import CorpusError

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent / "data"
BUILTIN_STOPWORDS = {"english": DATA_DIR / "stopwords_en.txt"}
_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class PreprocessConfig:
    vocab_cap: int = 3000
    stopwords: str = "english"
    lowercase: bool = True
    min_token_length: int = 2

    def __post_init__(self):
        if self.vocab_cap < 2:
            raise CorpusError("vocab_cap must be at least 2")
        if self.min_token_length < 1:
            raise CorpusError("min_token_length must be at least 1")


@dataclass(frozen=True)
class RawDocument:
    text: str
    label: str | None = None


@dataclass
class Vocabulary:
    words: list[str]
    counts: np.ndarray
    total_tokens: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise CorpusError("vocabulary words must be unique")

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.index

    @property
    def frequencies(self) -> np.ndarray:
        """p(w): count of the word over all kept tokens."""
        return self.counts / float(self.total_tokens)


@dataclass
class BowDataset:
    rows: np.ndarray
    labels: np.ndarray | None = None
    label_names: list[str] | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise CorpusError("bag-of-words rows must form a 2-D matrix")
        if np.any((self.rows != 0) & (self.rows != 1)):
            raise CorpusError("bag-of-words entries must be 0 or 1")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.rows.shape[0],):
                raise CorpusError("one label per document is required")
            if self.label_names is None:
                self.label_names = [str(i) for i in range(int(self.labels.max()) + 1)]
            if self.labels.min() < 0 or self.labels.max() >= len(self.label_names):
                raise CorpusError("labels out of range")

    def __len__(self):
        return self.rows.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.rows.shape[1]

    @property
    def num_labels(self) -> int | None:
        return None if self.label_names is None else len(self.label_names)

    def subset(self, indices) -> "BowDataset":
        return BowDataset(
            rows=self.rows[indices],
            labels=None if self.labels is None else self.labels[indices],
            label_names=self.label_names,
        )


# ---------------------------------------------------------------------------
# reading


def read_corpus(path: str | Path) -> list[RawDocument]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" in line:
                label, text = line.split("\t", 1)
                docs.append(RawDocument(text=text, label=label.strip()))
            else:
                docs.append(RawDocument(text=line))
    return docs


def write_corpus(path: str | Path, docs: Iterable[RawDocument]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(f"{doc.label}\t{doc.text}\n" if doc.label is not None else f"{doc.text}\n")


def load_stopwords(source: str | Path) -> frozenset[str]:
    path = BUILTIN_STOPWORDS.get(str(source), Path(source))
    try:
        with open(path, encoding="utf-8") as fh:
            words = {line.strip().lower() for line in fh if line.strip() and not line.startswith("#")}
    except OSError as exc:
        raise CorpusError(f"cannot read stopword list {path}: {exc}") from exc
    if not words:
        raise CorpusError(f"stopword list {path} is empty")
    return frozenset(words)


def tokenize(text: str, config: PreprocessConfig, stopwords: frozenset[str] = frozenset()) -> list[str]:
    if config.lowercase:
        text = text.lower()
    return [
        tok
        for tok in _TOKEN.findall(text)
        if len(tok) >= config.min_token_length and tok.lower() not in stopwords
    ]


# ---------------------------------------------------------------------------
# vocabulary and bag-of-words


def build_vocabulary(token_lists: Sequence[Sequence[str]], vocab_cap: int) -> Vocabulary:
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    total = 0
    for tokens in token_lists:
        for tok in tokens:
            if tok not in counts:
                counts[tok] = 0
                first_seen[tok] = len(first_seen)
            counts[tok] += 1
            total += 1
    ranked = sorted(counts, key=lambda w: (-counts[w], first_seen[w]))[:vocab_cap]
    return Vocabulary(words=ranked, counts=np.array([counts[w] for w in ranked]), total_tokens=total)


def bow_vectorize(tokens: Iterable[str], vocab: Vocabulary) -> np.ndarray:
    row = np.zeros(len(vocab))
    for tok in tokens:
        idx = vocab.index.get(tok)
        if idx is not None:
            row[idx] = 1.0
    return row


def _label_order(labels: Iterable[str]) -> list[str]:
    unique = set(labels)
    if all(label.lstrip("-").isdigit() for label in unique):
        return sorted(unique, key=int)
    return sorted(unique)


def preprocess(
    raw_documents: Sequence[str | RawDocument], config: PreprocessConfig = PreprocessConfig()
) -> tuple[Vocabulary, BowDataset, int]:
    """Tokenize, build the top-``vocab_cap`` vocabulary and vectorize.

    Returns the vocabulary, the dataset and the number of documents dropped
    because none of their tokens made it into the vocabulary.
    """
    docs = [d if isinstance(d, RawDocument) else RawDocument(text=d) for d in raw_documents]
    stopwords = load_stopwords(config.stopwords) if config.stopwords else frozenset()
    token_lists = [tokenize(d.text, config, stopwords) for d in docs]
    vocab = build_vocabulary(token_lists, config.vocab_cap)

    labelled = [d.label is not None for d in docs]
    if any(labelled) and not all(labelled):
        raise CorpusError("either every document carries a label or none does")

    rows, kept_labels = [], []
    for doc, tokens in zip(docs, token_lists):
        row = bow_vectorize(tokens, vocab)
        if not row.any():
            continue
        rows.append(row)
        kept_labels.append(doc.label)
    dropped = len(docs) - len(rows)
    if dropped:
        logger.info("dropped %d document(s) with no in-vocabulary tokens", dropped)
    if len(rows) < 2:
        raise CorpusError(f"only {len(rows)} document(s) survive preprocessing; at least 2 are needed")

    labels = label_names = None
    if all(labelled) and docs:
        label_names = _label_order(d.label for d in docs)
        lookup = {name: i for i, name in enumerate(label_names)}
        labels = np.array([lookup[label] for label in kept_labels])
    dataset = BowDataset(rows=np.vstack(rows), labels=labels, label_names=label_names)
    return vocab, dataset, dropped


def corpus_tokens(raw_documents: Sequence[str | RawDocument], vocab: Vocabulary, config: PreprocessConfig) -> list[list[str]]:
    """Token streams restricted to ``vocab``, in document order (embedding training input)."""
    stopwords = load_stopwords(config.stopwords) if config.stopwords else frozenset()
    streams = []
    for doc in raw_documents:
        text = doc.text if isinstance(doc, RawDocument) else doc
        tokens = [t for t in tokenize(text, config, stopwords) if t in vocab]
        if tokens:
            streams.append(tokens)
    return streams


def vocabulary_hash(vocab: Vocabulary) -> str:
    return hashlib.sha256("\n".join(vocab.words).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# persistence


def save_vocabulary(path: str | Path, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#total_tokens\t{vocab.total_tokens}\n")
        for word, count in zip(vocab.words, vocab.counts):
            fh.write(f"{word}\t{int(count)}\n")


def load_vocabulary(path: str | Path) -> Vocabulary:
    words, counts, total = [], [], None
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{number}: expected 'word<TAB>count'")
            if parts[0] == "#total_tokens":
                total = int(parts[1])
                continue
            words.append(parts[0])
            counts.append(int(parts[1]))
    if total is None:
        raise CorpusError(f"{path}: missing #total_tokens header")
    return Vocabulary(words=words, counts=np.array(counts), total_tokens=total)


def save_dataset(path: str | Path, dataset: BowDataset) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#vocab_size\t{dataset.vocab_size}\n")
        if dataset.label_names is not None:
            fh.write("#labels\t" + " ".join(dataset.label_names) + "\n")
        for i, row in enumerate(dataset.rows):
            label = "-" if dataset.labels is None else str(int(dataset.labels[i]))
            fh.write(label + "\t" + " ".join(str(j) for j in np.flatnonzero(row)) + "\n")


def load_dataset(path: str | Path) -> BowDataset:
    vocab_size, label_names = None, None
    rows, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            head, _, rest = line.rstrip("\n").partition("\t")
            if head == "#vocab_size":
                vocab_size = int(rest)
                continue
            if head == "#labels":
                label_names = rest.split(" ")
                continue
            if vocab_size is None:
                raise CorpusError(f"{path}:{number}: bag-of-words row before #vocab_size header")
            row = np.zeros(vocab_size)
            try:
                row[[int(j) for j in rest.split()]] = 1.0
            except (ValueError, IndexError) as exc:
                raise CorpusError(f"{path}:{number}: bad word index ({exc})") from exc
            rows.append(row)
            labels.append(None if head == "-" else int(head))
    if vocab_size is None or not rows:
        raise CorpusError(f"{path}: no bag-of-words rows")
    has_labels = all(label is not None for label in labels)
    return BowDataset(
        rows=np.vstack(rows),
        labels=np.array(labels) if has_labels else None,
        label_names=label_names if has_labels else None,
    )


# ---------------------------------------------------------------------------
# synthetic planted-topic corpora


@dataclass(frozen=True)
class SyntheticSpec:
    topics: int = 4
    words_per_topic: int = 40
    shared_words: int = 80
    docs_per_topic: int = 500
    doc_length: int = 20
    noise_rate: float = 0.2

    def __post_init__(self):
        if self.doc_length < 1:
            raise CorpusError("doc_length must be at least 1")
        if not 0.0 <= self.noise_rate < 1.0:
            raise CorpusError("noise_rate must lie in [0, 1)")
        if self.topics < 1 or self.words_per_topic < 1:
            raise CorpusError("need at least one topic with at least one word")
        if self.noise_rate > 0 and self.shared_words < 1:
            raise CorpusError("a positive noise_rate needs a shared word pool")


@dataclass
class SyntheticCorpus:
    documents: list[RawDocument]
    labels: list[int]
    topic_words: list[list[str]]
    shared_words: list[str]
    # per document: how many tokens came from the shared pool
    noise_draws: list[int]

    @property
    def lines(self) -> list[str]:
        return [f"{d.label}\t{d.text}" for d in self.documents]


def synthetic_corpus(spec: SyntheticSpec, seed: int) -> SyntheticCorpus:
    """Documents whose words come from one planted topic set plus a shared noise pool."""
    rng = np.random.default_rng(seed)
    topic_words = [[f"t{k}w{i:03d}" for i in range(spec.words_per_topic)] for k in range(spec.topics)]
    shared = [f"shared{i:03d}" for i in range(spec.shared_words)]
    docs, labels, noise = [], [], []
    for k in range(spec.topics):
        for _ in range(spec.docs_per_topic):
            from_pool = rng.random(spec.doc_length) < spec.noise_rate
            topic_pick = rng.integers(0, spec.words_per_topic, size=spec.doc_length)
            shared_pick = rng.integers(0, max(spec.shared_words, 1), size=spec.doc_length)
            tokens = [
                shared[shared_pick[i]] if from_pool[i] else topic_words[k][topic_pick[i]]
                for i in range(spec.doc_length)
            ]
            docs.append(RawDocument(text=" ".join(tokens), label=str(k)))
            labels.append(k)
            noise.append(int(from_pool.sum()))
    return SyntheticCorpus(documents=docs, labels=labels, topic_words=topic_words, shared_words=shared, noise_draws=noise)
