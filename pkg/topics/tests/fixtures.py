"""Small models and corpora shared by the test modules."""
import numpy as np

from topics.corpus import BowDataset, PreprocessConfig, SyntheticSpec, Vocabulary, corpus_tokens, preprocess, synthetic_corpus
from topics.embeddings import EmbeddingMatrix, SgnsConfig, train_sgns
from topics.tigan import TiganConfig


def tiny_config(**overrides) -> TiganConfig:
    values = dict(
        num_topics=3,
        z_dim=4,
        g_hidden=(8,),
        d_hidden=(8,),
        e_hidden=(6,),
        embedding_dim=5,
        q_variant="linear",
        batch_size=8,
        critic_steps=2,
        epochs=2,
        seed=0,
    )
    values.update(overrides)
    return TiganConfig(**values)


def tiny_vocab(size=12) -> Vocabulary:
    counts = np.arange(size, 0, -1)
    return Vocabulary(words=[f"w{i:02d}" for i in range(size)], counts=counts, total_tokens=int(counts.sum()))


def tiny_dataset(rows=16, size=12, seed=0, labels=3) -> BowDataset:
    rng = np.random.default_rng(seed)
    bow = (rng.random((rows, size)) < 0.3).astype(np.float64)
    bow[:, 0] = 1.0  # no empty documents
    return BowDataset(rows=bow, labels=np.arange(rows) % labels)


def tiny_embeddings(size=12, dim=5, seed=0) -> EmbeddingMatrix:
    return EmbeddingMatrix(np.random.default_rng(seed).normal(size=(size, dim)))


def planted_setup(seed=0, noise_rate=0.2, docs_per_topic=500):
    """The four-topic planted corpus, preprocessed, with SGNS embeddings trained on it."""
    spec = SyntheticSpec(topics=4, words_per_topic=40, shared_words=80, docs_per_topic=docs_per_topic, doc_length=20, noise_rate=noise_rate)
    corpus = synthetic_corpus(spec, seed)
    config = PreprocessConfig(vocab_cap=3000, stopwords="")
    vocab, dataset, _ = preprocess(corpus.documents, config)
    streams = corpus_tokens(corpus.documents, vocab, config)
    embeddings = train_sgns(streams, vocab, SgnsConfig(dim=32, window=5, epochs=3, seed=seed))
    return corpus, vocab, dataset, embeddings


def desk_config(seed=0, **overrides) -> TiganConfig:
    """Narrow nets for the planted corpus; a short noise vector and lambda_mi=1 keep G conditioned on the code."""
    values = dict(
        num_topics=4,
        z_dim=4,
        lambda_mi=1.0,
        g_hidden=(64, 64),
        d_hidden=(64,),
        e_hidden=(32,),
        embedding_dim=32,
        batch_size=64,
        critic_steps=2,
        epochs=16,
        lr=0.002,
        seed=seed,
    )
    values.update(overrides)
    return TiganConfig(**values)
