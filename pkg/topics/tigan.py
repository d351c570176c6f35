"""
The topic GAN: generator G(c, z), critic D, topic classifier Q and noise
predictor E, their losses, and the alternating training schedule.

One training iteration runs ``infogan_step`` (critic updates under the
Wasserstein loss with gradient penalty, then a joint G/Q update on the clipped
categorical loss) followed by ``autoencoder_step`` (G, Q and E reconstruct a
real batch through G(Q(x), E(x))).
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .autodiff import Graph, Node, evaluate, input_gradient_node
from .corpus import BowDataset, Vocabulary
from .embeddings import EmbeddingMatrix, SifParams, sif_document_nodes
from .exceptions import ConfigError, CorpusError, NonFiniteError, ShapeError, TrainingDivergedError
from .nn import (
    EVAL,
    TRAIN,
    AdamHyper,
    AdamState,
    DenseLayer,
    Mlp,
    adam_step,
    apply_batch_stats,
    collect_batch_stats,
    evaluate_rowwise,
)

logger = logging.getLogger(__name__)

Q_VARIANTS = ("sif", "mlp_random_embed", "linear")
CODE_PRIORS = ("uniform", "labels")
NETWORKS = ("G", "D", "Q", "E")
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class TiganConfig:
    num_topics: int = 4
    z_dim: int = 200
    lambda_mi: float = 0.1
    alpha_clip: float = 0.15
    lambda_gp: float = 10.0
    critic_steps: int = 5
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    q_variant: str = "sif"
    finetune_embeddings: bool = False
    autoencoder: bool = True
    code_prior: str = "uniform"
    g_hidden: tuple[int, ...] = (1000, 1000, 1000)
    d_hidden: tuple[int, ...] = (500, 500)
    e_hidden: tuple[int, ...] = (500,)
    embedding_dim: int = 100
    lr: float = 0.0005
    beta1: float = 0.5
    beta2: float = 0.999
    checkpoint_every: int = 1

    def __post_init__(self):
        for name in ("g_hidden", "d_hidden", "e_hidden"):
            object.__setattr__(self, name, tuple(int(h) for h in getattr(self, name)))
        if self.num_topics < 2:
            raise ConfigError("num_topics must be at least 2")
        if self.z_dim < 1:
            raise ConfigError("z_dim must be positive")
        if min(self.lambda_mi, self.lambda_gp, self.alpha_clip) < 0:
            raise ConfigError("loss weights and alpha_clip must be non-negative")
        if self.critic_steps < 1 or self.epochs < 0 or self.checkpoint_every < 1:
            raise ConfigError("critic_steps and checkpoint_every must be >= 1, epochs >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.q_variant not in Q_VARIANTS:
            raise ConfigError(f"q_variant must be one of {Q_VARIANTS}")
        if self.code_prior not in CODE_PRIORS:
            raise ConfigError(f"code_prior must be one of {CODE_PRIORS}")
        if any(h < 1 for h in self.g_hidden + self.d_hidden + self.e_hidden):
            raise ConfigError("hidden widths must be positive")

    @property
    def adam(self) -> AdamHyper:
        return AdamHyper(lr=self.lr, beta1=self.beta1, beta2=self.beta2)

    def to_dict(self) -> dict:
        data = asdict(self)
        for name in ("g_hidden", "d_hidden", "e_hidden"):
            data[name] = list(data[name])
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "TiganConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


# ---------------------------------------------------------------------------
# topic classifier


@dataclass
class TopicClassifier:
    variant: str
    params: dict[str, np.ndarray]
    constants: dict[str, np.ndarray]

    @classmethod
    def initialize(
        cls,
        config: TiganConfig,
        vocab_size: int,
        frequencies: np.ndarray,
        rng: np.random.Generator,
        embeddings: EmbeddingMatrix | None = None,
    ) -> "TopicClassifier":
        k = config.num_topics
        if config.q_variant == "linear":
            layer = DenseLayer.initialize(vocab_size, k, rng)
            return cls("linear", {"Q.linear.weight": layer.weight, "Q.linear.bias": layer.bias}, {})

        if config.q_variant == "sif":
            if embeddings is None:
                raise ConfigError("the sif topic classifier needs pretrained embeddings")
            if len(embeddings) != vocab_size:
                raise ShapeError(f"embeddings have {len(embeddings)} rows, vocabulary has {vocab_size}")
            embed = embeddings.vectors.copy()
        else:
            embed = (rng.random((vocab_size, config.embedding_dim)) - 0.5) / config.embedding_dim
        layer = DenseLayer.initialize(embed.shape[1], k, rng)
        params = {
            "Q.a_raw": np.array([SifParams().a_raw]),
            "Q.linear.weight": layer.weight,
            "Q.linear.bias": layer.bias,
        }
        constants = {"Q.word_freq": np.asarray(frequencies, dtype=np.float64)}
        if config.q_variant == "sif" and not config.finetune_embeddings:
            constants["Q.embed"] = embed
        else:
            params["Q.embed"] = embed
        return cls(config.q_variant, params, constants)

    @property
    def embedding_matrix(self) -> np.ndarray | None:
        return self.params.get("Q.embed", self.constants.get("Q.embed"))

    @property
    def linear_weight(self) -> np.ndarray:
        return self.params["Q.linear.weight"]

    @property
    def sif(self) -> SifParams | None:
        if "Q.a_raw" not in self.params:
            return None
        return SifParams(float(self.params["Q.a_raw"][0]))

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.params)

    def bindings(self) -> dict[str, np.ndarray]:
        return {**self.params, **self.constants}

    def assign(self, values: Mapping[str, np.ndarray]) -> None:
        for key, value in values.items():
            target = self.params if key in self.params else self.constants if key in self.constants else None
            if target is None:
                continue
            value = np.asarray(value, dtype=np.float64)
            if value.shape != target[key].shape:
                raise ShapeError(f"{key}: expected shape {target[key].shape}, got {value.shape}")
            target[key] = value

    def build(self, graph: Graph, x: Node, trainable: bool = True) -> Node:
        def leaf(name):
            if trainable and name in self.params:
                return graph.param(name)
            return graph.input(name)

        if self.variant == "linear":
            doc = x
        else:
            doc = sif_document_nodes(graph, x, leaf("Q.embed"), leaf("Q.a_raw"), graph.input("Q.word_freq"))
        logits = graph.bias_add(graph.matmul(doc, leaf("Q.linear.weight")), leaf("Q.linear.bias"))
        return graph.softmax(logits)


# ---------------------------------------------------------------------------
# model


@dataclass
class TiganModel:
    config: TiganConfig
    vocab_size: int
    generator: Mlp
    critic: Mlp
    classifier: TopicClassifier
    noise_predictor: Mlp
    code_prior: np.ndarray

    def network(self, name: str):
        return {"G": self.generator, "D": self.critic, "Q": self.classifier, "E": self.noise_predictor}[name]

    def parameters(self, name: str) -> dict[str, np.ndarray]:
        return self.network(name).parameters()

    def tensors(self) -> dict[str, np.ndarray]:
        """Every array needed to rebuild the model, in a stable order."""
        out = {}
        for name in ("G", "D", "E"):
            out.update(self.network(name).bindings())
        out.update(self.classifier.bindings())
        out["code_prior"] = self.code_prior
        return out

    def assign(self, tensors: Mapping[str, np.ndarray]) -> None:
        for mlp in (self.generator, self.critic, self.noise_predictor):
            mlp.assign(tensors)
        self.classifier.assign(tensors)
        if "code_prior" in tensors:
            self.code_prior = np.asarray(tensors["code_prior"], dtype=np.float64)

    @classmethod
    def from_tensors(cls, config: TiganConfig, vocab_size: int, tensors: Mapping[str, np.ndarray]) -> "TiganModel":
        embeddings = None
        if config.q_variant == "sif":
            embeddings = EmbeddingMatrix(tensors["Q.embed"])
        frequencies = tensors.get("Q.word_freq", np.full(vocab_size, 1.0 / vocab_size))
        model = init_model(config, vocab_size, embeddings=embeddings, frequencies=frequencies)
        model.assign(tensors)
        return model


def init_model(
    config: TiganConfig,
    vocab: Vocabulary | int,
    embeddings: EmbeddingMatrix | None = None,
    frequencies: np.ndarray | None = None,
    code_prior: np.ndarray | None = None,
) -> TiganModel:
    """Seeded initialization of all four networks."""
    if isinstance(vocab, Vocabulary):
        vocab_size = len(vocab)
        frequencies = vocab.frequencies if frequencies is None else frequencies
    else:
        vocab_size = int(vocab)
    if frequencies is None:
        frequencies = np.full(vocab_size, 1.0 / vocab_size)
    if config.q_variant == "sif" and embeddings is None:
        raise ConfigError("q_variant 'sif' requires pretrained embeddings")

    k, zd = config.num_topics, config.z_dim
    rng = np.random.default_rng([config.seed, 0])
    generator = Mlp.initialize(
        "G", (k + zd, *config.g_hidden, vocab_size), rng, output_activation="sigmoid", batch_norm=True
    )
    critic = Mlp.initialize("D", (vocab_size, *config.d_hidden, 1), rng)
    classifier = TopicClassifier.initialize(config, vocab_size, frequencies, rng, embeddings)
    noise_predictor = Mlp.initialize("E", (vocab_size, *config.e_hidden, zd), rng)
    prior = np.full(k, 1.0 / k) if code_prior is None else np.asarray(code_prior, dtype=np.float64)
    if prior.shape != (k,) or np.any(prior < 0) or not np.isclose(prior.sum(), 1.0):
        raise ConfigError("code prior must be a probability vector over the topics")
    return TiganModel(config, vocab_size, generator, critic, classifier, noise_predictor, prior)


def label_prior(dataset: BowDataset, num_topics: int) -> np.ndarray:
    """Empirical gold-label distribution, used as the topic-code prior."""
    if dataset.labels is None:
        raise ConfigError("code_prior 'labels' needs a labelled dataset")
    if dataset.num_labels != num_topics:
        raise ConfigError(f"code_prior 'labels' needs num_topics == {dataset.num_labels} gold labels")
    counts = np.bincount(dataset.labels, minlength=num_topics).astype(np.float64)
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# sampling


def sample_topic_code(num_topics: int, rng: np.random.Generator) -> np.ndarray:
    if num_topics < 1:
        raise ValueError("num_topics must be positive")
    code = np.zeros(num_topics)
    code[rng.integers(0, num_topics)] = 1.0
    return code


def sample_codes(num_topics: int, batch: int, rng: np.random.Generator, prior: np.ndarray | None = None) -> np.ndarray:
    if prior is None:
        index = rng.integers(0, num_topics, size=batch)
    else:
        index = rng.choice(num_topics, size=batch, p=prior)
    return np.eye(num_topics)[index]


def sample_noise(z_dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(z_dim)


def sample_noise_batch(z_dim: int, batch: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((batch, z_dim))


# ---------------------------------------------------------------------------
# forward passes


def _as_batch(values, width: int, what: str) -> np.ndarray:
    batch = np.asarray(values, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != width or batch.shape[0] < 1:
        raise ShapeError(f"{what}: expected a non-empty batch of width {width}, got shape {batch.shape}")
    return batch


def generator_forward(model: TiganModel, codes, noise, mode: str = EVAL, update_stats: bool = True) -> np.ndarray:
    """Bag-of-words probabilities G(c, z); no sampling or thresholding.

    In train mode the batch statistics move G's running statistics unless
    ``update_stats`` is false.
    """
    codes = _as_batch(codes, model.config.num_topics, "topic codes")
    noise = _as_batch(noise, model.config.z_dim, "noise")
    if codes.shape[0] != noise.shape[0]:
        raise ShapeError("codes and noise must have the same number of rows")
    graph = Graph()
    x = graph.input("cz")
    nodes = model.generator.build(graph, x, mode)
    batch = np.concatenate([codes, noise], axis=1)
    if mode == EVAL:
        return evaluate_rowwise(graph, x, nodes.output, batch, model.generator.bindings())
    if batch.shape[0] < 2:
        raise ShapeError("generator batch norm in train mode needs at least 2 rows")
    values = evaluate(
        graph, {**model.generator.bindings(), "cz": batch}, {"out": nodes.output, **collect_batch_stats(nodes)}
    )
    if update_stats:
        apply_batch_stats(model.generator, nodes, values)
    return values["out"]


def generate_bow(model: TiganModel, codes, noise) -> np.ndarray:
    return generator_forward(model, codes, noise, EVAL)


def discriminator_forward(model: TiganModel, bow) -> np.ndarray:
    bow = _as_batch(bow, model.vocab_size, "critic input")
    graph = Graph()
    x = graph.input("x")
    scores = model.critic.build(graph, x, EVAL).output
    return evaluate(graph, {**model.critic.bindings(), "x": bow}, scores)[:, 0]


def topic_classifier_forward(model: TiganModel, bow) -> np.ndarray:
    bow = _as_batch(bow, model.vocab_size, "classifier input")
    if model.classifier.variant != "linear" and np.any(bow.sum(axis=1) == 0):
        raise CorpusError("the embedding topic classifier cannot read an all-zero bag-of-words row")
    graph = Graph()
    x = graph.input("x")
    probs = model.classifier.build(graph, x)
    return evaluate_rowwise(graph, x, probs, bow, model.classifier.bindings())


def noise_predictor_forward(model: TiganModel, bow) -> np.ndarray:
    bow = _as_batch(bow, model.vocab_size, "noise predictor input")
    graph = Graph()
    x = graph.input("x")
    out = model.noise_predictor.build(graph, x, EVAL).output
    return evaluate(graph, {**model.noise_predictor.bindings(), "x": bow}, out)


# ---------------------------------------------------------------------------
# losses (graph builders, then array helpers with the same semantics)


def wgan_discriminator_node(graph: Graph, real_scores: Node, fake_scores: Node) -> Node:
    return graph.sub(graph.mean(fake_scores), graph.mean(real_scores))


def gradient_penalty_node(graph: Graph, critic: Mlp, x_hat: Node, trainable: bool = True) -> Node:
    """mean over rows of (||dD/dx_hat|| - 1)^2, differentiable in the critic parameters."""
    scores = critic.build(graph, x_hat, TRAIN, trainable=trainable).output
    grad = input_gradient_node(graph, graph.sum(scores), x_hat)
    return graph.mean(graph.square(graph.affine(graph.l2_norm(grad), 1.0, -1.0)))


def clipped_categorical_node(graph: Graph, codes: Node, probs: Node, alpha: float) -> Node:
    log_probs = graph.log(graph.clip_lower(probs, LOG_FLOOR))
    cross_entropy = graph.affine(graph.sum(graph.mul(codes, log_probs), axis=1), -1.0)
    return graph.mean(graph.clip_lower(cross_entropy, alpha))


def reconstruction_node(graph: Graph, x: Node, x_hat: Node) -> Node:
    clamped = graph.clip_upper(graph.clip_lower(x_hat, LOG_FLOOR), 1.0 - LOG_FLOOR)
    present = graph.mul(x, graph.log(clamped))
    absent = graph.mul(graph.affine(x, -1.0, 1.0), graph.log(graph.affine(clamped, -1.0, 1.0)))
    return graph.affine(graph.mean(graph.add(present, absent)), -1.0)


def _scalar(build, **arrays) -> float:
    graph = Graph()
    nodes = {name: graph.input(name) for name in arrays}
    return float(evaluate(graph, arrays, build(graph, **nodes)))


def wgan_discriminator_loss(real_scores, fake_scores) -> float:
    return _scalar(
        lambda g, real, fake: wgan_discriminator_node(g, real, fake),
        real=np.asarray(real_scores, dtype=np.float64),
        fake=np.asarray(fake_scores, dtype=np.float64),
    )


def clipped_categorical_loss(codes, probs, alpha: float) -> float:
    return _scalar(
        lambda g, c, q: clipped_categorical_node(g, c, q, alpha),
        c=np.asarray(codes, dtype=np.float64),
        q=np.asarray(probs, dtype=np.float64),
    )


def reconstruction_loss(x, x_hat) -> float:
    return _scalar(
        lambda g, x, x_hat: reconstruction_node(g, x, x_hat),
        x=np.asarray(x, dtype=np.float64),
        x_hat=np.asarray(x_hat, dtype=np.float64),
    )


def interpolate(real: np.ndarray, fake: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if real.shape != fake.shape:
        raise ShapeError(f"real batch {real.shape} and fake batch {fake.shape} differ")
    u = rng.random((real.shape[0], 1))
    return u * real + (1.0 - u) * fake


def gradient_penalty(model: TiganModel, real, fake, rng: np.random.Generator) -> float:
    real = _as_batch(real, model.vocab_size, "real batch")
    fake = _as_batch(fake, model.vocab_size, "fake batch")
    graph = Graph()
    x_hat = graph.input("x_hat")
    penalty = gradient_penalty_node(graph, model.critic, x_hat)
    return float(evaluate(graph, {**model.critic.bindings(), "x_hat": interpolate(real, fake, rng)}, penalty))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainState:
    adam: dict[str, AdamState]
    epoch: int = 0
    step: int = 0
    history: list[dict] = field(default_factory=list)

    @classmethod
    def fresh(cls, model: TiganModel) -> "TrainState":
        return cls(adam={name: AdamState.zeros_like(model.parameters(name)) for name in NETWORKS})


def _losses_and_grads(graph: Graph, loss: Node, bindings: Mapping, fetch: Mapping[str, Node]):
    params = graph.parameters
    grad_nodes = graph.gradients(loss, list(params.values()))
    values = evaluate(graph, bindings, {**fetch, **{f"grad:{k}": n for k, n in zip(params, grad_nodes)}})
    grads = {k[5:]: np.array(v) for k, v in values.items() if k.startswith("grad:")}
    return values, grads


def _apply_update(model: TiganModel, state: TrainState, name: str, grads: Mapping[str, np.ndarray]) -> None:
    network = model.network(name)
    params = network.parameters()
    updated, state.adam[name] = adam_step(params, {k: grads[k] for k in params}, state.adam[name], model.config.adam)
    network.assign(updated)


def critic_gradients(model: TiganModel, real: np.ndarray, fake: np.ndarray, x_hat: np.ndarray, lambda_gp: float):
    """Critic loss terms and parameter gradients of L_D' + lambda_gp * penalty."""
    graph = Graph()
    real_scores = model.critic.build(graph, graph.input("real"), TRAIN).output
    fake_scores = model.critic.build(graph, graph.input("fake"), TRAIN).output
    wasserstein = wgan_discriminator_node(graph, real_scores, fake_scores)
    fetch = {"wasserstein": wasserstein}
    loss = wasserstein
    if lambda_gp > 0:
        penalty = gradient_penalty_node(graph, model.critic, graph.input("x_hat"))
        loss = graph.add(wasserstein, graph.affine(penalty, lambda_gp))
        fetch["penalty"] = penalty
    fetch["loss_d"] = loss
    bindings = {**model.critic.bindings(), "real": real, "fake": fake, "x_hat": x_hat}
    values, grads = _losses_and_grads(graph, loss, bindings, fetch)
    losses = {k: float(v) for k, v in values.items() if not k.startswith("grad:")}
    losses.setdefault("penalty", 0.0)
    return losses, grads


def _check_batch(real, model: TiganModel) -> np.ndarray:
    real = _as_batch(real, model.vocab_size, "real batch")
    if real.shape[0] < 2:
        raise ShapeError("training batches need at least 2 rows")
    return real


def _check_finite(losses: Mapping[str, float], state: TrainState, phase: str) -> None:
    bad = {k: v for k, v in losses.items() if not np.isfinite(v)}
    if bad:
        raise TrainingDivergedError(f"{phase} step {state.step}: non-finite losses {bad}", state.step, losses)


def infogan_step(model: TiganModel, state: TrainState, real, config: TiganConfig, rng: np.random.Generator):
    """Critic updates followed by one joint generator / topic-classifier update."""
    real = _check_batch(real, model)
    batch = real.shape[0]
    prior = model.code_prior

    critic_losses = []
    for _ in range(config.critic_steps):
        codes = sample_codes(config.num_topics, batch, rng, prior)
        noise = sample_noise_batch(config.z_dim, batch, rng)
        # critic-side samples leave the running statistics to the generator update
        fake = generator_forward(model, codes, noise, TRAIN, update_stats=False)
        x_hat = interpolate(real, fake, rng)
        losses, grads = critic_gradients(model, real, fake, x_hat, config.lambda_gp)
        _check_finite(losses, state, "critic")
        _apply_update(model, state, "D", grads)
        critic_losses.append(losses)

    codes = sample_codes(config.num_topics, batch, rng, prior)
    noise = sample_noise_batch(config.z_dim, batch, rng)
    graph = Graph()
    c = graph.input("c")
    g_nodes = model.generator.build(graph, graph.concat(c, graph.input("z")), TRAIN)
    fake = g_nodes.output
    scores = model.critic.build(graph, fake, TRAIN, trainable=False).output
    probs = model.classifier.build(graph, fake)
    loss_q = clipped_categorical_node(graph, c, probs, config.alpha_clip)
    adversarial = graph.affine(graph.mean(scores), -1.0)
    loss_g = graph.add(adversarial, graph.affine(loss_q, config.lambda_mi))
    bindings = {
        **model.generator.bindings(),
        **model.critic.bindings(),
        **model.classifier.bindings(),
        "c": codes,
        "z": noise,
    }
    fetch = {"loss_g": loss_g, "loss_q": loss_q, **collect_batch_stats(g_nodes)}
    values, grads = _losses_and_grads(graph, loss_g, bindings, fetch)
    losses = {
        "loss_d": float(np.mean([l["loss_d"] for l in critic_losses])),
        "wasserstein": float(np.mean([l["wasserstein"] for l in critic_losses])),
        "penalty": float(np.mean([l["penalty"] for l in critic_losses])),
        "loss_g": float(values["loss_g"]),
        "loss_q": float(values["loss_q"]),
    }
    _check_finite(losses, state, "infogan")
    apply_batch_stats(model.generator, g_nodes, values)
    _apply_update(model, state, "G", grads)
    if config.lambda_mi > 0:
        _apply_update(model, state, "Q", grads)
    return model, state, losses


def autoencoder_step(model: TiganModel, state: TrainState, real, config: TiganConfig):
    """Joint G/Q/E update on the binary cross-entropy of G(Q(x), E(x)) against x."""
    real = _check_batch(real, model)
    graph = Graph()
    x = graph.input("x")
    probs = model.classifier.build(graph, x)
    z_hat = model.noise_predictor.build(graph, x, TRAIN).output
    g_nodes = model.generator.build(graph, graph.concat(probs, z_hat), TRAIN)
    loss = reconstruction_node(graph, x, g_nodes.output)
    bindings = {
        **model.generator.bindings(),
        **model.classifier.bindings(),
        **model.noise_predictor.bindings(),
        "x": real,
    }
    values, grads = _losses_and_grads(graph, loss, bindings, {"reconstruction": loss, **collect_batch_stats(g_nodes)})
    losses = {"reconstruction": float(values["reconstruction"])}
    _check_finite(losses, state, "autoencoder")
    apply_batch_stats(model.generator, g_nodes, values)
    for name in ("G", "Q", "E"):
        _apply_update(model, state, name, grads)
    return model, state, losses


@dataclass
class TrainResult:
    model: TiganModel
    state: TrainState
    checkpoints: list[Path]
    # (epoch, step) at which each checkpoint was written
    marks: list[tuple[int, int]] = field(default_factory=list)


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        if len(chunk) >= 2:
            yield chunk


def train(
    config: TiganConfig,
    dataset: BowDataset,
    vocab: Vocabulary,
    embeddings: EmbeddingMatrix | None = None,
    output_dir: str | Path | None = None,
) -> TrainResult:
    """Alternate infogan_step and autoencoder_step over shuffled minibatches.

    With ``output_dir`` set, checkpoints go to ``epoch-NNNN.ckpt`` every
    ``checkpoint_every`` epochs plus ``final.ckpt``, and every step is
    appended to ``losses.jsonl``.
    """
    from .checkpoints import save_checkpoint

    if len(dataset) < 2:
        raise CorpusError("training needs at least 2 documents")
    if dataset.vocab_size != len(vocab):
        raise ShapeError(f"dataset width {dataset.vocab_size} does not match vocabulary size {len(vocab)}")
    prior = label_prior(dataset, config.num_topics) if config.code_prior == "labels" else None
    model = init_model(config, vocab, embeddings, code_prior=prior)
    state = TrainState.fresh(model)
    rng = np.random.default_rng([config.seed, 1])

    checkpoints: list[Path] = []
    marks: list[tuple[int, int]] = []
    out = Path(output_dir) if output_dir is not None else None
    log = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log = open(out / "losses.jsonl", "w", encoding="utf-8", newline="\n")

    def record(phase: str, losses: Mapping[str, float]) -> None:
        entry = {"step": state.step, "epoch": state.epoch, "phase": phase, **losses}
        state.history.append(entry)
        if log is not None:
            log.write(json.dumps(entry, sort_keys=True) + "\n")

    try:
        for epoch in range(config.epochs):
            state.epoch = epoch + 1
            for idx in _batches(rng.permutation(len(dataset)), config.batch_size):
                real = dataset.rows[idx]
                state.step += 1
                try:
                    _, _, losses = infogan_step(model, state, real, config, rng)
                    record("infogan", losses)
                    if config.autoencoder:
                        _, _, losses = autoencoder_step(model, state, real, config)
                        record("autoencoder", losses)
                except NonFiniteError as exc:
                    raise TrainingDivergedError(f"step {state.step}: {exc}", state.step) from exc
            _log_epoch(state)
            if out is not None and state.epoch % config.checkpoint_every == 0:
                checkpoints.append(save_checkpoint(out / f"epoch-{state.epoch:04d}.ckpt", model, vocab, state))
                marks.append((state.epoch, state.step))
        if out is not None:
            checkpoints.append(save_checkpoint(out / "final.ckpt", model, vocab, state))
            marks.append((state.epoch, state.step))
    finally:
        if log is not None:
            log.close()
    return TrainResult(model=model, state=state, checkpoints=checkpoints, marks=marks)


def _log_epoch(state: TrainState) -> None:
    rows = [h for h in state.history if h["epoch"] == state.epoch]
    if not rows:
        return
    keys = sorted({k for h in rows for k in h if k not in ("step", "epoch", "phase")})
    summary = ", ".join(f"{k}={np.mean([h[k] for h in rows if k in h]):.4f}" for k in keys)
    logger.info("epoch %d (step %d): %s", state.epoch, state.step, summary)
