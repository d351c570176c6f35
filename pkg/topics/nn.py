"""Dense and batch-norm layers, MLP composition and the Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Graph, Node, evaluate
from .exceptions import NonFiniteError, ShapeError

TRAIN = "train"
EVAL = "eval"
MODES = (TRAIN, EVAL)
ACTIVATIONS = ("linear", "leaky_relu", "sigmoid", "softmax")


@dataclass
class DenseLayer:
    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def initialize(cls, fan_in: int, fan_out: int, rng: np.random.Generator) -> "DenseLayer":
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        return cls(weight=weight, bias=np.zeros(fan_out))


@dataclass
class BatchNormLayer:
    gain: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9
    epsilon: float = 1e-5

    @classmethod
    def initialize(cls, features: int, momentum: float = 0.9, epsilon: float = 1e-5) -> "BatchNormLayer":
        return cls(
            gain=np.ones(features),
            shift=np.zeros(features),
            running_mean=np.zeros(features),
            running_var=np.ones(features),
            momentum=momentum,
            epsilon=epsilon,
        )

    def update_running_stats(self, batch_mean: np.ndarray, batch_var: np.ndarray) -> None:
        m = self.momentum
        self.running_mean = m * self.running_mean + (1.0 - m) * np.reshape(batch_mean, -1)
        self.running_var = m * self.running_var + (1.0 - m) * np.reshape(batch_var, -1)


@dataclass
class MlpLayer:
    dense: DenseLayer
    batch_norm: BatchNormLayer | None = None
    activation: str = "leaky_relu"


@dataclass
class MlpNodes:
    output: Node
    # (layer index, batch mean node, batch variance node) for train-mode batch norm
    batch_stats: list[tuple[int, Node, Node]] = field(default_factory=list)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def apply_activation(graph: Graph, node: Node, activation: str) -> Node:
    if activation == "linear":
        return node
    if activation == "leaky_relu":
        return graph.leaky_relu(node)
    if activation == "sigmoid":
        return graph.sigmoid(node)
    if activation == "softmax":
        return graph.softmax(node)
    raise ValueError(f"unknown activation {activation!r}")


@dataclass
class Mlp:
    name: str
    layers: list[MlpLayer]

    @classmethod
    def initialize(
        cls,
        name: str,
        sizes: Sequence[int],
        rng: np.random.Generator,
        output_activation: str = "linear",
        hidden_activation: str = "leaky_relu",
        batch_norm: bool = False,
    ) -> "Mlp":
        """Hidden layers get ``hidden_activation`` (and batch norm when asked); the last layer does not."""
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            layers.append(
                MlpLayer(
                    dense=DenseLayer.initialize(fan_in, fan_out, rng),
                    batch_norm=None if (last or not batch_norm) else BatchNormLayer.initialize(fan_out),
                    activation=output_activation if last else hidden_activation,
                )
            )
        return cls(name=name, layers=layers)

    @property
    def in_features(self) -> int:
        return self.layers[0].dense.weight.shape[0]

    @property
    def out_features(self) -> int:
        return self.layers[-1].dense.weight.shape[1]

    @property
    def has_batch_norm(self) -> bool:
        return any(layer.batch_norm is not None for layer in self.layers)

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"{self.name}.{i}.weight"] = layer.dense.weight
            params[f"{self.name}.{i}.bias"] = layer.dense.bias
            if layer.batch_norm is not None:
                params[f"{self.name}.{i}.gain"] = layer.batch_norm.gain
                params[f"{self.name}.{i}.shift"] = layer.batch_norm.shift
        return params

    def buffers(self) -> dict[str, np.ndarray]:
        buffers = {}
        for i, layer in enumerate(self.layers):
            if layer.batch_norm is not None:
                buffers[f"{self.name}.{i}.running_mean"] = layer.batch_norm.running_mean
                buffers[f"{self.name}.{i}.running_var"] = layer.batch_norm.running_var
        return buffers

    def bindings(self) -> dict[str, np.ndarray]:
        return {**self.parameters(), **self.buffers()}

    def assign(self, values: Mapping[str, np.ndarray]) -> None:
        """Write back any parameter or buffer present in ``values``."""
        prefix = f"{self.name}."
        for key, value in values.items():
            if not key.startswith(prefix):
                continue
            index, attr = key[len(prefix):].split(".", 1)
            layer = self.layers[int(index)]
            if attr in ("weight", "bias"):
                target = layer.dense
            else:
                target = layer.batch_norm
            if target is None or not hasattr(target, attr):
                raise KeyError(key)
            expected = getattr(target, attr).shape
            value = np.asarray(value, dtype=np.float64)
            if value.shape != expected:
                raise ShapeError(f"{key}: expected shape {expected}, got {value.shape}")
            setattr(target, attr, value)

    def build(self, graph: Graph, x: Node, mode: str, trainable: bool = True) -> MlpNodes:
        """Add this network to ``graph`` on top of ``x``."""
        _check_mode(mode)
        leaf = graph.param if trainable else graph.input
        nodes = MlpNodes(output=x)
        h = x
        for i, layer in enumerate(self.layers):
            key = f"{self.name}.{i}"
            h = graph.bias_add(graph.matmul(h, leaf(f"{key}.weight")), leaf(f"{key}.bias"))
            bn = layer.batch_norm
            if bn is not None:
                gain, shift = leaf(f"{key}.gain"), leaf(f"{key}.shift")
                if mode == TRAIN:
                    out = graph.batch_norm(h, gain, shift, bn.epsilon)
                    nodes.batch_stats.append((i, out.mean, out.var))
                    h = out.output
                else:
                    h = graph.batch_norm_inference(
                        h,
                        gain,
                        shift,
                        graph.input(f"{key}.running_mean"),
                        graph.input(f"{key}.running_var"),
                        bn.epsilon,
                    )
            h = apply_activation(graph, h, layer.activation)
        nodes.output = h
        return nodes

    def update_running_stats(self, stat_values: Sequence[tuple[int, np.ndarray, np.ndarray]]) -> None:
        for index, mean, var in stat_values:
            self.layers[index].batch_norm.update_running_stats(mean, var)


def collect_batch_stats(nodes: MlpNodes) -> dict[str, Node]:
    fetch = {}
    for index, mean, var in nodes.batch_stats:
        fetch[f"bn{index}.mean"] = mean
        fetch[f"bn{index}.var"] = var
    return fetch


def apply_batch_stats(mlp: Mlp, nodes: MlpNodes, values: Mapping[str, np.ndarray]) -> None:
    mlp.update_running_stats(
        [(index, values[f"bn{index}.mean"], values[f"bn{index}.var"]) for index, _, _ in nodes.batch_stats]
    )


def evaluate_rowwise(graph: Graph, x: Node, output: Node, batch: np.ndarray, bindings: Mapping) -> np.ndarray:
    """Evaluate one example at a time so results never depend on batch composition."""
    rows = [evaluate(graph, {**bindings, x.name: batch[i : i + 1]}, output) for i in range(batch.shape[0])]
    return np.concatenate(rows, axis=0)


def mlp_forward(mlp: Mlp, batch: np.ndarray, mode: str) -> np.ndarray:
    """Run ``mlp`` on ``batch``. Train mode updates batch-norm running statistics."""
    _check_mode(mode)
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] < 1:
        raise ShapeError(f"{mlp.name}: expected a non-empty 2-D batch, got shape {batch.shape}")
    if batch.shape[1] != mlp.in_features:
        raise ShapeError(f"{mlp.name}: expected width {mlp.in_features}, got {batch.shape[1]}")
    if mode == TRAIN and mlp.has_batch_norm and batch.shape[0] < 2:
        raise ShapeError(f"{mlp.name}: batch norm in train mode needs at least 2 rows")

    graph = Graph()
    x = graph.input("x")
    nodes = mlp.build(graph, x, mode)
    if mode == EVAL:
        return evaluate_rowwise(graph, x, nodes.output, batch, mlp.bindings())
    values = evaluate(graph, {**mlp.bindings(), "x": batch}, {"out": nodes.output, **collect_batch_stats(nodes)})
    apply_batch_stats(mlp, nodes, values)
    return values["out"]


def batchnorm_forward(layer: BatchNormLayer, batch: np.ndarray, mode: str) -> np.ndarray:
    _check_mode(mode)
    graph = Graph()
    x = graph.input("x")
    bindings = {
        "x": batch,
        "gain": layer.gain,
        "shift": layer.shift,
        "running_mean": layer.running_mean,
        "running_var": layer.running_var,
    }
    gain, shift = graph.param("gain"), graph.param("shift")
    if mode == EVAL:
        out = graph.batch_norm_inference(
            x, gain, shift, graph.input("running_mean"), graph.input("running_var"), layer.epsilon
        )
        return evaluate(graph, bindings, out)
    nodes = graph.batch_norm(x, gain, shift, layer.epsilon)
    values = evaluate(graph, bindings, {"out": nodes.output, "mean": nodes.mean, "var": nodes.var})
    layer.update_running_stats(values["mean"], values["var"])
    return values["out"]


# ---------------------------------------------------------------------------
# Adam


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 0.0005
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls(
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    hyper: AdamHyper = AdamHyper(),
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new parameter arrays and a new state."""
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient for parameter '{name}'")

    t = state.step_count + 1
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    first, second, updated = {}, {}, {}
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        if grad.shape != value.shape:
            raise ShapeError(f"gradient for '{name}' has shape {grad.shape}, parameter has {value.shape}")
        m = hyper.beta1 * state.first_moment.get(name, np.zeros_like(value)) + (1.0 - hyper.beta1) * grad
        v = hyper.beta2 * state.second_moment.get(name, np.zeros_like(value)) + (1.0 - hyper.beta2) * (grad * grad)
        first[name], second[name] = m, v
        updated[name] = value - hyper.lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
    return updated, replace(state, first_moment=first, second_moment=second, step_count=t)
