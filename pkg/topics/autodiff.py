"""
Reverse-mode differentiation over dense numpy expressions.

A ``Graph`` is an append-only list of nodes. Leaves are named inputs, named
trainable parameters or constants; every other node applies one operation to
earlier nodes. Gradients are built symbolically: ``gradients`` appends new
nodes to the same graph, so a gradient is itself differentiable. That is what
lets the critic's input gradient appear inside a loss (gradient penalty).

Values are never stored on the graph. ``evaluate`` takes the bindings for the
named leaves and computes the requested nodes, so one graph can be evaluated
any number of times with different data.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .exceptions import GraphError, NonFiniteError, ShapeError

LEAF_KINDS = frozenset({"input", "param", "constant"})
LEAKY_SLOPE = 0.2


@dataclass(frozen=True, eq=False)
class Node:
    graph: "Graph"
    index: int
    kind: str
    parents: tuple[int, ...] = ()
    attrs: tuple = ()
    name: str | None = None

    def attr(self, key, default=None):
        return dict(self.attrs).get(key, default)

    @property
    def is_leaf(self) -> bool:
        return self.kind in LEAF_KINDS

    def describe(self) -> str:
        label = f"node {self.index} ({self.kind}"
        if self.name:
            label += f" '{self.name}'"
        return label + ")"

    def __repr__(self):
        return f"<Node {self.describe()}>"

    # Operator sugar; python numbers become affine maps or constants.
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return self.graph.affine(self, 1.0, float(other))
        return self.graph.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self.graph.affine(self, 1.0, -float(other))
        return self.graph.sub(self, other)

    def __rsub__(self, other):
        return self.graph.affine(self, -1.0, float(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.graph.affine(self, float(other))
        return self.graph.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self.graph.affine(self, 1.0 / float(other))
        return self.graph.div(self, other)

    def __neg__(self):
        return self.graph.affine(self, -1.0)

    def __matmul__(self, other):
        return self.graph.matmul(self, other)


@dataclass(frozen=True)
class BatchNormNodes:
    output: Node
    mean: Node
    var: Node


class Graph:
    """Append-only expression graph; parents always precede their children."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._leaves: dict[str, Node] = {}
        self._constants: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self.nodes)

    def _append(self, kind: str, parents: Sequence[Node] = (), name: str | None = None, **attrs) -> Node:
        for parent in parents:
            if not isinstance(parent, Node) or parent.graph is not self:
                raise GraphError(f"{kind}: operand {parent!r} does not belong to this graph")
        node = Node(
            graph=self,
            index=len(self.nodes),
            kind=kind,
            parents=tuple(p.index for p in parents),
            attrs=tuple(sorted(attrs.items())),
            name=name,
        )
        self.nodes.append(node)
        return node

    # ----- leaves -----
    def _leaf(self, kind: str, name: str) -> Node:
        existing = self._leaves.get(name)
        if existing is not None:
            if existing.kind != kind:
                raise GraphError(f"leaf '{name}' already declared as {existing.kind}")
            return existing
        node = self._append(kind, name=name)
        self._leaves[name] = node
        return node

    def input(self, name: str) -> Node:
        return self._leaf("input", name)

    def param(self, name: str) -> Node:
        return self._leaf("param", name)

    def constant(self, value, name: str | None = None) -> Node:
        node = self._append("constant", name=name)
        self._constants[node.index] = np.array(value, dtype=np.float64)
        return node

    def lift(self, value) -> Node:
        return value if isinstance(value, Node) else self.constant(value)

    @property
    def inputs(self) -> dict[str, Node]:
        return {name: n for name, n in self._leaves.items() if n.kind == "input"}

    @property
    def parameters(self) -> dict[str, Node]:
        return {name: n for name, n in self._leaves.items() if n.kind == "param"}

    # ----- elementwise and linear algebra -----
    def add(self, a, b):
        return self._append("add", (a, self.lift(b)))

    def sub(self, a, b):
        return self._append("sub", (a, self.lift(b)))

    def mul(self, a, b):
        return self._append("mul", (a, self.lift(b)))

    def div(self, a, b):
        return self._append("div", (a, self.lift(b)))

    def safe_div(self, a, b):
        """a / b, with zero wherever b is zero."""
        return self._append("safe_div", (a, self.lift(b)))

    def affine(self, a, scale: float = 1.0, shift: float = 0.0):
        return self._append("affine", (a,), scale=float(scale), shift=float(shift))

    def scale(self, a, factor: float):
        return self.affine(a, factor)

    def matmul(self, a, b):
        return self._append("matmul", (a, b))

    def transpose(self, a):
        return self._append("transpose", (a,))

    def bias_add(self, a, bias):
        return self._append("bias_add", (a, bias))

    def concat(self, a, b):
        return self._append("concat", (a, b))

    # ----- nonlinearities -----
    def sigmoid(self, a):
        return self._append("sigmoid", (a,))

    def leaky_relu(self, a, slope: float = LEAKY_SLOPE):
        return self._append("leaky_relu", (a,), slope=float(slope))

    def softmax(self, a):
        return self._append("softmax", (a,))

    def log(self, a):
        return self._append("log", (a,))

    def exp(self, a):
        return self._append("exp", (a,))

    def sqrt(self, a):
        return self._append("sqrt", (a,))

    def square(self, a):
        return self._append("square", (a,))

    def clip_lower(self, a, bound: float):
        """max(a, bound); gradient flows only where a strictly exceeds bound."""
        return self._append("clip_lower", (a,), bound=float(bound))

    def clip_upper(self, a, bound: float):
        return -self.clip_lower(-a, -float(bound))

    def l2_norm(self, a):
        """Euclidean norm over the last axis, keeping that axis with size 1."""
        return self._append("l2_norm", (a,))

    # ----- reductions -----
    def sum(self, a, axis: int | None = None, keepdims: bool = False):
        return self._append("sum", (a,), axis=axis, keepdims=keepdims)

    def mean(self, a, axis: int | None = None, keepdims: bool = False):
        return self._append("mean", (a,), axis=axis, keepdims=keepdims)

    def zeros_like(self, a):
        return self._append("zeros_like", (a,))

    def require_batch(self, a, minimum: int = 2):
        return self._append("require_batch", (a,), minimum=int(minimum))

    def batch_norm(self, x, gain, shift, epsilon: float) -> BatchNormNodes:
        """Training-mode batch normalization over the rows of ``x``."""
        x = self.require_batch(x, 2)
        mean = self.mean(x, axis=0, keepdims=True)
        centered = self.sub(x, mean)
        var = self.mean(self.square(centered), axis=0, keepdims=True)
        normalized = self.div(centered, self.sqrt(self.affine(var, 1.0, epsilon)))
        out = self.bias_add(self.mul(normalized, gain), shift)
        return BatchNormNodes(output=out, mean=mean, var=var)

    def batch_norm_inference(self, x, gain, shift, running_mean, running_var, epsilon: float) -> Node:
        normalized = self.div(self.sub(x, running_mean), self.sqrt(self.affine(running_var, 1.0, epsilon)))
        return self.bias_add(self.mul(normalized, gain), shift)

    # ----- differentiation -----
    def gradients(self, output: Node, wrt: Sequence[Node]) -> list[Node]:
        """Symbolic gradients of the scalar ``output`` with respect to ``wrt``."""
        targets = {n.index for n in wrt}
        reaches = set()
        for node in self.nodes[: output.index + 1]:
            if node.index in targets or any(p in reaches for p in node.parents):
                reaches.add(node.index)
        ancestors = self._ancestors([output])
        relevant = reaches & ancestors

        pending: dict[int, list[Node]] = {output.index: [self._append("seed", (output,))]}
        totals: dict[int, Node] = {}
        for index in sorted(relevant, reverse=True):
            contributions = pending.pop(index, None)
            if not contributions:
                continue
            total = contributions[0]
            for extra in contributions[1:]:
                total = self.add(total, extra)
            totals[index] = total
            node = self.nodes[index]
            if node.is_leaf:
                continue
            rule = _GRADIENTS.get(node.kind)
            if rule is None:
                raise GraphError(f"no gradient rule for {node.describe()}")
            for parent_index, grad in zip(node.parents, rule(self, node, total)):
                if grad is not None and parent_index in relevant:
                    pending.setdefault(parent_index, []).append(grad)
        return [totals.get(n.index) or self.zeros_like(n) for n in wrt]

    def _ancestors(self, outputs: Sequence[Node]) -> set[int]:
        seen: set[int] = set()
        stack = [n.index for n in outputs]
        while stack:
            index = stack.pop()
            if index in seen:
                continue
            seen.add(index)
            stack.extend(self.nodes[index].parents)
        return seen


# ---------------------------------------------------------------------------
# forward rules


def _reduced_count(ref: np.ndarray, axis) -> int:
    if axis is None:
        return ref.size
    return ref.shape[axis]


def _expand(g: np.ndarray, ref: np.ndarray, axis, keepdims) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, ref.shape)


def _sum_to(a: np.ndarray, shape: tuple) -> np.ndarray:
    if a.shape == shape:
        return a
    lead = a.ndim - len(shape)
    out = a.sum(axis=tuple(range(lead))) if lead > 0 else a
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and out.shape[i] != 1)
    if axes:
        out = out.sum(axis=axes, keepdims=True)
    return out.reshape(shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = np.exp(x - x.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def _matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _bias_add(a, b):
    if b.ndim != 1 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"bias of shape {b.shape} does not match {a.shape}")
    return a + b


def _broadcasting(op):
    def apply(a, b):
        np.broadcast_shapes(a.shape, b.shape)
        return op(a, b)

    return apply


def _safe_div(a, b):
    shape = np.broadcast_shapes(a.shape, b.shape)
    zero = b == 0
    out = np.divide(a, np.where(zero, 1.0, b))
    return np.where(np.broadcast_to(zero, shape), 0.0, out)


def _concat(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"cannot concatenate {a.shape} with {b.shape}")
    return np.concatenate([a, b], axis=1)


def _take_cols(g, a, b, part):
    width = a.shape[1]
    return g[:, :width] if part == 0 else g[:, width:]


def _seed(output):
    if output.size != 1:
        raise GraphError(f"differentiated output must be scalar, got shape {output.shape}")
    return np.ones_like(output)


def _require_batch(a, minimum):
    if a.ndim < 1 or a.shape[0] < minimum:
        raise ShapeError(f"batch statistics need at least {minimum} rows, got {a.shape[0] if a.ndim else 0}")
    return a


_FORWARD: dict[str, Callable] = {
    "add": lambda v, at: _broadcasting(np.add)(*v),
    "sub": lambda v, at: _broadcasting(np.subtract)(*v),
    "mul": lambda v, at: _broadcasting(np.multiply)(*v),
    "div": lambda v, at: _broadcasting(np.divide)(*v),
    "safe_div": lambda v, at: _safe_div(*v),
    "affine": lambda v, at: v[0] * at["scale"] + at["shift"],
    "matmul": lambda v, at: _matmul(*v),
    "transpose": lambda v, at: v[0].T,
    "bias_add": lambda v, at: _bias_add(*v),
    "concat": lambda v, at: _concat(*v),
    "take_cols": lambda v, at: _take_cols(*v, at["part"]),
    "sigmoid": lambda v, at: _sigmoid(v[0]),
    "leaky_relu": lambda v, at: np.where(v[0] > 0, v[0], at["slope"] * v[0]),
    "leaky_mask": lambda v, at: np.where(v[0] > 0, 1.0, at["slope"]),
    "softmax": lambda v, at: _softmax(v[0]),
    "log": lambda v, at: np.log(v[0]),
    "exp": lambda v, at: np.exp(v[0]),
    "sqrt": lambda v, at: np.sqrt(v[0]),
    "square": lambda v, at: v[0] * v[0],
    "clip_lower": lambda v, at: np.maximum(v[0], at["bound"]),
    "step_mask": lambda v, at: (v[0] > at["bound"]).astype(np.float64),
    "l2_norm": lambda v, at: np.sqrt(np.sum(v[0] * v[0], axis=-1, keepdims=True)),
    "sum": lambda v, at: np.sum(v[0], axis=at["axis"], keepdims=at["keepdims"]),
    "mean": lambda v, at: np.mean(v[0], axis=at["axis"], keepdims=at["keepdims"]),
    "expand": lambda v, at: _expand(v[0], v[1], at["axis"], at["keepdims"]),
    "spread": lambda v, at: _expand(v[0], v[1], at["axis"], at["keepdims"]) / _reduced_count(v[1], at["axis"]),
    "sum_like": lambda v, at: _sum_to(v[0], v[1].shape),
    "broadcast_like": lambda v, at: np.broadcast_to(v[0], v[1].shape),
    "zeros_like": lambda v, at: np.zeros_like(v[0]),
    "seed": lambda v, at: _seed(v[0]),
    "require_batch": lambda v, at: _require_batch(v[0], at["minimum"]),
}


# ---------------------------------------------------------------------------
# gradient rules: (graph, node, upstream gradient) -> one entry per parent


def _parents(graph: Graph, node: Node) -> list[Node]:
    return [graph.nodes[i] for i in node.parents]


def _sum_like(graph: Graph, g: Node, ref: Node) -> Node:
    return graph._append("sum_like", (g, ref))


def _grad_add(graph, node, g):
    a, b = _parents(graph, node)
    return [_sum_like(graph, g, a), _sum_like(graph, g, b)]


def _grad_sub(graph, node, g):
    a, b = _parents(graph, node)
    return [_sum_like(graph, g, a), _sum_like(graph, graph.affine(g, -1.0), b)]


def _grad_mul(graph, node, g):
    a, b = _parents(graph, node)
    return [_sum_like(graph, graph.mul(g, b), a), _sum_like(graph, graph.mul(g, a), b)]


def _grad_div(graph, node, g):
    a, b = _parents(graph, node)
    return [
        _sum_like(graph, graph.div(g, b), a),
        _sum_like(graph, graph.affine(graph.div(graph.mul(g, node), b), -1.0), b),
    ]


def _grad_safe_div(graph, node, g):
    a, b = _parents(graph, node)
    return [
        _sum_like(graph, graph.safe_div(g, b), a),
        _sum_like(graph, graph.affine(graph.safe_div(graph.mul(g, node), b), -1.0), b),
    ]


def _grad_matmul(graph, node, g):
    a, b = _parents(graph, node)
    return [graph.matmul(g, graph.transpose(b)), graph.matmul(graph.transpose(a), g)]


def _grad_bias_add(graph, node, g):
    return [g, graph.sum(g, axis=0)]


def _grad_concat(graph, node, g):
    a, b = _parents(graph, node)
    return [
        graph._append("take_cols", (g, a, b), part=0),
        graph._append("take_cols", (g, a, b), part=1),
    ]


def _grad_take_cols(graph, node, g):
    _, a, b = _parents(graph, node)
    if node.attr("part") == 0:
        return [graph.concat(g, graph.zeros_like(b)), None, None]
    return [graph.concat(graph.zeros_like(a), g), None, None]


def _grad_sigmoid(graph, node, g):
    return [graph.mul(g, graph.mul(node, graph.affine(node, -1.0, 1.0)))]


def _grad_leaky_relu(graph, node, g):
    (a,) = _parents(graph, node)
    return [graph.mul(g, graph._append("leaky_mask", (a,), slope=node.attr("slope")))]


def _grad_softmax(graph, node, g):
    inner = graph.sum(graph.mul(g, node), axis=-1, keepdims=True)
    return [graph.mul(node, graph.sub(g, inner))]


def _grad_log(graph, node, g):
    (a,) = _parents(graph, node)
    return [graph.div(g, a)]


def _grad_sqrt(graph, node, g):
    return [graph.safe_div(graph.affine(g, 0.5), node)]


def _grad_square(graph, node, g):
    (a,) = _parents(graph, node)
    return [graph.mul(g, graph.affine(a, 2.0))]


def _grad_clip_lower(graph, node, g):
    (a,) = _parents(graph, node)
    return [graph.mul(g, graph._append("step_mask", (a,), bound=node.attr("bound")))]


def _grad_l2_norm(graph, node, g):
    (a,) = _parents(graph, node)
    # zero vectors get zero gradient
    return [graph.mul(g, graph.safe_div(a, node))]


def _grad_sum(graph, node, g):
    (a,) = _parents(graph, node)
    return [graph._append("expand", (g, a), axis=node.attr("axis"), keepdims=node.attr("keepdims"))]


def _grad_mean(graph, node, g):
    (a,) = _parents(graph, node)
    return [graph._append("spread", (g, a), axis=node.attr("axis"), keepdims=node.attr("keepdims"))]


def _grad_expand(graph, node, g):
    return [graph.sum(g, axis=node.attr("axis"), keepdims=node.attr("keepdims")), None]


def _grad_spread(graph, node, g):
    return [graph.mean(g, axis=node.attr("axis"), keepdims=node.attr("keepdims")), None]


def _grad_sum_like(graph, node, g):
    a, _ = _parents(graph, node)
    return [graph._append("broadcast_like", (g, a)), None]


def _grad_broadcast_like(graph, node, g):
    a, _ = _parents(graph, node)
    return [_sum_like(graph, g, a), None]


def _no_gradient(graph, node, g):
    return [None] * len(node.parents)


_GRADIENTS: dict[str, Callable] = {
    "add": _grad_add,
    "sub": _grad_sub,
    "mul": _grad_mul,
    "div": _grad_div,
    "safe_div": _grad_safe_div,
    "affine": lambda graph, node, g: [graph.affine(g, node.attr("scale"))],
    "matmul": _grad_matmul,
    "transpose": lambda graph, node, g: [graph.transpose(g)],
    "bias_add": _grad_bias_add,
    "concat": _grad_concat,
    "take_cols": _grad_take_cols,
    "sigmoid": _grad_sigmoid,
    "leaky_relu": _grad_leaky_relu,
    "softmax": _grad_softmax,
    "log": _grad_log,
    "exp": lambda graph, node, g: [graph.mul(g, node)],
    "sqrt": _grad_sqrt,
    "square": _grad_square,
    "clip_lower": _grad_clip_lower,
    "l2_norm": _grad_l2_norm,
    "sum": _grad_sum,
    "mean": _grad_mean,
    "expand": _grad_expand,
    "spread": _grad_spread,
    "sum_like": _grad_sum_like,
    "broadcast_like": _grad_broadcast_like,
    "require_batch": lambda graph, node, g: [g],
    "leaky_mask": _no_gradient,
    "step_mask": _no_gradient,
    "zeros_like": _no_gradient,
    "seed": _no_gradient,
}


# ---------------------------------------------------------------------------
# public operations


def evaluate(graph: Graph, bindings: Mapping[str, np.ndarray], outputs):
    """Compute ``outputs`` (a node, a sequence of nodes or a name->node mapping)."""
    if isinstance(outputs, Node):
        targets = [outputs]
    elif isinstance(outputs, Mapping):
        targets = list(outputs.values())
    else:
        targets = list(outputs)

    needed = graph._ancestors(targets)
    values: dict[int, np.ndarray] = {}
    with np.errstate(all="ignore"):
        for index in sorted(needed):
            node = graph.nodes[index]
            if node.kind == "constant":
                values[index] = graph._constants[index]
                continue
            if node.kind in LEAF_KINDS:
                if node.name not in bindings:
                    raise GraphError(f"no binding for {node.describe()}")
                value = np.asarray(bindings[node.name], dtype=np.float64)
            else:
                args = [values[p] for p in node.parents]
                try:
                    value = np.asarray(_FORWARD[node.kind](args, dict(node.attrs)), dtype=np.float64)
                except ShapeError as exc:
                    raise ShapeError(f"{node.describe()}: {exc}") from exc
                except ValueError as exc:
                    shapes = ", ".join(str(a.shape) for a in args)
                    raise ShapeError(f"{node.describe()} with operands {shapes}: {exc}") from exc
            if not np.all(np.isfinite(value)):
                raise NonFiniteError(f"non-finite value at {node.describe()}")
            values[index] = value

    if isinstance(outputs, Node):
        return values[outputs.index]
    if isinstance(outputs, Mapping):
        return {key: values[n.index] for key, n in outputs.items()}
    return [values[n.index] for n in targets]


def backward(graph: Graph, output: Node, bindings: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Gradients of a scalar output for every trainable leaf of the graph."""
    params = graph.parameters
    grads = graph.gradients(output, list(params.values()))
    values = evaluate(graph, bindings, dict(zip(params.keys(), grads)))
    return {name: np.array(v, dtype=np.float64) for name, v in values.items()}


def input_gradient_node(graph: Graph, output: Node, leaf: Node) -> Node:
    """A node evaluating to d(output)/d(leaf); zeros when output ignores the leaf."""
    if not leaf.is_leaf:
        raise GraphError(f"{leaf.describe()} is not a leaf")
    return graph.gradients(output, [leaf])[0]


def finite_difference_gradient(f: Callable[[np.ndarray], float], point, eps: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of the gradient of ``f`` at ``point``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    point = np.array(point, dtype=np.float64)
    grad = np.zeros_like(point)
    flat = point.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        upper = float(f(point))
        flat[i] = original - eps
        lower = float(f(point))
        flat[i] = original
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise NonFiniteError(f"function is not finite around coordinate {i}")
        out[i] = (upper - lower) / (2.0 * eps)
    return grad
