"""A minimal reverse-mode automatic differentiation engine over numpy arrays.

Graphs are rebuilt on every forward pass (tape style). Every op returns a new
DiffNode holding its value and, when any input requires gradients, closures
that map the upstream gradient back onto each parent.
"""

from typing import Callable, Iterable, Sequence, Union

import numpy as np
from scipy import special

from marlcpc.errors import ContractError, NumericalError

ArrayLike = Union[np.ndarray, float, int, Sequence]
SQRT_2PI = np.sqrt(2.0 * np.pi)


class DiffNode:
    """A value in the computation graph.

    Attributes:
        value: the float64 array computed by the forward pass.
        grad: accumulated gradient of the last backward root w.r.t. this node.
        requires_grad: whether gradients flow into this node.
        parents: (node, vjp) pairs mapping this node's gradient onto each parent.
        op: the name of the op that created the node.
    """

    value: np.ndarray
    grad: np.ndarray
    requires_grad: bool
    parents: tuple
    op: str

    __array_priority__ = 100
    __array_ufunc__ = None

    def __init__(
        self,
        value: ArrayLike,
        requires_grad: bool = False,
        parents: tuple = (),
        op: str = "leaf",
    ):
        value = np.asarray(value, dtype=np.float64)
        checkFinite(value, op)
        self.value = value
        self._grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.op = op

    def __repr__(self) -> str:
        return f"DiffNode(op={self.op}, shape={self.value.shape})"

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, value: np.ndarray) -> None:
        self._grad = value

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return len(self.parents) == 0

    def zero_grad(self) -> None:
        self._grad = None

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def checkFinite(array: np.ndarray, op: str) -> None:
    """Raises a NumericalError if an array holds NaN or Inf values."""
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"Non-finite value produced by op '{op}'")


def asNode(x: Union[DiffNode, ArrayLike]) -> DiffNode:
    """Wraps arrays and scalars as constant nodes, passes nodes through."""
    if isinstance(x, DiffNode):
        return x
    return DiffNode(x)


def parameter(value: ArrayLike) -> DiffNode:
    """Creates a trainable leaf node."""
    value = np.array(value, dtype=np.float64)
    return DiffNode(value, requires_grad=True, op="parameter")


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sums a broadcast gradient back down to the shape of the original operand."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(value: np.ndarray, op: str, edges: Iterable[tuple]) -> DiffNode:
    """Builds an op's output node, keeping only the edges that carry gradient."""
    parents = tuple((node, vjp) for node, vjp in edges if node.requires_grad)
    return DiffNode(value, requires_grad=len(parents) > 0, parents=parents, op=op)


def add(a, b) -> DiffNode:
    a, b = asNode(a), asNode(b)
    return _result(
        a.value + b.value,
        "add",
        [
            (a, lambda g: unbroadcast(g, a.shape)),
            (b, lambda g: unbroadcast(g, b.shape)),
        ],
    )


def sub(a, b) -> DiffNode:
    a, b = asNode(a), asNode(b)
    return _result(
        a.value - b.value,
        "sub",
        [
            (a, lambda g: unbroadcast(g, a.shape)),
            (b, lambda g: unbroadcast(-g, b.shape)),
        ],
    )


def mul(a, b) -> DiffNode:
    a, b = asNode(a), asNode(b)
    return _result(
        a.value * b.value,
        "mul",
        [
            (a, lambda g: unbroadcast(g * b.value, a.shape)),
            (b, lambda g: unbroadcast(g * a.value, b.shape)),
        ],
    )


def matmul(a, b) -> DiffNode:
    """Matrix product of a (n, k) node with a (k, m) node."""
    a, b = asNode(a), asNode(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _result(
        a.value @ b.value,
        "matmul",
        [
            (a, lambda g: g @ b.value.T),
            (b, lambda g: a.value.T @ g),
        ],
    )


def square(x) -> DiffNode:
    x = asNode(x)
    return _result(x.value**2, "square", [(x, lambda g: 2.0 * x.value * g)])


def exp(x) -> DiffNode:
    x = asNode(x)
    value = np.exp(x.value)
    return _result(value, "exp", [(x, lambda g: g * value)])


def log(x) -> DiffNode:
    x = asNode(x)
    if np.any(x.value <= 0):
        raise NumericalError("log of a non-positive value")
    return _result(np.log(x.value), "log", [(x, lambda g: g / x.value)])


def tanh(x) -> DiffNode:
    x = asNode(x)
    value = np.tanh(x.value)
    return _result(value, "tanh", [(x, lambda g: g * (1.0 - value**2))])


def gelu(x) -> DiffNode:
    """Exact GELU, x * Phi(x) with Phi the standard normal CDF."""
    x = asNode(x)
    cdf = special.ndtr(x.value)
    pdf = np.exp(-0.5 * x.value**2) / SQRT_2PI
    return _result(
        x.value * cdf, "gelu", [(x, lambda g: g * (cdf + x.value * pdf))]
    )


def sigmoid(x) -> DiffNode:
    x = asNode(x)
    value = special.expit(x.value)
    return _result(value, "sigmoid", [(x, lambda g: g * value * (1.0 - value))])


def logSigmoid(x) -> DiffNode:
    """log(sigmoid(x)), stable for large |x|."""
    x = asNode(x)
    value = -np.logaddexp(0.0, -x.value)
    return _result(
        value, "log_sigmoid", [(x, lambda g: g * special.expit(-x.value))]
    )


def softmax(x) -> DiffNode:
    """Softmax over the last axis."""
    x = asNode(x)
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return value * (g - (g * value).sum(axis=-1, keepdims=True))

    return _result(value, "softmax", [(x, vjp)])


def logSoftmax(x) -> DiffNode:
    """Log-softmax over the last axis."""
    x = asNode(x)
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    value = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(value)

    def vjp(g):
        return g - probs * g.sum(axis=-1, keepdims=True)

    return _result(value, "log_softmax", [(x, vjp)])


def total(x, axis: int = None) -> DiffNode:
    """Sums a node over one axis, or over all of its entries."""
    x = asNode(x)
    value = x.value.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, x.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), x.shape).copy()

    return _result(value, "sum", [(x, vjp)])


def mean(x, axis: int = None) -> DiffNode:
    x = asNode(x)
    count = x.value.size if axis is None else x.shape[axis]
    return mul(total(x, axis=axis), 1.0 / count)


def reshape(x, shape: tuple) -> DiffNode:
    x = asNode(x)
    return _result(
        x.value.reshape(shape), "reshape", [(x, lambda g: g.reshape(x.shape))]
    )


def concat(nodes: Sequence, axis: int = -1) -> DiffNode:
    """Concatenates nodes along an axis."""
    nodes = [asNode(n) for n in nodes]
    value = np.concatenate([n.value for n in nodes], axis=axis)
    bounds = np.cumsum([0] + [n.shape[axis] for n in nodes])

    def slicer(start: int, stop: int) -> Callable:
        def vjp(g):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            return g[tuple(index)]

        return vjp

    edges = [(n, slicer(bounds[i], bounds[i + 1])) for i, n in enumerate(nodes)]
    return _result(value, "concat", edges)


def columns(x, start: int, stop: int) -> DiffNode:
    """Selects the columns [start, stop) of the last axis."""
    x = asNode(x)

    def vjp(g):
        full = np.zeros_like(x.value)
        full[..., start:stop] = g
        return full

    return _result(x.value[..., start:stop], "columns", [(x, vjp)])


def take(x, indices: np.ndarray) -> DiffNode:
    """Picks one entry per row: x[b, indices[b]] for a (B, K) node."""
    x = asNode(x)
    indices = np.asarray(indices, dtype=np.int64)
    rows = np.arange(x.shape[0])
    if indices.shape != (x.shape[0],):
        raise ContractError(f"take expects {x.shape[0]} indices, got {indices.shape}")

    def vjp(g):
        full = np.zeros_like(x.value)
        full[rows, indices] = g
        return full

    return _result(x.value[rows, indices], "take", [(x, vjp)])


def clip(x, low: float, high: float) -> DiffNode:
    """Clamps values to [low, high]; gradient passes only inside the range."""
    x = asNode(x)
    inside = (x.value >= low) & (x.value <= high)
    return _result(np.clip(x.value, low, high), "clip", [(x, lambda g: g * inside)])


def minimum(a, b) -> DiffNode:
    """Elementwise minimum; ties route the gradient to the first argument."""
    a, b = asNode(a), asNode(b)
    pick_a = a.value <= b.value
    return _result(
        np.where(pick_a, a.value, b.value),
        "minimum",
        [
            (a, lambda g: unbroadcast(g * pick_a, a.shape)),
            (b, lambda g: unbroadcast(g * ~pick_a, b.shape)),
        ],
    )


def stopGradient(x) -> DiffNode:
    """Returns a constant copy of a node: same value, no gradient upstream."""
    x = asNode(x)
    return DiffNode(x.value.copy(), requires_grad=False, op="stop_gradient")


def topologicalOrder(root: DiffNode) -> list:
    """Orders the gradient-carrying subgraph under root, parents before children."""
    order = list()
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: DiffNode) -> None:
    """Back-propagates from a scalar root.

    Leaf nodes accumulate into their existing .grad, so a second call without
    zeroing adds up. Intermediate nodes hold the gradient of the latest pass.

    Args:
        root: a scalar DiffNode.

    Raises:
        ContractError: if root is not a scalar.
        NumericalError: if any gradient becomes non-finite.
    """
    if root.value.size != 1:
        raise ContractError(f"backward requires a scalar root, got {root.shape}")
    if not root.requires_grad:
        return

    order = topologicalOrder(root)
    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        checkFinite(g, f"grad of {node.op}")
        if node.is_leaf:
            node.grad = node.grad + g
            continue
        node.grad = g
        for parent, vjp in node.parents:
            contribution = vjp(g)
            key = id(parent)
            grads[key] = contribution if key not in grads else grads[key] + contribution
