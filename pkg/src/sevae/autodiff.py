"""Reverse-mode automatic differentiation over dense 2-D float64 matrices.

Every value is a 2-D ``numpy`` array.  Operations build a define-by-run tape
of :class:`Node` objects; :func:`backward` walks it once in reverse
topological order and returns gradients keyed by parameter name.

Binary elementwise operations broadcast only along unit axes, i.e. an
``(n, m)`` operand may be combined with ``(1, m)``, ``(n, 1)`` or ``(1, 1)``
operands, and a column vector may be combined with a row vector.
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from sevae.errors import ContractError, DimensionError, DomainError

Gradients = dict  # parameter name -> np.ndarray of the parameter's shape

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def as_matrix(value) -> np.ndarray:
    """Coerce scalars, vectors and matrices to a 2-D float64 array."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


class Node:
    """A value on the tape together with the rule that propagates its gradient."""

    __slots__ = ("value", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents: Sequence["Node"] = (),
                 backward_fn: BackwardFn | None = None, name: str | None = None):
        self.value = as_matrix(value)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() needs a 1x1 value, got {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<{type(self).__name__}{label} shape={self.shape}>"

    def __add__(self, other):
        if isinstance(other, Node):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Node):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(neg(self), float(other))

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Node):
            raise TypeError("division by a Node is not supported")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


class Parameter(Node):
    """A trainable leaf.  Its ``value`` may be replaced by an optimizer."""

    __slots__ = ()

    def __init__(self, value, name: str | None = None):
        super().__init__(value, name=name)
        self.requires_grad = True


def const(value) -> Node:
    """A leaf that receives no gradient."""
    return value if isinstance(value, Node) else Node(value)


def variable(value, name: str | None = None) -> Parameter:
    """An unnamed differentiable leaf, handy for probing gradients."""
    return Parameter(value, name=name)


# ---------------------------------------------------------------------------
# broadcasting helpers

def _broadcast(op: str, a: Node, b: Node) -> tuple[int, int]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(i for i in range(2) if shape[i] == 1 and grad.shape[i] != 1)
    return grad.sum(axis=axes, keepdims=True).reshape(shape)


# ---------------------------------------------------------------------------
# binary elementwise

def add(a: Node, b: Node) -> Node:
    _broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return Node(a.value + b.value, (a, b),
                lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Node, b: Node) -> Node:
    _broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return Node(a.value - b.value, (a, b),
                lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Node, b: Node) -> Node:
    _broadcast("mul", a, b)
    av, bv = a.value, b.value
    return Node(av * bv, (a, b),
                lambda g: (_unbroadcast(g * bv, av.shape),
                           _unbroadcast(g * av, bv.shape)))


def scale(a: Node, c: float) -> Node:
    return Node(a.value * c, (a,), lambda g: (g * c,))


def add_scalar(a: Node, c: float) -> Node:
    return Node(a.value + c, (a,), lambda g: (g,))


# ---------------------------------------------------------------------------
# unary elementwise

def neg(a: Node) -> Node:
    return Node(-a.value, (a,), lambda g: (-g,))


def relu(a: Node) -> Node:
    mask = a.value > 0.0  # subgradient 0 at exactly 0
    return Node(np.maximum(a.value, 0.0), (a,), lambda g: (g * mask,))


def exp(a: Node) -> Node:
    out = np.exp(a.value)
    return Node(out, (a,), lambda g: (g * out,))


def log(a: Node) -> Node:
    x = a.value
    if not np.all(x > 0.0):
        bad = x[~(x > 0.0)].ravel()[0]
        raise DomainError(f"log of non-positive entry {bad!r}")
    return Node(np.log(x), (a,), lambda g: (g / x,))


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)
    return Node(t, (a,), lambda g: (g * (1.0 - t * t),))


def sin(a: Node) -> Node:
    x = a.value
    return Node(np.sin(x), (a,), lambda g: (g * np.cos(x),))


def square(a: Node) -> Node:
    x = a.value
    return Node(x * x, (a,), lambda g: (2.0 * g * x,))


def softplus(a: Node) -> Node:
    x = a.value
    return Node(np.logaddexp(0.0, x), (a,),
                lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * x)),))


_UNARY = {"relu": relu, "exp": exp, "log": log, "tanh": tanh, "sin": sin,
          "square": square, "neg": neg, "softplus": softplus}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(tag: str, *inputs: Node) -> Node:
    """Dispatch an elementwise op by name."""
    if tag in _BINARY:
        if len(inputs) != 2:
            raise ContractError(f"{tag} takes two operands, got {len(inputs)}")
        return _BINARY[tag](*inputs)
    if tag in _UNARY:
        if len(inputs) != 1:
            raise ContractError(f"{tag} takes one operand, got {len(inputs)}")
        return _UNARY[tag](inputs[0])
    raise ContractError(f"unknown elementwise op {tag!r}")


# ---------------------------------------------------------------------------
# reductions

def _check_nonempty(op: str, a: Node) -> None:
    if a.value.size == 0:
        raise DimensionError(f"{op} of empty matrix with shape {a.shape}")


def sum_(a: Node) -> Node:
    _check_nonempty("sum", a)
    shape = a.shape
    return Node(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, shape),))


def mean(a: Node) -> Node:
    _check_nonempty("mean", a)
    shape, n = a.shape, a.value.size
    return Node(a.value.sum() / n, (a,),
                lambda g: (np.broadcast_to(g / n, shape),))


def row_sum(a: Node) -> Node:
    """Sum across columns: (n, m) -> (n, 1)."""
    _check_nonempty("row_sum", a)
    shape = a.shape
    return Node(a.value.sum(axis=1, keepdims=True), (a,),
                lambda g: (np.broadcast_to(g, shape),))


def row_mean(a: Node) -> Node:
    """Mean across columns: (n, m) -> (n, 1)."""
    _check_nonempty("row_mean", a)
    shape, m = a.shape, a.cols
    return Node(a.value.sum(axis=1, keepdims=True) / m, (a,),
                lambda g: (np.broadcast_to(g / m, shape),))


def col_sum(a: Node) -> Node:
    """Sum down rows: (n, m) -> (1, m)."""
    _check_nonempty("col_sum", a)
    shape = a.shape
    return Node(a.value.sum(axis=0, keepdims=True), (a,),
                lambda g: (np.broadcast_to(g, shape),))


def col_mean(a: Node) -> Node:
    """Mean down rows: (n, m) -> (1, m)."""
    _check_nonempty("col_mean", a)
    shape, n = a.shape, a.rows
    return Node(a.value.sum(axis=0, keepdims=True) / n, (a,),
                lambda g: (np.broadcast_to(g / n, shape),))


_REDUCE = {"sum": sum_, "mean": mean, "row_sum": row_sum, "row_mean": row_mean,
           "col_sum": col_sum, "col_mean": col_mean}


def reduce(tag: str, a: Node) -> Node:
    """Dispatch a reduction by name."""
    try:
        fn = _REDUCE[tag]
    except KeyError:
        raise ContractError(f"unknown reduction {tag!r}") from None
    return fn(a)


def logsumexp_rows(a: Node) -> Node:
    """Stable log-sum-exp across columns: (n, m) -> (n, 1)."""
    _check_nonempty("logsumexp_rows", a)
    x = a.value
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    s = e.sum(axis=1, keepdims=True)
    soft = e / s
    return Node(m + np.log(s), (a,), lambda g: (g * soft,))


# ---------------------------------------------------------------------------
# structural

def matmul(a: Node, b: Node) -> Node:
    if a.cols != b.rows:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value
    return Node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Node) -> Node:
    return Node(a.value.T.copy(), (a,), lambda g: (g.T,))


def slice_cols(a: Node, start: int, length: int) -> Node:
    if start < 0 or length < 0 or start + length > a.cols:
        raise DimensionError(
            f"slice_cols: range [{start}, {start + length}) outside {a.cols} columns")
    shape, stop = a.shape, start + length

    def backward_fn(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return Node(a.value[:, start:stop].copy(), (a,), backward_fn)


def concat_cols(parts: Sequence[Node]) -> Node:
    parts = list(parts)
    if not parts:
        raise DimensionError("concat_cols needs at least one part")
    rows = parts[0].rows
    for p in parts[1:]:
        if p.rows != rows:
            raise DimensionError(
                f"concat_cols: row counts differ ({rows} vs {p.rows}, shape {p.shape})")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def backward_fn(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return Node(np.concatenate([p.value for p in parts], axis=1), parts, backward_fn)


def detach(a: Node) -> Node:
    """Same value, no gradient path."""
    return Node(a.value)


def grad_reverse(a: Node, factor: float = 1.0) -> Node:
    """Identity on the forward pass; multiplies the gradient by ``-factor``."""
    return Node(a.value, (a,), lambda g: (-factor * g,))


# ---------------------------------------------------------------------------
# backward pass

def _topological(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _propagate(root: Node) -> tuple[list[Node], dict[int, np.ndarray]]:
    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    order = _topological(root)
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            # arrays are never mutated in place, so views can be stored as-is
            grads[key] = grads[key] + pg if key in grads else pg
    return order, grads


def grad(output: Node, wrt: Iterable[Node]) -> list[np.ndarray]:
    """Gradient of the sum of ``output`` with respect to each node in ``wrt``."""
    _, grads = _propagate(output)
    return [grads.get(id(n), np.zeros(n.shape)) for n in wrt]


def backward(loss: Node,
             params: Mapping[str, Parameter] | Iterable[Parameter] | None = None
             ) -> Gradients:
    """dLoss/dθ for every named parameter reachable from ``loss``.

    When ``params`` is given, the result has exactly those keys and
    unreachable parameters get a zero matrix.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a 1x1 loss, got shape {loss.shape}")
    order, grads = _propagate(loss)
    if params is None:
        return {n.name: grads[id(n)] for n in order
                if isinstance(n, Parameter) and n.name is not None and id(n) in grads}
    items = params.values() if isinstance(params, Mapping) else params
    return {p.name: grads.get(id(p), np.zeros(p.shape)) for p in items}
