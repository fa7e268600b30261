"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

Every node carries a value matrix and a gradient matrix of the same shape.
Ops build the graph dynamically; `backward` on a 1x1 root fills gradients of
all ancestors that require them in one topological sweep.  The graph is meant
to be rebuilt per training step and discarded.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError

LOG_EPS = 1e-12

_TAPE_STACK: list["GraphTape"] = []


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected scalar, vector or matrix, got ndim={arr.ndim}")
    return np.ascontiguousarray(arr)


class DiffNode:
    """One node of the differentiation graph: value, gradient, producing op."""

    __slots__ = ("value", "grad", "requires_grad", "op", "parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = ()):
        self.value = _as_matrix(value)
        self.grad = np.zeros_like(self.value)
        self.requires_grad = bool(requires_grad)
        self.op = op
        self.parents = parents
        self._backward = None
        if _TAPE_STACK:
            _TAPE_STACK[-1].nodes.append(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() needs a 1x1 node, got {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        return f"DiffNode(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class GraphTape:
    """Records nodes created while active; owns a seeded RNG for leaf creation.

    Replaying the same op sequence on a tape with the same seed yields
    bit-identical values.  A tape and its nodes belong to one worker.
    """

    def __init__(self, rng_seed: int = 0):
        self.rng_seed = int(rng_seed)
        self.rng = np.random.default_rng(self.rng_seed)
        self.nodes: list[DiffNode] = []

    def __enter__(self) -> "GraphTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False

    def reset(self) -> None:
        self.nodes.clear()
        self.rng = np.random.default_rng(self.rng_seed)

    def zero_grad(self) -> None:
        for node in self.nodes:
            if node.requires_grad:
                node.zero_grad()

    def randn(self, rows: int, cols: int, requires_grad: bool = False) -> DiffNode:
        return DiffNode(self.rng.standard_normal((rows, cols)),
                        requires_grad=requires_grad, op="randn")


def _result(value, parents, op, backward_fn) -> DiffNode:
    needs = any(p.requires_grad for p in parents)
    out = DiffNode(value, requires_grad=needs, op=op, parents=tuple(parents))
    if needs:
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and grad.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _binary(a: DiffNode, b: DiffNode, op: str):
    try:
        np.broadcast_shapes(a.value.shape, b.value.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.value.shape} and {b.value.shape} "
                         "do not broadcast") from None


def add(a: DiffNode, b: DiffNode) -> DiffNode:
    _binary(a, b, "add")
    out_val = a.value + b.value

    def backward(out):
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(out.grad, b.value.shape)

    return _result(out_val, (a, b), "add", backward)


def sub(a: DiffNode, b: DiffNode) -> DiffNode:
    _binary(a, b, "sub")
    out_val = a.value - b.value

    def backward(out):
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad, a.value.shape)
        if b.requires_grad:
            b.grad -= _unbroadcast(out.grad, b.value.shape)

    return _result(out_val, (a, b), "sub", backward)


def mul(a: DiffNode, b: DiffNode) -> DiffNode:
    _binary(a, b, "mul")
    out_val = a.value * b.value

    def backward(out):
        if a.requires_grad:
            a.grad += _unbroadcast(out.grad * b.value, a.value.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(out.grad * a.value, b.value.shape)

    return _result(out_val, (a, b), "mul", backward)


def scale(x: DiffNode, alpha: float) -> DiffNode:
    out_val = x.value * alpha

    def backward(out):
        if x.requires_grad:
            x.grad += out.grad * alpha

    return _result(out_val, (x,), "scale", backward)


def matmul(a: DiffNode, b: DiffNode) -> DiffNode:
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree, "
                         f"{a.value.shape} x {b.value.shape}")
    out_val = a.value @ b.value

    def backward(out):
        if a.requires_grad:
            a.grad += out.grad @ b.value.T
        if b.requires_grad:
            b.grad += a.value.T @ out.grad

    return _result(out_val, (a, b), "matmul", backward)


def relu(x: DiffNode) -> DiffNode:
    mask = x.value > 0.0
    out_val = np.where(mask, x.value, 0.0)

    def backward(out):
        if x.requires_grad:
            x.grad += out.grad * mask

    return _result(out_val, (x,), "relu", backward)


def sigmoid(x: DiffNode) -> DiffNode:
    v = x.value
    out_val = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                       np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def backward(out):
        if x.requires_grad:
            x.grad += out.grad * out_val * (1.0 - out_val)

    return _result(out_val, (x,), "sigmoid", backward)


def log(x: DiffNode, eps: float = LOG_EPS) -> DiffNode:
    """Natural log of max(x, eps); the clamped region has zero derivative."""
    clamped = np.maximum(x.value, eps)
    out_val = np.log(clamped)
    live = x.value >= eps

    def backward(out):
        if x.requires_grad:
            x.grad += out.grad * np.where(live, 1.0 / clamped, 0.0)

    return _result(out_val, (x,), "log", backward)


def mean(x: DiffNode) -> DiffNode:
    """Mean over all entries, as a 1x1 node."""
    n = x.value.size
    out_val = np.array([[x.value.mean()]])

    def backward(out):
        if x.requires_grad:
            x.grad += out.grad[0, 0] / n

    return _result(out_val, (x,), "mean", backward)


def total(x: DiffNode) -> DiffNode:
    """Sum over all entries, as a 1x1 node."""
    out_val = np.array([[x.value.sum()]])

    def backward(out):
        if x.requires_grad:
            x.grad += out.grad[0, 0]

    return _result(out_val, (x,), "sum", backward)


def gather_per_row(x: DiffNode, cols) -> DiffNode:
    """Pick x[i, cols[i]] for each row i, returning an n x 1 node."""
    cols = np.asarray(cols, dtype=np.intp)
    n = x.value.shape[0]
    if cols.shape != (n,):
        raise ShapeError(f"gather_per_row: need {n} column ids, got {cols.shape}")
    if cols.size and (cols.min() < 0 or cols.max() >= x.value.shape[1]):
        raise ContractError("gather_per_row: column id out of range")
    rows = np.arange(n)
    out_val = x.value[rows, cols].reshape(n, 1)

    def backward(out):
        if x.requires_grad:
            np.add.at(x.grad, (rows, cols), out.grad[:, 0])

    return _result(out_val, (x,), "gather_per_row", backward)


def l2_normalize_rows(x: DiffNode, eps: float = 1e-12) -> DiffNode:
    """Divide each row by max(||row||, eps).  Zero rows pass through as zero."""
    if eps <= 0:
        raise ContractError("l2_normalize_rows: eps must be positive")
    norms = np.linalg.norm(x.value, axis=1, keepdims=True)
    denom = np.maximum(norms, eps)
    out_val = x.value / denom
    live = (norms >= eps)[:, 0]

    def backward(out):
        if not x.requires_grad:
            return
        # live rows: (I - y y^T)/||x|| applied to the upstream gradient;
        # clamped rows reduce to g/eps.
        dot = np.sum(out.grad * out_val, axis=1, keepdims=True)
        radial = np.where(live[:, None], dot * out_val, 0.0)
        x.grad += (out.grad - radial) / denom

    return _result(out_val, (x,), "l2_normalize_rows", backward)


def softmax_rows(logits: DiffNode) -> DiffNode:
    """Row-wise softmax with per-row max subtraction for stability."""
    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out_val = e / e.sum(axis=1, keepdims=True)

    def backward(out):
        if logits.requires_grad:
            dot = np.sum(out.grad * out_val, axis=1, keepdims=True)
            logits.grad += out_val * (out.grad - dot)

    return _result(out_val, (logits,), "softmax_rows", backward)


def grad_reverse(x: DiffNode, lam: float) -> DiffNode:
    """Identity forward; backward multiplies the incoming gradient by -lam."""
    if lam < 0:
        raise ContractError("grad_reverse: lambda must be >= 0")

    def backward(out):
        if x.requires_grad:
            x.grad += out.grad * (-lam)

    return _result(x.value, (x,), "grad_reverse", backward)


def constant(value) -> DiffNode:
    return DiffNode(value, requires_grad=False, op="const")


def detach(x: DiffNode) -> DiffNode:
    """A fresh leaf sharing x's value; gradients stop here."""
    return DiffNode(x.value, requires_grad=False, op="detach")


def backward(root: DiffNode) -> None:
    """Populate gradients of all requires_grad ancestors of a 1x1 root.

    Visits each node exactly once in reverse topological order.  Gradients
    accumulate, so call zero_grad on parameters between passes.
    """
    if root.value.shape != (1, 1):
        raise ContractError(f"backward: root must be 1x1, got {root.value.shape}")
    topo: list[DiffNode] = []
    visited: set[int] = set()
    stack: list[tuple[DiffNode, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited and parent.requires_grad:
                stack.append((parent, False))

    root.grad[...] = 1.0
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node)
