"""Dense float64 tensors with a tape-based reverse-mode gradient engine.

Everything in this package differentiates through the same mechanism: ops
compute their result with numpy, then append a node (inputs, output, one
adjoint closure per input) to the innermost active ``Tape``. ``backward``
replays the tape in reverse, accumulating gradients into every tensor that
requires them. Running an op with no tape active is plain forward
evaluation, which is what inference and finite-difference probing use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError


class Tensor:
    """Row-major float64 array plus an optional same-shape gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


@dataclass
class Parameter:
    """A named leaf tensor the optimizer may update.

    Frozen parameters still receive gradients during backward but must be
    skipped by any optimizer step.
    """

    value: Tensor
    name: str = ""
    frozen: bool = False

    def __post_init__(self):
        if not isinstance(self.value, Tensor):
            self.value = Tensor(self.value)
        self.value.requires_grad = True


class Node:
    """One executed op: its inputs, output, and per-input adjoint rules."""

    __slots__ = ("op", "inputs", "output", "grad_fns")

    def __init__(self, op, inputs, output, grad_fns):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.grad_fns = grad_fns


class Tape:
    """Append-only record of executed ops; read-only once backward starts.

    Use as a context manager around the forward pass::

        with Tape() as tape:
            loss = ...
        backward(loss, tape)

    A tape and the tensors flowing through it form a single-threaded unit
    of work; independent units (folds, workers) each get their own tape.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE.pop()
        return False


_ACTIVE: list[Tape] = []


def record(op: str, inputs: tuple, out_data: np.ndarray, grad_fns: tuple) -> Tensor:
    """Wrap a numpy result as a Tensor and register its adjoints.

    ``grad_fns[i]`` maps the output adjoint to the adjoint of ``inputs[i]``;
    pass None for inputs that never need gradients. Recording only happens
    when a tape is active and some input requires a gradient.
    """
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs and _ACTIVE:
        _ACTIVE[-1].nodes.append(Node(op, tuple(inputs), out, tuple(grad_fns)))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad tensor on the tape.

    Tensors used several times accumulate once per usage. Gradient slots are
    not cleared first; callers reset them between steps.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.output.grad
        if g is None:
            continue
        for t, fn in zip(node.inputs, node.grad_fns):
            if fn is None or not t.requires_grad:
                continue
            piece = fn(g)
            t.grad = piece if t.grad is None else t.grad + piece


def zero_grads(params) -> None:
    for p in params:
        p.value.grad = None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors with recorded adjoints."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul needs (m,k) x (k,n), got {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return record(
        "matmul",
        (a, b),
        ad @ bd,
        (lambda g: g @ bd.T, lambda g: ad.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got {a.shape}")
    return record("transpose", (a,), a.data.T.copy(), (lambda g: g.T,))


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs identical shapes, got {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("add", a, b)
    return record("add", (a, b), a.data + b.data, (lambda g: g, lambda g: g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("sub", a, b)
    return record("sub", (a, b), a.data - b.data, (lambda g: g, lambda g: -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return record("mul", (a, b), ad * bd, (lambda g: g * bd, lambda g: g * ad))


def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    """Pointwise add/sub/mul on same-shape tensors."""
    table = {"add": add, "sub": sub, "mul": mul}
    if op not in table:
        raise ContractError(f"unknown elementwise op {op!r}, expected one of {sorted(table)}")
    return table[op](a, b)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1-D bias to a vector or to every row of a 2-D batch."""
    x, bias = _as_tensor(x), _as_tensor(bias)
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise DimensionError(f"add_bias needs trailing dims to agree, got {x.shape} + {bias.shape}")
    if x.ndim == 1:
        return record("add_bias", (x, bias), x.data + bias.data, (lambda g: g, lambda g: g))
    if x.ndim == 2:
        return record(
            "add_bias",
            (x, bias),
            x.data + bias.data,
            (lambda g: g, lambda g: g.sum(axis=0)),
        )
    raise DimensionError(f"add_bias expects a 1-D or 2-D input, got {x.shape}")


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a compile-time constant (no gradient for the constant)."""
    x = _as_tensor(x)
    c = float(c)
    return record("scale", (x,), x.data * c, (lambda g: g * c,))


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0.0
    return record("relu", (x,), np.where(mask, x.data, 0.0), (lambda g: g * mask,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    old = x.shape
    out = np.reshape(x.data, shape)
    return record("reshape", (x,), out, (lambda g: g.reshape(old),))


def sum_all(x: Tensor) -> Tensor:
    """Sum every entry down to a scalar."""
    x = _as_tensor(x)
    shape = x.shape
    return record("sum_all", (x,), np.asarray(x.data.sum()), (lambda g: np.broadcast_to(g, shape),))


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax along the last axis, stabilized by per-row max subtraction.

    Each output row sums to 1 and every entry lies in (0, 1). Works on any
    rank >= 1; for a matrix the rows are the usual matrix rows.
    """
    x = _as_tensor(x)
    if x.ndim < 1:
        raise DimensionError("softmax_rows needs at least one axis")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_x(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return y * (g - inner)

    return record("softmax_rows", (x,), y, (grad_x,))


def mean_last(x: Tensor) -> Tensor:
    """Mean along the last axis (a matrix collapses to its vector of row means)."""
    x = _as_tensor(x)
    if x.ndim < 1:
        raise DimensionError("mean_last needs at least one axis")
    n = x.shape[-1]
    return record(
        "mean_last",
        (x,),
        x.data.mean(axis=-1),
        (lambda g: np.broadcast_to(g[..., None] / n, x.shape).copy(),),
    )


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform initialization in +-1/sqrt(fan_in)."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def first_nonfinite_op(tape: Tape) -> str | None:
    """Name of the earliest tape node whose output holds a NaN or inf."""
    for node in tape.nodes:
        if not np.isfinite(node.output.data).all():
            return node.op
    return None
