"""Tensor type and the reverse-mode graph.

Every differentiable op creates a :class:`Node` stamped with a global, strictly
increasing sequence number. ``backward`` collects the nodes reachable from the
loss and replays them in decreasing sequence order, which is exactly reverse
execution order. Each node is visited once and gradient contributions are summed
in a fixed order, so repeated backward passes are bit-identical.
"""
from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ..errors import NumericError, UsageError

_PRECISIONS = {32: np.float32, 64: np.float64}
_dtype: type = np.float32
_grad_enabled = True
_seq = itertools.count()


def set_precision(bits: int) -> None:
    """Select the global float width (32 for training, 64 for verification)."""
    global _dtype
    if bits not in _PRECISIONS:
        raise UsageError(f"precision must be 32 or 64, got {bits}")
    _dtype = _PRECISIONS[bits]


def get_dtype() -> type:
    return _dtype


def precision_bits() -> int:
    return 64 if _dtype is np.float64 else 32


@contextlib.contextmanager
def precision(bits: int) -> Iterator[None]:
    prev = precision_bits()
    set_precision(bits)
    try:
        yield
    finally:
        set_precision(prev)


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording (inference / entropy coding paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


GradFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Node:
    __slots__ = ("seq", "inputs", "grad_fn")

    def __init__(self, inputs: tuple, grad_fn: GradFn):
        self.seq = next(_seq)
        self.inputs = inputs
        self.grad_fn = grad_fn


class Tensor:
    """N-dimensional array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_node", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype != _dtype:
            arr = arr.astype(_dtype)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the ops module owns the implementations.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def sum(self):
        from . import ops
        return ops.sum(self)

    def mean(self):
        from . import ops
        return ops.mean(self)


def _not_scalar(t: Tensor) -> float:
    raise UsageError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(out: np.ndarray, inputs: Sequence, grad_fn: GradFn) -> Tensor:
    """Wrap an op result, attaching a graph node when any input is tracked."""
    t = Tensor(out)
    if _grad_enabled and any(isinstance(i, Tensor) and i.requires_grad for i in inputs):
        t.requires_grad = True
        t._node = Node(tuple(inputs), grad_fn)
    return t


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise UsageError("backward() needs a scalar Tensor loss")
    if loss._node is None:
        raise UsageError("backward() on a tensor that was not produced by tracked ops")
    if not np.all(np.isfinite(loss.data)):
        raise NumericError(f"non-finite loss {loss.data.reshape(-1)[0]!r}")

    nodes: dict[int, Node] = {}
    stack = [loss._node]
    while stack:
        node = stack.pop()
        if node.seq in nodes:
            continue
        nodes[node.seq] = node
        for inp in node.inputs:
            if isinstance(inp, Tensor) and inp._node is not None and inp._node.seq not in nodes:
                stack.append(inp._node)

    grads: dict[int, np.ndarray] = {loss._node.seq: np.ones_like(loss.data)}
    for seq in sorted(nodes, reverse=True):
        node = nodes[seq]
        g_out = grads.pop(seq, None)
        if g_out is None:
            continue
        in_grads = node.grad_fn(g_out)
        for inp, g in zip(node.inputs, in_grads):
            if g is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                continue
            if g.shape != inp.data.shape:
                raise NumericError(f"gradient shape {g.shape} != input shape {inp.data.shape}")
            if inp._node is not None:
                key = inp._node.seq
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
            elif inp.grad is None:
                inp.grad = np.array(g, dtype=inp.data.dtype, copy=True)
            else:
                inp.grad = inp.grad + g
