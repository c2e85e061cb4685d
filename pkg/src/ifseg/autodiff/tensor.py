"""Dense float64 tensors and the reverse-mode tape."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """An N-dimensional array of 64-bit floats.

    Activations use N x C x H x W layout, convolution weights O x I x Kh x Kw.
    A tensor with ``requires_grad=True`` that was not produced by a recorded
    operation is a leaf; :func:`backward` writes its gradient to ``.grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d arrays to shape (1,)
        self.data = arr if arr.flags.c_contiguous else arr.copy(order="C")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended as operations execute, so the list is already in
    topological order. Use as a context manager to make it the active tape.
    """

    nodes: list[Node] = field(default_factory=list)

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def clear(self) -> None:
        self.nodes.clear()

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPES.pop()
        assert popped is self


_TAPES: list[Tape] = []


def active_tape() -> Optional[Tape]:
    return _TAPES[-1] if _TAPES else None


def record(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    """Wrap ``out_data`` in a Tensor and put it on the active tape.

    Nothing is recorded when no tape is active or no input needs a gradient;
    the returned tensor is then a plain constant.
    """
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(Node(op, tuple(inputs), out, backward_fn))
    return out


def backward(loss: Tensor, tape: Tape, params: Optional[Iterable[Tensor]] = None) -> list[np.ndarray]:
    """Propagate d(loss) back through ``tape``.

    Every leaf seen on the tape gets ``.grad`` set. Tensors in ``params`` that
    the loss does not reach get a zero gradient. Returns the gradients of
    ``params`` in order (empty list when ``params`` is None).
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(node.output) for node in tape.nodes}
    leaves: dict[int, Tensor] = {}

    for node in reversed(tape.nodes):
        g_out = grads.pop(id(node.output), None)
        if g_out is None:
            continue
        in_grads = node.backward(g_out)
        if len(in_grads) != len(node.inputs):
            raise RuntimeError(f"{node.op}: backward returned {len(in_grads)} grads for {len(node.inputs)} inputs")
        for t, g in zip(node.inputs, in_grads):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.shape:
                raise RuntimeError(f"{node.op}: gradient shape {g.shape} does not match input shape {t.shape}")
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
            if key not in produced:
                leaves[key] = t

    for key, t in leaves.items():
        t.grad = grads[key]

    out = []
    if params is not None:
        for p in params:
            if p.grad is None or id(p) not in leaves:
                p.grad = np.zeros_like(p.data)
            out.append(p.grad)
    return out
