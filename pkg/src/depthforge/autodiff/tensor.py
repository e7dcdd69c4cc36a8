"""Dense float64 tensors with tape-based reverse-mode differentiation.

A forward pass runs inside a ``with Tape() as tape:`` block. Every
differentiable op appends one node to the active tape; ``tape.backward(loss)``
replays the nodes in exact reverse execution order (a valid topological order
for any DAG built by sequential execution) and accumulates gradients into
``Tensor.grad``. Tapes are single-use: a second backward raises. Running ops
with no active tape gives plain forward evaluation, which doubles as
no-grad/eval mode.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ShapeError

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """N-dimensional float64 array, optionally carrying a gradient slot."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """View of the same data outside the autodiff graph (stop-gradient)."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # Arithmetic operators are attached by depthforge.autodiff.ops at import
    # time to avoid a circular import.


class Tape:
    """Ordered record of differentiable ops for one forward pass."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._spent = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, root: Tensor, seed: Optional[np.ndarray] = None) -> None:
        """Accumulate d(root)/d(input) into every recorded tensor's grad.

        ``root`` must be scalar unless an explicit ``seed`` gradient of the
        same shape is given.
        """
        if self._spent:
            raise RuntimeError("tape already consumed; rebuild the graph for a second backward")
        self._spent = True
        if seed is None:
            if root.size != 1:
                raise ShapeError(f"backward root must be scalar, got shape {root.shape}")
            seed = np.ones_like(root.data)
        root.grad = np.asarray(seed, dtype=np.float64).reshape(root.shape)
        for out, inputs, backward_fn in reversed(self._nodes):
            g = out.grad
            if g is None:
                continue
            grads = backward_fn(g)
            for tensor, grad in zip(inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.array(grad, dtype=np.float64, copy=True)
                else:
                    tensor.grad = tensor.grad + grad


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Register ``out = f(inputs)`` on the active tape, if any.

    ``backward_fn(g)`` must return one gradient array (or None) per input,
    each already reduced to the input's shape.
    """
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._nodes.append((out, tuple(inputs), backward_fn))
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
