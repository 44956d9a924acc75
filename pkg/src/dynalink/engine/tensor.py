"""Dense float64 tensors and the recorded operation tape for reverse mode.

The design is deliberately small: a Tensor is a numpy array plus an optional
gradient buffer, and a Tape is the ordered list of operations recorded while
it is active.  Operations append themselves in execution order, which is a
topological order by construction, so the backward pass is a single reverse
sweep that visits every recorded node once.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class Tensor:
    """A dense float64 array with an optional same-shaped gradient."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # note: would promote 0-d, hence the guard
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
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

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{label}, requires_grad={self.requires_grad})"


# The backward rule of one recorded operation: maps the gradient at the
# output to a tuple of gradients aligned with the operation's inputs
# (None for inputs that take no gradient).
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_ACTIVE_TAPE: Optional["Tape"] = None


class Tape:
    """Ordered record of operations, used as a context manager.

    Entering the tape makes it the active recording target; operations on
    tensors that require gradients append (inputs, output, backward rule)
    entries.  Inputs are always recorded before the outputs that consume
    them, so a reverse sweep propagates gradients correctly.
    """

    def __init__(self):
        self._entries: list[tuple[tuple[Tensor, ...], Tensor, BackwardRule]] = []
        self._outer: Optional["Tape"] = None

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        self._outer = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._outer
        self._outer = None
        return False

    def record(self, inputs: tuple["Tensor", ...], output: "Tensor", rule: BackwardRule) -> None:
        self._entries.append((inputs, output, rule))

    def __len__(self) -> int:
        return len(self._entries)


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] = ()) -> None:
    """Reverse sweep: accumulate d(loss)/d(tensor) into ``.grad`` fields.

    The loss must be a scalar (a single element).  Gradients sum across
    fan-out.  Parameters passed in ``params`` that the loss never touched
    come out with an all-zero gradient rather than None.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.grad is None:
        loss.grad = np.ones_like(loss.data)
    else:
        loss.grad = loss.grad + np.ones_like(loss.data)

    for inputs, output, rule in reversed(tape._entries):
        if output.grad is None:
            continue  # not on a path to the loss
        grads = rule(output.grad)
        for tensor, grad in zip(inputs, grads):
            if grad is None or not tensor.requires_grad:
                continue
            if grad.shape != tensor.data.shape:
                raise ValueError(
                    f"backward rule produced gradient of shape {grad.shape} "
                    f"for tensor of shape {tensor.data.shape}"
                )
            if tensor.grad is None:
                tensor.grad = grad.copy() if grad.base is not None else grad
            else:
                tensor.grad = tensor.grad + grad

    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
