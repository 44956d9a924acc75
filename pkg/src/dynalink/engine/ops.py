"""Primitive differentiable operations.

Every op validates shapes, computes the forward value with numpy, and (when
a tape is active and some input requires a gradient) records a backward rule.
Backward rules return one gradient per input, aligned positionally; inputs
that take no gradient get None.
"""

from __future__ import annotations

import builtins
from typing import Optional, Sequence, Union

import numpy as np

from .tensor import Tensor, active_tape

# Additive-mask sentinel standing in for -inf.  Anything at or below the
# threshold is treated as fully blocked.
NEG_INF = -1e30
_BLOCK_THRESHOLD = -1e29

ArrayLike = Union[Tensor, np.ndarray, float, int]


class ShapeMismatch(ValueError):
    pass


class MaskError(ValueError):
    pass


def as_tensor(x: ArrayLike) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _emit(inputs: tuple[Tensor, ...], out_data: np.ndarray, rule) -> Tensor:
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        tape.record(inputs, out, rule)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.  Supports 2-D operands and stacked (batched) 3-D ones."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeMismatch(f"matmul needs at least 2-D operands: {ad.shape} @ {bd.shape}")
    if ad.ndim > 3 or bd.ndim > 3:
        raise ShapeMismatch(f"matmul supports rank <= 3: {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeMismatch(f"matmul inner dimensions disagree: {ad.shape} @ {bd.shape}")
    if ad.ndim == 3 and bd.ndim == 3 and ad.shape[0] != bd.shape[0]:
        raise ShapeMismatch(f"matmul batch dimensions disagree: {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def rule(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        if ga.ndim > ad.ndim:
            ga = ga.sum(axis=tuple(range(ga.ndim - ad.ndim)))
        if gb.ndim > bd.ndim:
            gb = gb.sum(axis=tuple(range(gb.ndim - bd.ndim)))
        return ga, gb

    return _emit((a, b), out, rule)


def transpose(t: Tensor) -> Tensor:
    """Swap the last two axes."""
    if t.ndim < 2:
        raise ShapeMismatch(f"transpose needs rank >= 2, got shape {t.shape}")
    out = np.swapaxes(t.data, -1, -2)

    def rule(g):
        return (np.swapaxes(g, -1, -2),)

    return _emit((t,), out, rule)


def reshape(t: Tensor, shape: tuple) -> Tensor:
    old = t.data.shape
    out = t.data.reshape(shape)

    def rule(g):
        return (g.reshape(old),)

    return _emit((t,), out, rule)


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatch(f"add cannot broadcast {a.shape} with {b.shape}") from None

    def rule(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _emit((a, b), out, rule)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise product, broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeMismatch(f"mul cannot broadcast {a.shape} with {b.shape}") from None
    ad, bd = a.data, b.data

    def rule(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _emit((a, b), out, rule)


def scale(t: Tensor, factor: float) -> Tensor:
    c = float(factor)
    out = t.data * c

    def rule(g):
        return (g * c,)

    return _emit((t,), out, rule)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ValueError("concat of an empty list")
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    cuts = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _emit(tuple(tensors), out, rule)


def split_last_dim(t: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    """Cut the last axis into consecutive pieces (inverse of concat)."""
    total = t.shape[-1]
    if builtins.sum(sizes) != total:
        raise ShapeMismatch(f"split sizes {list(sizes)} do not cover last dim {total}")
    pieces = []
    offset = 0
    for size in sizes:
        lo = offset
        piece = t.data[..., lo:lo + size].copy()

        def rule(g, lo=lo, size=size):
            buf = np.zeros_like(t.data)
            buf[..., lo:lo + size] = g
            return (buf,)

        pieces.append(_emit((t,), piece, rule))
        offset += size
    return pieces


def gather_rows(t: Tensor, index) -> Tensor:
    """Select rows along the first axis; backward scatter-adds."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeMismatch(f"gather_rows wants a 1-D index, got shape {idx.shape}")
    if t.ndim == 0:
        raise ShapeMismatch("gather_rows needs rank >= 1")
    n = t.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows index out of range for first dim {n}")
    out = t.data[idx]
    td = t.data

    def rule(g):
        if td.ndim == 2:
            # bincount over flattened (row, col) targets: deterministic and
            # much faster than add.at for the large index arrays of the loss
            ncol = td.shape[1]
            flat = (idx[:, None] * ncol + np.arange(ncol)[None, :]).ravel()
            buf = np.bincount(flat, weights=g.ravel(), minlength=td.size).reshape(td.shape)
        else:
            buf = np.zeros_like(td)
            np.add.at(buf, idx, g)
        return (buf,)

    return _emit((t,), out, rule)


def masked_softmax(logits: Tensor, mask: Optional[Union[Tensor, np.ndarray]] = None) -> Tensor:
    """Softmax over the last axis with an optional additive {0, -inf} mask.

    Masked positions come out exactly zero; each row is stabilized by
    subtracting its maximum over the unmasked entries.  A fully masked row
    is an invalid input and raises instead of producing NaN.
    """
    x = logits.data
    if mask is None:
        blocked = None
    else:
        m = mask.data if isinstance(mask, Tensor) else np.asarray(mask, dtype=np.float64)
        valid = (m == 0.0) | (m <= _BLOCK_THRESHOLD)
        if not valid.all():
            raise MaskError("mask entries must be 0 or the -inf sentinel")
        try:
            m = np.broadcast_to(m, x.shape)
        except ValueError:
            raise ShapeMismatch(f"mask shape {m.shape} does not broadcast to logits {x.shape}") from None
        blocked = m <= _BLOCK_THRESHOLD

    if blocked is None:
        rowmax = x.max(axis=-1, keepdims=True)
        ex = np.exp(x - rowmax)
    else:
        if blocked.all(axis=-1).any():
            raise MaskError("softmax row with every entry masked")
        rowmax = np.where(blocked, -np.inf, x).max(axis=-1, keepdims=True)
        ex = np.exp(np.where(blocked, 0.0, x - rowmax))
        ex = np.where(blocked, 0.0, ex)
    out = ex / ex.sum(axis=-1, keepdims=True)

    def rule(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _emit((logits,), out, rule)


def sigmoid(t: Tensor) -> Tensor:
    x = t.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def rule(g):
        return (g * out * (1.0 - out),)

    return _emit((t,), out, rule)


def leaky_relu(t: Tensor, slope: float = 0.2) -> Tensor:
    x = t.data
    out = np.where(x > 0, x, slope * x)

    def rule(g):
        return (g * np.where(x > 0, 1.0, slope),)

    return _emit((t,), out, rule)


def elu(t: Tensor) -> Tensor:
    x = t.data
    ex = np.exp(np.minimum(x, 0.0))
    out = np.where(x > 0, x, ex - 1.0)

    def rule(g):
        return (g * np.where(x > 0, 1.0, ex),)

    return _emit((t,), out, rule)


def log(t: Tensor) -> Tensor:
    x = t.data
    if x.size and x.min() <= 0.0:
        raise ValueError("log of a non-positive entry (clamp first)")
    out = np.log(x)

    def rule(g):
        return (g / x,)

    return _emit((t,), out, rule)


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only through the interior."""
    x = t.data
    out = np.clip(x, lo, hi)
    interior = (x > lo) & (x < hi)

    def rule(g):
        return (g * interior,)

    return _emit((t,), out, rule)


def sum(t: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = t.data
    out = x.sum(axis=axis)

    def rule(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _emit((t,), out, rule)


def mean(t: Tensor, axis: Optional[int] = None) -> Tensor:
    x = t.data
    count = x.size if axis is None else x.shape[axis]
    return scale(sum(t, axis=axis), 1.0 / count)


def inner_product(a: Tensor, b: Tensor, axis: Optional[int] = None) -> Tensor:
    """Dot product of same-shaped tensors: full (axis=None) or rowwise (axis=-1)."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"inner_product shapes disagree: {a.shape} vs {b.shape}")
    if axis not in (None, -1):
        raise ValueError("inner_product supports axis None or -1")
    ad, bd = a.data, b.data
    if axis is None:
        out = np.asarray((ad * bd).sum())

        def rule(g):
            return g * bd, g * ad

    else:
        out = (ad * bd).sum(axis=-1)

        def rule(g):
            return g[..., None] * bd, g[..., None] * ad

    return _emit((a, b), out, rule)
