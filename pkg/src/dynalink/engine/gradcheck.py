"""Central finite-difference verification of recorded gradients.

Used both by the test suite and by the ``gradcheck`` CLI verb.  Each check
builds a tiny differentiable computation, runs the tape backward, and then
wiggles every parameter entry by +-eps to compare against the numeric slope.
Inputs for kinked ops (leaky_relu, elu, clip) are sampled away from their
kinks so the two-sided difference is meaningful.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import ops
from .tensor import Tape, Tensor, backward


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                      eps: float = 1e-5) -> float:
    """Max relative error between recorded gradients of f() and central differences.

    ``f`` must be a deterministic scalar-valued function of the current
    parameter values.  Relative error uses max(1, |analytic|, |numeric|)
    as the denominator so near-zero gradients are compared absolutely.
    """
    with Tape() as tape:
        loss = f()
    if loss.size != 1:
        raise ValueError(f"finite_diff_check needs a scalar function, got shape {loss.shape}")
    for p in params:
        p.grad = None
    backward(tape, loss, params=params)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        flat_an = an.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = float(f().data)
            flat[j] = orig - eps
            down = float(f().data)
            flat[j] = orig
            numeric = (up - down) / (2.0 * eps)
            a = flat_an[j]
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, rel)
    return worst


def _away_from_zero(rng: np.random.Generator, shape, low: float = 0.2, high: float = 2.0) -> np.ndarray:
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return mag * sign


def _weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    return ops.sum(ops.mul(out, Tensor(weights)))


def _check_matmul_2d(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    w = rng.normal(size=(3, 2))
    return [a, b], lambda: _weighted_sum(ops.matmul(a, b), w)


def _check_matmul_batched(rng):
    a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    c = Tensor(rng.normal(size=(2, 2, 5)), requires_grad=True)
    w = rng.normal(size=(2, 3, 5))
    return [a, b, c], lambda: _weighted_sum(ops.matmul(ops.matmul(a, b), c), w)


def _check_masked_softmax(rng):
    x = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
    mask = np.where(rng.random((4, 6)) < 0.4, ops.NEG_INF, 0.0)
    mask[:, 0] = 0.0  # keep every row alive
    w = rng.normal(size=(4, 6))
    return [x], lambda: _weighted_sum(ops.masked_softmax(x, mask), w)


def _check_softmax_unmasked(rng):
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    w = rng.normal(size=(3, 5))
    return [x], lambda: _weighted_sum(ops.masked_softmax(x), w)


def _check_add(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = rng.normal(size=(3, 4))
    return [a, b], lambda: _weighted_sum(ops.add(a, b), w)


def _check_add_broadcast(rng):
    a = Tensor(rng.normal(size=(3, 1)), requires_grad=True)
    b = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
    w = rng.normal(size=(3, 4))
    return [a, b], lambda: _weighted_sum(ops.add(a, b), w)


def _check_mul(rng):
    a = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
    w = rng.normal(size=(2, 5))
    return [a, b], lambda: _weighted_sum(ops.mul(a, b), w)


def _check_scale(rng):
    a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    factor = float(rng.uniform(-2, 2))
    w = rng.normal(size=(4, 3))
    return [a], lambda: _weighted_sum(ops.scale(a, factor), w)


def _check_concat(rng):
    a = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = rng.normal(size=(3, 6))
    return [a, b], lambda: _weighted_sum(ops.concat([a, b], axis=-1), w)


def _check_split(rng):
    a = Tensor(rng.normal(size=(3, 6)), requires_grad=True)
    w1 = rng.normal(size=(3, 2))
    w2 = rng.normal(size=(3, 4))

    def f():
        p1, p2 = ops.split_last_dim(a, [2, 4])
        return ops.add(_weighted_sum(p1, w1), _weighted_sum(p2, w2))

    return [a], f


def _check_transpose(rng):
    a = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    w = rng.normal(size=(5, 3))
    return [a], lambda: _weighted_sum(ops.transpose(a), w)


def _check_reshape(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = rng.normal(size=(12,))
    return [a], lambda: _weighted_sum(ops.reshape(a, (12,)), w)


def _check_sigmoid(rng):
    a = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
    w = rng.normal(size=(4, 4))
    return [a], lambda: _weighted_sum(ops.sigmoid(a), w)


def _check_leaky_relu(rng):
    a = Tensor(_away_from_zero(rng, (4, 4)), requires_grad=True)
    w = rng.normal(size=(4, 4))
    return [a], lambda: _weighted_sum(ops.leaky_relu(a, 0.2), w)


def _check_elu(rng):
    a = Tensor(_away_from_zero(rng, (4, 4)), requires_grad=True)
    w = rng.normal(size=(4, 4))
    return [a], lambda: _weighted_sum(ops.elu(a), w)


def _check_log(rng):
    a = Tensor(rng.uniform(0.2, 3.0, size=(3, 4)), requires_grad=True)
    w = rng.normal(size=(3, 4))
    return [a], lambda: _weighted_sum(ops.log(a), w)


def _check_clip(rng):
    # half the entries clearly inside [-1, 1], half clearly outside
    vals = np.where(rng.random((4, 4)) < 0.5,
                    rng.uniform(-0.8, 0.8, size=(4, 4)),
                    _away_from_zero(rng, (4, 4), 1.2, 3.0))
    a = Tensor(vals, requires_grad=True)
    w = rng.normal(size=(4, 4))
    return [a], lambda: _weighted_sum(ops.clip(a, -1.0, 1.0), w)


def _check_sum(rng):
    a = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    return [a], lambda: ops.sum(a)


def _check_sum_axis(rng):
    a = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    w = rng.normal(size=(3,))
    return [a], lambda: _weighted_sum(ops.sum(a, axis=1), w)


def _check_mean(rng):
    a = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    return [a], lambda: ops.mean(a)


def _check_inner_product(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    return [a, b], lambda: ops.inner_product(a, b)


def _check_inner_product_rows(rng):
    a = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    w = rng.normal(size=(5,))
    return [a, b], lambda: _weighted_sum(ops.inner_product(a, b, axis=-1), w)


def _check_gather_rows(rng):
    a = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
    idx = rng.integers(0, 6, size=9)
    w = rng.normal(size=(9, 3))
    return [a], lambda: _weighted_sum(ops.gather_rows(a, idx), w)


OP_CHECKS: list[tuple[str, Callable]] = [
    ("matmul", _check_matmul_2d),
    ("matmul_batched", _check_matmul_batched),
    ("masked_softmax", _check_masked_softmax),
    ("softmax_unmasked", _check_softmax_unmasked),
    ("add", _check_add),
    ("add_broadcast", _check_add_broadcast),
    ("mul", _check_mul),
    ("scale", _check_scale),
    ("concat", _check_concat),
    ("split_last_dim", _check_split),
    ("transpose", _check_transpose),
    ("reshape", _check_reshape),
    ("sigmoid", _check_sigmoid),
    ("leaky_relu", _check_leaky_relu),
    ("elu", _check_elu),
    ("log", _check_log),
    ("clip", _check_clip),
    ("sum", _check_sum),
    ("sum_axis", _check_sum_axis),
    ("mean", _check_mean),
    ("inner_product", _check_inner_product),
    ("inner_product_rows", _check_inner_product_rows),
    ("gather_rows", _check_gather_rows),
]


def run_op_checks(seed: int = 0, instances: int = 20, eps: float = 1e-5) -> dict[str, float]:
    """Max finite-difference error per op over ``instances`` random cases."""
    results: dict[str, float] = {}
    for op_index, (name, build) in enumerate(OP_CHECKS):
        worst = 0.0
        for k in range(instances):
            rng = np.random.Generator(np.random.PCG64([seed, op_index, k]))
            params, f = build(rng)
            worst = max(worst, finite_diff_check(f, params, eps=eps))
        results[name] = worst
    return results
