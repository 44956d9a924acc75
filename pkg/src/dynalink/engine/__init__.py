"""Reverse-mode autodiff on dense float64 numpy buffers."""

from . import ops
from .gradcheck import OP_CHECKS, finite_diff_check, run_op_checks
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor, active_tape, backward

__all__ = [
    "AdamState",
    "OP_CHECKS",
    "Tape",
    "Tensor",
    "active_tape",
    "adam_step",
    "backward",
    "finite_diff_check",
    "ops",
    "run_op_checks",
]
