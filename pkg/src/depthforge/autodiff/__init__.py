"""Tape-based reverse-mode autodiff over dense float64 tensors."""

from . import ops
from .gradcheck import finite_diff_check
from .optim import Adam
from .tensor import Tape, Tensor, active_tape, as_tensor, record

__all__ = [
    "Adam",
    "Tape",
    "Tensor",
    "active_tape",
    "as_tensor",
    "finite_diff_check",
    "ops",
    "record",
]
