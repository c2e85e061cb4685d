"""Minimal float64 tensor engine with a reverse-mode tape and Adam."""

from .ops import (
    RunningStats,
    add,
    batch_norm,
    concat,
    conv2d,
    conv_transpose2d,
    dropout,
    maxpool2d,
    mul,
    relu,
    sigmoid,
    softmax,
    softmax_ce_loss,
    total,
)
from .optim import Adam, AdamState, adam_step
from .rng import Rng
from .serialize import ContainerError, read_container, write_container
from .tensor import Node, Tape, Tensor, backward

__all__ = [
    "Adam",
    "AdamState",
    "ContainerError",
    "Node",
    "Rng",
    "RunningStats",
    "Tape",
    "Tensor",
    "adam_step",
    "add",
    "backward",
    "batch_norm",
    "concat",
    "conv2d",
    "conv_transpose2d",
    "dropout",
    "maxpool2d",
    "mul",
    "read_container",
    "relu",
    "sigmoid",
    "softmax",
    "softmax_ce_loss",
    "total",
    "write_container",
]
