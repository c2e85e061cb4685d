"""Segmentation networks."""

from .layers import AttentionGate, BatchNorm, Conv2d, ConvTranspose2d, ConvUnit, DoubleConv, Module
from .unet import (
    IfUNetConfig,
    Model,
    UNetConfig,
    WeightsError,
    build_attention_unet,
    build_ifunet,
    build_unet,
    closed_form_count,
    count_params,
    load_weights,
    param_ledger,
    save_weights,
    zero_weights,
)

__all__ = [
    "AttentionGate",
    "BatchNorm",
    "Conv2d",
    "ConvTranspose2d",
    "ConvUnit",
    "DoubleConv",
    "IfUNetConfig",
    "Model",
    "Module",
    "UNetConfig",
    "WeightsError",
    "build_attention_unet",
    "build_ifunet",
    "build_unet",
    "closed_form_count",
    "count_params",
    "load_weights",
    "param_ledger",
    "save_weights",
    "zero_weights",
]
