"""UNet, Attention UNet and IF-UNet builders with parameter accounting."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np

from .. import autodiff as ad
from ..autodiff import Rng, Tensor
from ..autodiff.serialize import ContainerError, read_container, write_container
from ..fuzzy import MembershipSpec, NegationSpec
from .layers import AttentionGate, BatchNorm, Conv2d, ConvTranspose2d, DoubleConv, Module

Norm = Literal["bn", "none"]
Variant = Literal["stacked3", "dual_branch", "tri_branch"]
Fusion = Literal["concat", "sum"]


class WeightsError(ValueError):
    """Weights file does not fit the model it is loaded into."""


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 1
    base_channels: int = 8
    depth: int = 2
    num_classes: int = 4
    dropout_rate: float = 0.1
    norm: Norm = "bn"

    def __post_init__(self):
        for name in ("in_channels", "base_channels", "depth", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.norm not in ("bn", "none"):
            raise ValueError(f"norm must be 'bn' or 'none', got {self.norm!r}")

    def widths(self) -> list[int]:
        """Channel width per level, bottleneck last."""
        return [self.base_channels * 2**lvl for lvl in range(self.depth + 1)]

    @classmethod
    def full_scale(cls) -> "UNetConfig":
        """Full-size configuration (64 base channels, four pooling levels)."""
        return cls(in_channels=1, base_channels=64, depth=4, num_classes=4, norm="bn")


@dataclass(frozen=True)
class IfUNetConfig:
    unet: UNetConfig = field(default_factory=lambda: UNetConfig(in_channels=3))
    variant: Variant = "dual_branch"
    fusion: Fusion = "concat"
    negation: NegationSpec = field(default_factory=NegationSpec)
    membership: MembershipSpec = field(default_factory=MembershipSpec)

    def __post_init__(self):
        if self.variant not in ("stacked3", "dual_branch", "tri_branch"):
            raise ValueError(f"unknown IF-UNet variant {self.variant!r}")
        if self.fusion not in ("concat", "sum"):
            raise ValueError(f"unknown fusion rule {self.fusion!r}")
        if self.unet.in_channels != 3:
            raise ValueError(
                f"IF-UNet ({self.variant}) consumes the 3-plane (mu, nu, pi) stack; in_channels={self.unet.in_channels}")

    @property
    def branches(self) -> int:
        return {"stacked3": 1, "dual_branch": 2, "tri_branch": 3}[self.variant]


class Encoder(Module):
    def __init__(self, cfg: UNetConfig, in_channels: int, rng: Rng):
        super().__init__()
        norm = cfg.norm == "bn"
        widths = cfg.widths()
        self.levels = []
        cin = in_channels
        for lvl in range(cfg.depth):
            self.levels.append(self.add_child(f"level{lvl}", DoubleConv(cin, widths[lvl], rng, norm, cfg.dropout_rate)))
            cin = widths[lvl]
        self.bottleneck = self.add_child("bottleneck", DoubleConv(cin, widths[-1], rng, norm, cfg.dropout_rate))

    def __call__(self, x: Tensor, train: bool, rng: Optional[Rng]) -> list[Tensor]:
        """Features per level, bottleneck last."""
        feats = []
        for block in self.levels:
            x = block(x, train, rng)
            feats.append(x)
            x = ad.maxpool2d(x)
        feats.append(self.bottleneck(x, train, rng))
        return feats


class Decoder(Module):
    def __init__(self, cfg: UNetConfig, rng: Rng, attention: bool = False):
        super().__init__()
        norm = cfg.norm == "bn"
        widths = cfg.widths()
        self.ups: dict[int, ConvTranspose2d] = {}
        self.gates: dict[int, AttentionGate] = {}
        self.blocks: dict[int, DoubleConv] = {}
        for lvl in reversed(range(cfg.depth)):
            self.ups[lvl] = self.add_child(f"up{lvl}", ConvTranspose2d(widths[lvl + 1], widths[lvl], rng))
            if attention:
                self.gates[lvl] = self.add_child(f"gate{lvl}", AttentionGate(widths[lvl], rng))
            self.blocks[lvl] = self.add_child(
                f"level{lvl}", DoubleConv(2 * widths[lvl], widths[lvl], rng, norm, cfg.dropout_rate))
        self.head = self.add_child("head", Conv2d(widths[0], cfg.num_classes, 1, rng))
        self.depth = cfg.depth

    def __call__(self, feats: Sequence[Tensor], train: bool, rng: Optional[Rng]) -> Tensor:
        y = feats[-1]
        for lvl in reversed(range(self.depth)):
            up = self.ups[lvl](y)
            skip = feats[lvl]
            if lvl in self.gates:
                skip = self.gates[lvl](up, skip)
            y = self.blocks[lvl](ad.concat(skip, up), train, rng)
        return self.head(y)


class FusionBlock(Module):
    """Merge per-branch features of one level back to the level width."""

    def __init__(self, channels: int, branches: int, rule: Fusion, rng: Rng):
        super().__init__()
        self.rule = rule
        self.proj = self.add_child("proj", Conv2d(branches * channels, channels, 1, rng)) if rule == "concat" else None

    def __call__(self, parts: Sequence[Tensor]) -> Tensor:
        out = parts[0]
        for p in parts[1:]:
            out = ad.concat(out, p) if self.rule == "concat" else ad.add(out, p)
        return self.proj(out) if self.proj is not None else out


class UNetNet(Module):
    def __init__(self, cfg: UNetConfig, rng: Rng, attention: bool = False):
        super().__init__()
        self.encoder = self.add_child("enc", Encoder(cfg, cfg.in_channels, rng))
        self.decoder = self.add_child("dec", Decoder(cfg, rng, attention))

    def __call__(self, x: Tensor, train: bool, rng: Optional[Rng]) -> Tensor:
        return self.decoder(self.encoder(x, train, rng), train, rng)


class MultiBranchNet(Module):
    """One encoder per fuzzy plane (mu, nu[, pi]), fused per level into a shared decoder."""

    def __init__(self, cfg: IfUNetConfig, rng: Rng):
        super().__init__()
        u = cfg.unet
        names = ("mu", "nu", "pi")[: cfg.branches]
        self.encoders = [self.add_child(f"enc_{n}", Encoder(u, 1, rng)) for n in names]
        self.fusions = [self.add_child(f"fuse{lvl}", FusionBlock(w, cfg.branches, cfg.fusion, rng))
                        for lvl, w in enumerate(u.widths())]
        self.decoder = self.add_child("dec", Decoder(u, rng))

    def __call__(self, x: Tensor, train: bool, rng: Optional[Rng]) -> Tensor:
        per_branch = []
        for b, enc in enumerate(self.encoders):
            plane = Tensor(x.data[:, b:b + 1])
            per_branch.append(enc(plane, train, rng))
        fused = [fuse([feats[lvl] for feats in per_branch]) for lvl, fuse in enumerate(self.fusions)]
        return self.decoder(fused, train, rng)


class Model:
    """A built network plus the configuration it came from."""

    def __init__(self, kind: str, net: Module, unet: UNetConfig, ifs: Optional[IfUNetConfig] = None):
        self.kind = kind
        self.net = net
        self.unet = unet
        self.ifs = ifs

    @property
    def in_channels(self) -> int:
        return self.unet.in_channels

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.net.named_parameters())

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.net.named_parameters()]

    def batch_norms(self) -> list[tuple[str, BatchNorm]]:
        return list(self.net.named_buffers())

    def forward(self, batch: Tensor | np.ndarray, train: bool = False, rng: Optional[Rng] = None) -> Tensor:
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        if x.data.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"{self.kind}: expected N x {self.in_channels} x H x W input, got {x.shape}")
        step = 2**self.unet.depth
        if x.shape[2] % step or x.shape[3] % step:
            raise ValueError(f"{self.kind}: spatial dims {x.shape[2:]} must be divisible by 2**depth = {step}")
        return self.net(x, train, rng)

    __call__ = forward

    def describe(self) -> str:
        if self.ifs is not None:
            return f"ifunet[{self.ifs.variant},{self.ifs.fusion}]"
        return self.kind


def build_unet(cfg: UNetConfig, rng: Optional[Rng] = None) -> Model:
    rng = rng or Rng(0, "init")
    return Model("unet", UNetNet(cfg, rng), cfg)


def build_attention_unet(cfg: UNetConfig, rng: Optional[Rng] = None) -> Model:
    rng = rng or Rng(0, "init")
    return Model("attention_unet", UNetNet(cfg, rng, attention=True), cfg)


def build_ifunet(cfg: IfUNetConfig, rng: Optional[Rng] = None) -> Model:
    rng = rng or Rng(0, "init")
    if cfg.variant == "stacked3":
        net: Module = UNetNet(cfg.unet, rng)
    else:
        net = MultiBranchNet(cfg, rng)
    return Model("ifunet", net, cfg.unet, cfg)


# ---------------------------------------------------------------- accounting


def count_params(model: Model) -> int:
    return sum(p.size for p in model.parameters())


def param_ledger(model: Model) -> str:
    """One line per parameter tensor, then totals.

    The trailer separates batch-norm scales from everything else so the
    contribution of normalization is visible directly.
    """
    lines = ["# name shape count"]
    gamma = 0
    for name, p in model.named_parameters():
        lines.append(f"{name} {'x'.join(map(str, p.shape))} {p.size}")
        if name.endswith(".gamma"):
            gamma += p.size
    total = count_params(model)
    lines.append(f"total {total}")
    lines.append(f"norm_scale {gamma}")
    lines.append(f"total_without_norm {total - gamma}")
    return "\n".join(lines) + "\n"


def _conv(cin: int, cout: int, k: int, norm: bool) -> int:
    return cin * cout * k * k + cout + (cout if norm else 0)


def _encoder_count(cfg: UNetConfig, cin: int) -> int:
    norm = cfg.norm == "bn"
    w = cfg.widths()
    n = 0
    for lvl in range(cfg.depth + 1):
        n += _conv(cin, w[lvl], 3, norm) + _conv(w[lvl], w[lvl], 3, norm)
        cin = w[lvl]
    return n


def _decoder_count(cfg: UNetConfig, attention: bool) -> int:
    norm = cfg.norm == "bn"
    w = cfg.widths()
    n = 0
    for lvl in range(cfg.depth):
        n += w[lvl + 1] * w[lvl] * 4 + w[lvl]
        if attention:
            inter = max(1, w[lvl] // 2)
            n += 2 * (w[lvl] * inter + inter) + inter + 1
        n += _conv(2 * w[lvl], w[lvl], 3, norm) + _conv(w[lvl], w[lvl], 3, norm)
    return n + w[0] * cfg.num_classes + cfg.num_classes


def closed_form_count(kind: str, cfg: UNetConfig | IfUNetConfig) -> int:
    """Trainable-parameter count computed from the configuration alone."""
    if kind in ("unet", "attention_unet"):
        assert isinstance(cfg, UNetConfig)
        return _encoder_count(cfg, cfg.in_channels) + _decoder_count(cfg, kind == "attention_unet")
    assert isinstance(cfg, IfUNetConfig)
    u = cfg.unet
    if cfg.variant == "stacked3":
        return _encoder_count(u, 3) + _decoder_count(u, False)
    b = cfg.branches
    fusion = sum(b * w * w + w for w in u.widths()) if cfg.fusion == "concat" else 0
    return b * _encoder_count(u, 1) + fusion + _decoder_count(u, False)


# ---------------------------------------------------------------- persistence


def state_entries(model: Model) -> dict[str, np.ndarray]:
    entries = {name: p.data for name, p in model.named_parameters()}
    for name, bn in model.batch_norms():
        entries[f"{name}.running_mean"] = bn.stats.mean
        entries[f"{name}.running_var"] = bn.stats.var
        entries[f"{name}.num_batches"] = np.array([float(bn.stats.num_batches)])
    return entries


def save_weights(model: Model, path: str | os.PathLike) -> None:
    write_container(path, state_entries(model))


def load_weights(model: Model, path: str | os.PathLike) -> Model:
    """Load into ``model`` in place; nothing is modified unless every entry fits."""
    try:
        entries = read_container(path)
    except ContainerError as exc:
        raise WeightsError(f"{path}: {exc}") from exc
    expected = state_entries(model)
    for name, arr in expected.items():
        if name not in entries:
            raise WeightsError(f"{path}: missing parameter {name}")
        if entries[name].shape != arr.shape:
            raise WeightsError(
                f"{path}: parameter {name} has shape {entries[name].shape}, model expects {arr.shape}")
    extra = [n for n in entries if n not in expected]
    if extra:
        raise WeightsError(f"{path}: unexpected parameter {extra[0]}")

    for name, p in model.named_parameters():
        p.data = entries[name].copy()
    for name, bn in model.batch_norms():
        bn.stats.mean = entries[f"{name}.running_mean"].copy()
        bn.stats.var = entries[f"{name}.running_var"].copy()
        bn.stats.num_batches = int(entries[f"{name}.num_batches"][0])
    return model


def zero_weights(model: Model) -> Model:
    for p in model.parameters():
        p.data = np.zeros_like(p.data)
    return model
