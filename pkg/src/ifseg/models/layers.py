"""Parameterized building blocks on top of the autodiff ops."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from .. import autodiff as ad
from ..autodiff import Rng, Tensor


class Module:
    """Holds named parameters, named buffers and child modules."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, "BatchNorm"]]:
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")


def he_uniform(rng: Rng, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, shape)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, rng: Rng, bias: bool = True):
        super().__init__()
        self.cin, self.cout, self.k = cin, cout, k
        self.weight = self.add_param("weight", he_uniform(rng, (cout, cin, k, k), cin * k * k))
        self.bias = self.add_param("bias", np.zeros(cout)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias)


class ConvTranspose2d(Module):
    """2x2 stride-2 up-sampling convolution."""

    def __init__(self, cin: int, cout: int, rng: Rng):
        super().__init__()
        # each output pixel sees one kernel tap per input channel
        self.weight = self.add_param("weight", he_uniform(rng, (cin, cout, 2, 2), cin))
        self.bias = self.add_param("bias", np.zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv_transpose2d(x, self.weight, self.bias)


class BatchNorm(Module):
    """Scale-only batch norm; running statistics are kept as buffers."""

    def __init__(self, channels: int):
        super().__init__()
        self.gamma = self.add_param("gamma", np.ones(channels))
        self.stats = ad.RunningStats.zeros(channels)

    def named_buffers(self, prefix: str = ""):
        yield prefix.rstrip("."), self

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return ad.batch_norm(x, self.gamma, self.stats, train)


class ConvUnit(Module):
    """3x3 conv -> (scale-only batch norm) -> ReLU."""

    def __init__(self, cin: int, cout: int, rng: Rng, norm: bool):
        super().__init__()
        self.conv = self.add_child("conv", Conv2d(cin, cout, 3, rng))
        self.bn = self.add_child("bn", BatchNorm(cout)) if norm else None

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        y = self.conv(x)
        if self.bn is not None:
            y = self.bn(y, train)
        return ad.relu(y)


class DoubleConv(Module):
    """Two conv units followed by dropout."""

    def __init__(self, cin: int, cout: int, rng: Rng, norm: bool, dropout: float):
        super().__init__()
        self.unit1 = self.add_child("unit1", ConvUnit(cin, cout, rng, norm))
        self.unit2 = self.add_child("unit2", ConvUnit(cout, cout, rng, norm))
        self.dropout = dropout

    def __call__(self, x: Tensor, train: bool, rng: Optional[Rng]) -> Tensor:
        y = self.unit2(self.unit1(x, train), train)
        return ad.dropout(y, self.dropout, rng, train)


class AttentionGate(Module):
    """Additive gate ``alpha = sigmoid(psi(relu(Wg g + Wx x)))``, output ``alpha * x``."""

    def __init__(self, channels: int, rng: Rng):
        super().__init__()
        inter = max(1, channels // 2)
        self.wg = self.add_child("wg", Conv2d(channels, inter, 1, rng))
        self.wx = self.add_child("wx", Conv2d(channels, inter, 1, rng))
        self.psi = self.add_child("psi", Conv2d(inter, 1, 1, rng))

    def coefficients(self, g: Tensor, x: Tensor) -> Tensor:
        return ad.sigmoid(self.psi(ad.relu(ad.add(self.wg(g), self.wx(x)))))

    def __call__(self, g: Tensor, x: Tensor) -> Tensor:
        return ad.mul(x, self.coefficients(g, x))
