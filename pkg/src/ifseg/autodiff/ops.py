"""Differentiable operations over :class:`Tensor`.

Every op computes its forward pass with numpy and, when a tape is active,
records a closure that maps the output gradient to input gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import Rng
from .tensor import Tensor, record

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _shape_error(op: str, msg: str) -> ValueError:
    return ValueError(f"{op}: {msg}")


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(N, C, H, W) -> (N*H*W, C*k*k) patches for a stride-1 SAME convolution."""
    n, c, h, w = x.shape
    if k == 1:
        return x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # N, C, H, W, k, k
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)


def _col2im(cols: np.ndarray, shape: tuple[int, ...], k: int) -> np.ndarray:
    n, c, h, w = shape
    if k == 1:
        return np.ascontiguousarray(cols.reshape(n, h, w, c).transpose(0, 3, 1, 2))
    p = k // 2
    patches = cols.reshape(n, h, w, c, k, k)
    out = np.zeros((n, c, h + 2 * p, w + 2 * p))
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + h, j:j + w] += patches[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out[:, :, p:p + h, p:p + w]


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Stride-1 convolution with zero SAME padding and an odd square kernel.

    ``out[n,o,y,x] = bias[o] + sum_{c,i,j} x[n,c,y+i-p,x+j-p] * weight[o,c,i,j]``
    with ``p = k // 2`` (3x3 kernels pad by one, 1x1 kernels not at all).
    """
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise _shape_error("conv2d", f"expected 4-D input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if ci != c:
        raise _shape_error("conv2d", f"input shape {x.shape} has {c} channels but weight shape {weight.shape} expects {ci}")
    if kh != kw or kh % 2 == 0:
        raise _shape_error("conv2d", f"kernel must be odd and square, got {kh}x{kw}")
    if bias is not None and bias.shape != (o,):
        raise _shape_error("conv2d", f"bias shape {bias.shape} does not match {o} output channels")

    k = kh
    cols = _im2col(x.data, k)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out_data = np.ascontiguousarray(out.reshape(n, h, w, o).transpose(0, 3, 1, 2))

    def _backward(g: np.ndarray):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gx = _col2im(g2 @ wmat, x.shape, k) if x.requires_grad else None
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", inputs, out_data, _backward)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """2x2 transposed convolution with stride 2; doubles H and W.

    ``weight`` is C_in x C_out x 2 x 2 and
    ``out[n,o,2y+i,2x+j] = bias[o] + sum_c x[n,c,y,x] * weight[c,o,i,j]``.
    """
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise _shape_error("conv_transpose2d", f"expected 4-D input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    ci, o, kh, kw = weight.shape
    if ci != c:
        raise _shape_error("conv_transpose2d", f"input shape {x.shape} has {c} channels but weight shape {weight.shape} expects {ci}")
    if (kh, kw) != (2, 2):
        raise _shape_error("conv_transpose2d", f"kernel must be 2x2, got {kh}x{kw}")
    if bias is not None and bias.shape != (o,):
        raise _shape_error("conv_transpose2d", f"bias shape {bias.shape} does not match {o} output channels")

    xm = x.data.transpose(0, 2, 3, 1).reshape(-1, c)  # (NHW, C)
    wm = weight.data.reshape(c, o * 4)
    y = (xm @ wm).reshape(n, h, w, o, 2, 2)
    out_data = y.transpose(0, 3, 1, 4, 2, 5).reshape(n, o, 2 * h, 2 * w)
    if bias is not None:
        out_data = out_data + bias.data[None, :, None, None]
    out_data = np.ascontiguousarray(out_data)

    def _backward(g: np.ndarray):
        gm = g.reshape(n, o, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5).reshape(-1, o * 4)
        gx = None
        if x.requires_grad:
            gx = np.ascontiguousarray((gm @ wm.T).reshape(n, h, w, c).transpose(0, 3, 1, 2))
        gw = (xm.T @ gm).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv_transpose2d", inputs, out_data, _backward)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max-pool, stride 2.

    The gradient goes to the first maximum of each window in row-major order.
    """
    if x.data.ndim != 4:
        raise _shape_error("maxpool2d", f"expected 4-D input, got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise _shape_error("maxpool2d", f"spatial dims must be even, got {h}x{w}")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1)  # first occurrence on ties
    out_data = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def _backward(g: np.ndarray):
        gw = np.zeros((n, c, h // 2, w // 2, 4))
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gx = gw.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (np.ascontiguousarray(gx),)

    return record("maxpool2d", (x,), out_data, _backward)


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at 0 is 0."""
    mask = x.data > 0
    return record("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return record("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return record("add", (a, b), out, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting (e.g. N x 1 x H x W gates)."""
    out = a.data * b.data
    return record(
        "mul",
        (a, b),
        out,
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def total(x: Tensor) -> Tensor:
    """Sum of all elements as a 0-d tensor."""
    return record("sum", (x,), np.array(x.data.sum()), lambda g: (np.full(x.shape, float(g)),))


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Join along the channel axis, ``a`` first."""
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise _shape_error("concat", f"expected 4-D tensors, got {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise _shape_error("concat", f"batch/spatial mismatch between {a.shape} and {b.shape}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return record("concat", (a, b), out, lambda g: (g[:, :ca], g[:, ca:]))


@dataclass
class RunningStats:
    """Per-channel moving averages used by batch norm in eval mode."""

    mean: np.ndarray
    var: np.ndarray
    num_batches: int = 0
    momentum: float = BN_MOMENTUM

    @classmethod
    def zeros(cls, channels: int) -> "RunningStats":
        return cls(np.zeros(channels), np.ones(channels))


def batch_norm(x: Tensor, gamma: Tensor, stats: RunningStats, train: bool) -> Tensor:
    """Scale-only batch normalization (no shift term).

    Train mode normalizes with the biased batch variance over N, H, W and
    updates ``stats`` (unbiased variance, momentum 0.1). Eval mode uses
    ``stats`` and refuses to run before any train-mode update.
    """
    n, c, h, w = x.shape
    if gamma.shape != (c,):
        raise _shape_error("batch_norm", f"gamma shape {gamma.shape} does not match {c} channels")
    g4 = gamma.data[None, :, None, None]

    if not train:
        if stats.num_batches == 0:
            raise RuntimeError("batch_norm: eval mode before any train step (running stats uninitialized)")
        inv = 1.0 / np.sqrt(stats.var + BN_EPS)
        xhat = (x.data - stats.mean[None, :, None, None]) * inv[None, :, None, None]

        def _eval_backward(g: np.ndarray):
            return g * g4 * inv[None, :, None, None], (g * xhat).sum(axis=(0, 2, 3))

        return record("batch_norm", (x, gamma), xhat * g4, _eval_backward)

    m = n * h * w
    mean = x.data.mean(axis=(0, 2, 3))
    centered = x.data - mean[None, :, None, None]
    var = (centered * centered).mean(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = centered * inv[None, :, None, None]

    unbiased = var * m / (m - 1) if m > 1 else var
    mom = stats.momentum
    stats.mean = (1 - mom) * stats.mean + mom * mean
    stats.var = (1 - mom) * stats.var + mom * unbiased
    stats.num_batches += 1

    def _backward(g: np.ndarray):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dxhat = g * g4
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        dx = (inv[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
        return dx, dgamma

    return record("batch_norm", (x, gamma), xhat * g4, _backward)


def dropout(x: Tensor, rate: float, rng: Optional[Rng], train: bool) -> Tensor:
    """Inverted dropout: survivors are scaled by 1 / (1 - rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: train mode needs an Rng")
    keep = rng.random(x.shape) >= rate
    scale = keep / (1.0 - rate)
    return record("dropout", (x,), x.data * scale, lambda g: (g * scale,))


def softmax(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_ce_loss(logits: Tensor, target: Tensor) -> Tensor:
    """Mean per-pixel categorical cross-entropy over N x H x W.

    ``target`` must be one-hot along the channel axis.
    """
    if logits.shape != target.shape:
        raise _shape_error("softmax_ce_loss", f"logits {logits.shape} vs target {target.shape}")
    t = target.data
    if not np.all((t == 0.0) | (t == 1.0)) or not np.all(t.sum(axis=1) == 1.0):
        raise _shape_error("softmax_ce_loss", "target is not one-hot along the channel axis")
    n, c, h, w = logits.shape
    count = n * h * w
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    loss = -(t * logp).sum() / count
    p = np.exp(logp)

    def _backward(g: np.ndarray):
        return float(g) * (p - t) / count, None

    return record("softmax_ce_loss", (logits, target), np.array(loss), _backward)
