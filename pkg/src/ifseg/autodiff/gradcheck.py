"""Central finite-difference checks of every differentiable op."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import ops
from .rng import Rng
from .tensor import Tape, Tensor, backward

H = 1e-5
RTOL = 1e-5
RTOL_BATCH_NORM = 1e-4


@dataclass(frozen=True)
class CheckResult:
    op: str
    case: int
    shapes: tuple[tuple[int, ...], ...]
    rel_error: float
    rtol: float

    @property
    def passed(self) -> bool:
        return self.rel_error < self.rtol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        shapes = " ".join("x".join(map(str, s)) for s in self.shapes)
        return f"{status} {self.op} case={self.case} shapes=[{shapes}] rel_error={self.rel_error:.3e} rtol={self.rtol:.0e}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm((analytic - numeric).ravel())
    scale = max(np.linalg.norm(analytic.ravel()), np.linalg.norm(numeric.ravel()))
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


def numeric_grad(f: Callable[[], float], arr: np.ndarray, h: float = H) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. every element of ``arr`` (mutated in place, then restored)."""
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], rng: Rng, h: float = H) -> float:
    """Worst relative error between tape and finite-difference gradients.

    The output is reduced to a scalar through a fixed random projection so
    that every output element contributes with a distinct weight.
    """
    probe_shape = fn(*inputs).shape
    proj = rng.uniform(-1.0, 1.0, probe_shape) if probe_shape else np.array(1.0)

    def scalar() -> float:
        return float((fn(*inputs).data * proj).sum())

    for t in inputs:
        t.grad = None
    with Tape() as tape:
        out = fn(*inputs)
        loss = ops.total(ops.mul(out, Tensor(proj)))
    analytic = backward(loss, tape, inputs)

    worst = 0.0
    for t, a in zip(inputs, analytic):
        n = numeric_grad(scalar, t.data, h)
        worst = max(worst, relative_error(a, n))
    return worst


def _param(rng: Rng, shape, low=-2.0, high=2.0) -> Tensor:
    return Tensor(rng.uniform(low, high, shape), requires_grad=True)


def _away_from_zero(rng: Rng, shape, gap=1e-3) -> Tensor:
    x = rng.uniform(-2.0, 2.0, shape)
    x = np.where(np.abs(x) < gap, np.sign(x + 1e-12) * (gap + np.abs(x)), x)
    return Tensor(x, requires_grad=True)


def _onehot(rng: Rng, shape) -> Tensor:
    n, c, h, w = shape
    labels = rng.integers(0, c, (n, h, w))
    return Tensor(np.moveaxis(np.eye(c)[labels], -1, 1))


# each entry: op name -> (rtol, factory(rng, case) -> (fn, inputs))
def _cases() -> dict[str, tuple[float, Callable[[Rng, int], tuple[Callable[..., Tensor], list[Tensor]]]]]:
    conv_shapes = [(1, 1, 3, 3, 1, 3), (2, 2, 4, 4, 3, 3), (1, 3, 5, 4, 2, 3), (2, 2, 6, 6, 2, 1), (1, 2, 4, 6, 2, 3)]
    tconv_shapes = [(1, 1, 1, 1, 1), (2, 2, 2, 2, 3), (1, 3, 2, 3, 2), (2, 1, 3, 3, 2), (1, 2, 4, 2, 1)]
    act_shapes = [(1, 1, 2, 2), (2, 3, 4, 4), (1, 2, 6, 4), (3, 1, 2, 6), (2, 2, 4, 2)]
    bn_shapes = [(2, 1, 2, 2), (2, 3, 4, 4), (1, 2, 6, 4), (3, 2, 2, 3), (4, 1, 3, 3)]

    def conv(rng: Rng, i: int):
        n, c, h, w, o, k = conv_shapes[i]
        return (lambda x, wt, b: ops.conv2d(x, wt, b)), [
            _param(rng, (n, c, h, w)), _param(rng, (o, c, k, k)), _param(rng, (o,))]

    def tconv(rng: Rng, i: int):
        n, c, h, w, o = tconv_shapes[i]
        return (lambda x, wt, b: ops.conv_transpose2d(x, wt, b)), [
            _param(rng, (n, c, h, w)), _param(rng, (c, o, 2, 2)), _param(rng, (o,))]

    def pool(rng: Rng, i: int):
        n, c, h, w = act_shapes[i]
        return (lambda x: ops.maxpool2d(x)), [_param(rng, (n, c, h, w))]

    def relu(rng: Rng, i: int):
        return (lambda x: ops.relu(x)), [_away_from_zero(rng, act_shapes[i])]

    def sigmoid(rng: Rng, i: int):
        return (lambda x: ops.sigmoid(x)), [_param(rng, act_shapes[i])]

    def add(rng: Rng, i: int):
        s = act_shapes[i]
        other = s if i % 2 == 0 else (s[0], 1, s[2], s[3])
        return (lambda a, b: ops.add(a, b)), [_param(rng, s), _param(rng, other)]

    def mul(rng: Rng, i: int):
        s = act_shapes[i]
        other = s if i % 2 == 0 else (s[0], 1, s[2], s[3])
        return (lambda a, b: ops.mul(a, b)), [_param(rng, s), _param(rng, other)]

    def concat(rng: Rng, i: int):
        n, c, h, w = act_shapes[i]
        return (lambda a, b: ops.concat(a, b)), [_param(rng, (n, c, h, w)), _param(rng, (n, i + 1, h, w))]

    def total(rng: Rng, i: int):
        return (lambda x: ops.total(x)), [_param(rng, act_shapes[i])]

    def batch_norm(rng: Rng, i: int):
        n, c, h, w = bn_shapes[i]

        def fn(x, gamma):
            return ops.batch_norm(x, gamma, ops.RunningStats.zeros(c), train=True)

        return fn, [_param(rng, (n, c, h, w)), _param(rng, (c,), 0.5, 2.0)]

    def dropout(rng: Rng, i: int):
        seed = int(rng.integers(0, 2**31))
        return (lambda x: ops.dropout(x, 0.3, Rng(seed, "dropout-check"), train=True)), [_param(rng, act_shapes[i])]

    def ce(rng: Rng, i: int):
        n, _, h, w = act_shapes[i]
        shape = (n, 4, h, w)
        target = _onehot(rng, shape)
        return (lambda z: ops.softmax_ce_loss(z, target)), [_param(rng, shape)]

    return {
        "conv2d": (RTOL, conv),
        "conv_transpose2d": (RTOL, tconv),
        "maxpool2d": (RTOL, pool),
        "relu": (RTOL, relu),
        "sigmoid": (RTOL, sigmoid),
        "add": (RTOL, add),
        "mul": (RTOL, mul),
        "concat": (RTOL, concat),
        "sum": (RTOL, total),
        "batch_norm": (RTOL_BATCH_NORM, batch_norm),
        "dropout": (RTOL, dropout),
        "softmax_ce_loss": (RTOL, ce),
    }


OPS = tuple(_cases())
CASES_PER_OP = 5


def run_suite(seed: int = 0, only: Optional[Sequence[str]] = None) -> list[CheckResult]:
    cases = _cases()
    names = list(only) if only is not None else list(cases)
    results = []
    for name in names:
        rtol, factory = cases[name]
        for i in range(CASES_PER_OP):
            rng = Rng(seed, f"gradcheck/{name}/{i}")
            fn, inputs = factory(rng, i)
            err = check(fn, inputs, rng)
            results.append(CheckResult(name, i, tuple(t.shape for t in inputs), err, rtol))
    return results


def iter_failures(results: Sequence[CheckResult]) -> Iterator[CheckResult]:
    return (r for r in results if not r.passed)
