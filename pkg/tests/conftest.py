from fractions import Fraction

import numpy as np
import pytest

from ifseg.autodiff import Rng


def conv2d_loops(x, w, b):
    """Direct nested-loop SAME convolution, independent of the im2col path."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    out = np.zeros((n, o, h, wd))
    for ni in range(n):
        for oi in range(o):
            for y in range(h):
                for xx in range(wd):
                    acc = b[oi]
                    for ci in range(c):
                        for i in range(k):
                            for j in range(k):
                                yy, xj = y + i - p, xx + j - p
                                if 0 <= yy < h and 0 <= xj < wd:
                                    acc += x[ni, ci, yy, xj] * w[oi, ci, i, j]
                    out[ni, oi, y, xx] = acc
    return out


def strided_conv_loops(y, w):
    """Stride-2, 2x2, no-padding convolution written with loops: (N,O,2H,2W) -> (N,C,H,W)."""
    n, o, h2, w2 = y.shape
    c = w.shape[0]
    out = np.zeros((n, c, h2 // 2, w2 // 2))
    for ni in range(n):
        for ci in range(c):
            for yy in range(h2 // 2):
                for xx in range(w2 // 2):
                    out[ni, ci, yy, xx] = np.sum(y[ni, :, 2 * yy:2 * yy + 2, 2 * xx:2 * xx + 2] * w[ci])
    return out


def set_oracle(pred, truth, c):
    """Dice, IoU and accuracy from pixel-index sets, as exact fractions."""
    p = {i for i, v in enumerate(pred) if v == c}
    t = {i for i, v in enumerate(truth) if v == c}
    inter, union = len(p & t), len(p | t)
    d = Fraction(1) if not p and not t else Fraction(2 * inter, len(p) + len(t))
    j = Fraction(1) if not union else Fraction(inter, union)
    acc = Fraction(sum(a == b for a, b in zip(pred, truth)), len(pred))
    return d, j, acc


@pytest.fixture
def rng():
    return Rng(1234, "tests")


@pytest.fixture
def tiny_cfg():
    from ifseg.runner.config import ExperimentConfig

    return ExperimentConfig(base_channels=4, depth=2, image_size=16, phantom_count=6, epochs=2,
                            lr=1e-3, plots=False, lambdas=(1.2,))


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE = pytest.StashKey[list]()


class Verdict:
    def __init__(self, lines: list, name: str):
        self.lines, self.name, self.done = lines, name, False

    def __call__(self, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {self.name}: {detail}"
        self.lines.append(line)
        print(line)
        self.done = True
        return ok


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def verdict(request):
    """Records one PASS/FAIL line for the criterion under test."""
    v = Verdict(request.config.stash[ACCEPTANCE], request.node.name.removeprefix("test_"))
    yield v
    if not v.done:
        v(False, "raised before reaching a verdict")


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
