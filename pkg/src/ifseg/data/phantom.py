"""Synthetic brain-like phantoms with partial-volume mixing at tissue boundaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff.rng import Rng
from .dataset import SliceItem

MAX_REGIONS = 4
TOP_INTENSITY = 240.0


@dataclass(frozen=True)
class PhantomSpec:
    size: tuple[int, int] = (64, 64)
    num_regions: int = 4
    blur_width: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_regions < 2:
            raise ValueError(f"num_regions must be >= 2, got {self.num_regions}")
        if self.num_regions > MAX_REGIONS:
            raise ValueError(f"num_regions must be <= {MAX_REGIONS} (class budget BG/CSF/GM/WM), got {self.num_regions}")
        if self.blur_width < 0 or self.noise_sigma < 0:
            raise ValueError("blur_width and noise_sigma must be >= 0")
        if min(self.size) < 8:
            raise ValueError(f"phantom size must be at least 8x8, got {self.size}")


def class_means(num_regions: int) -> np.ndarray:
    """Evenly spaced class intensities from 0 (background) to 240."""
    return np.arange(num_regions) * (TOP_INTENSITY / (num_regions - 1))


def box_blur(image: np.ndarray, radius: int) -> np.ndarray:
    """Separable box filter of width ``2 * radius + 1`` with edge replication.

    Sums shifted copies directly (no running sum), so flat neighbourhoods of
    integer-valued intensities keep their exact value.
    """
    if radius <= 0:
        return image.copy()
    size = 2 * radius + 1
    out = image
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="edge")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for s in range(size):
            acc += np.take(padded, np.arange(s, s + n), axis=axis)
        out = acc / size
    return out


def _label_map(shape: tuple[int, int], num_regions: int, rng: Rng) -> np.ndarray:
    h, w = shape
    cy = h / 2 + rng.uniform(-0.05, 0.05) * h
    cx = w / 2 + rng.uniform(-0.05, 0.05) * w
    ay = h * rng.uniform(0.36, 0.44)
    ax = w * rng.uniform(0.36, 0.44)
    lobes = int(rng.integers(2, 6))
    wobble = rng.uniform(0.03, 0.08)
    phase = rng.uniform(0.0, 2 * np.pi)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dy = (yy + 0.5 - cy) / ay
    dx = (xx + 0.5 - cx) / ax
    theta = np.arctan2(dy, dx)
    rho = np.hypot(dy, dx) / (1.0 + wobble * np.sin(lobes * theta + phase))

    # nested thresholds: outermost boundary at rho = 1, inner ones shrink toward the centre
    thresholds = [1.0]
    lo, hi = 0.62, 0.78
    for _ in range(num_regions - 2):
        thresholds.append(thresholds[-1] * rng.uniform(lo, hi))
        lo, hi = 0.5, 0.65
    labels = np.zeros((h, w), dtype=np.int64)
    for t in thresholds:
        labels += (rho < t).astype(np.int64)
    return labels


def gen_phantom(spec: PhantomSpec, rng: Rng | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(image, mask)``: nested blobs, one class per region.

    The mask stays crisp; only the intensity image is blurred (partial volume)
    and then corrupted with Gaussian noise, clipped at zero.
    """
    rng = rng if rng is not None else Rng(spec.seed, "phantom")
    shape = tuple(spec.size)
    for _ in range(100):
        mask = _label_map(shape, spec.num_regions, rng)
        if np.all(np.bincount(mask.ravel(), minlength=spec.num_regions) > 0):
            break
    else:
        raise RuntimeError(f"could not place {spec.num_regions} non-empty regions in a {shape} phantom")

    image = class_means(spec.num_regions)[mask]
    image = box_blur(image, int(round(spec.blur_width)))
    if spec.noise_sigma > 0:
        image = np.clip(image + rng.normal(0.0, spec.noise_sigma, shape), 0.0, None)
    return image, mask


def phantom_items(count: int, spec: PhantomSpec) -> list[SliceItem]:
    """``count`` independent phantoms, each seeded from ``spec.seed`` and its index."""
    items = []
    for i in range(count):
        image, mask = gen_phantom(spec, Rng(spec.seed, f"phantom/{i}"))
        items.append(SliceItem(image, mask, f"phantom_{i:03d}", 0))
    return items
