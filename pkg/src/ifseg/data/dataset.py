"""Labeled volumes, 2-D slicing, the train/validation split and one-hot targets."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Literal, Mapping, Optional, Sequence

import numpy as np

from ..autodiff.rng import Rng
from .io import VolumeFormatError, load_volume

CLASS_NAMES = ("BG", "CSF", "GM", "WM")

LABEL_PRESETS: dict[str, dict[int, int]] = {
    "ibsr": {0: 0, 1: 1, 2: 2, 3: 3},
    "ibsr8bit": {0: 0, 128: 1, 192: 2, 254: 3},
}


@dataclass
class Volume:
    intensities: np.ndarray  # D x H x W, non-negative
    labels: np.ndarray  # D x H x W, values in {0, 1, 2, 3}
    subject_id: str

    def __post_init__(self):
        if self.intensities.shape != self.labels.shape:
            raise VolumeFormatError(
                f"{self.subject_id}: intensity dims {self.intensities.shape} != label dims {self.labels.shape}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.intensities.shape


@dataclass
class SliceItem:
    image: np.ndarray
    mask: np.ndarray
    subject_id: str
    slice_index: int


@dataclass
class SliceDataset:
    items: list[SliceItem]
    split: list[Literal["train", "val"]] = field(default_factory=list)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.items)

    def indices(self, part: str) -> list[int]:
        return [i for i, s in enumerate(self.split) if s == part]

    def partition(self, part: str) -> list[SliceItem]:
        return [self.items[i] for i in self.indices(part)]


def remap_labels(mask: np.ndarray, mapping: Mapping[int, int]) -> np.ndarray:
    """Map raw label values onto BG=0, CSF=1, GM=2, WM=3."""
    mask = np.asarray(mask)
    values = np.unique(mask)
    unmapped = [v for v in values.tolist() if int(v) != v or int(v) not in mapping]
    if unmapped:
        listed = ", ".join(str(int(v)) if float(v).is_integer() else repr(v) for v in unmapped)
        raise ValueError(f"unmapped label {listed}")
    out = np.zeros(mask.shape, dtype=np.int64)
    for v in values.tolist():
        out[mask == v] = mapping[int(v)]
    return out


def load_labeled_volume(image_path: str | os.PathLike, label_path: str | os.PathLike, subject_id: str,
                        fmt: str = "analyze", dims: Optional[Sequence[int]] = None,
                        mapping: Mapping[int, int] = LABEL_PRESETS["ibsr"]) -> Volume:
    intensities = load_volume(image_path, fmt, dims)
    raw_labels = load_volume(label_path, fmt, dims)
    return Volume(np.clip(intensities, 0.0, None), remap_labels(raw_labels, mapping), subject_id)


def slice_volume(volume: Volume, axis: int = 0, keep_empty: bool = True) -> list[SliceItem]:
    """2-D (image, mask) pairs along ``axis`` in index order.

    With ``keep_empty=False`` slices whose mask is all background are dropped.
    """
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    items = []
    for k in range(volume.dims[axis]):
        img = np.take(volume.intensities, k, axis=axis)
        mask = np.take(volume.labels, k, axis=axis)
        if not keep_empty and not mask.any():
            continue
        items.append(SliceItem(np.ascontiguousarray(img), np.ascontiguousarray(mask), volume.subject_id, k))
    return items


def crop_pad_offsets(size: int, target: int) -> tuple[int, int]:
    """(pad_before, crop_before) along one axis for a centered fit."""
    if target >= size:
        return (target - size) // 2, 0
    return 0, (size - target) // 2


def fit_array(arr: np.ndarray, target: Sequence[int], fill=0) -> np.ndarray:
    """Center-crop or zero-pad a 2-D array to ``target``."""
    out = np.full(tuple(target), fill, dtype=arr.dtype)
    src = []
    dst = []
    for size, tgt in zip(arr.shape, target):
        pad, crop = crop_pad_offsets(size, tgt)
        n = min(size, tgt)
        src.append(slice(crop, crop + n))
        dst.append(slice(pad, pad + n))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def restore_array(arr: np.ndarray, original: Sequence[int], fill=0) -> np.ndarray:
    """Undo :func:`fit_array`: bring a fitted array back to ``original`` dims."""
    out = np.full(tuple(original), fill, dtype=arr.dtype)
    src = []
    dst = []
    for size, tgt in zip(original, arr.shape):
        pad, crop = crop_pad_offsets(size, tgt)
        n = min(size, tgt)
        src.append(slice(pad, pad + n))
        dst.append(slice(crop, crop + n))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def pad_or_crop(image: np.ndarray, mask: np.ndarray, target: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    return fit_array(image, target, 0), fit_array(mask, target, 0)


def train_val_split(items: Sequence[SliceItem], ratio: float = 0.8, seed: int = 0) -> SliceDataset:
    """Shuffle with ``seed``, then tag the first ``round(ratio * n)`` items as train."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(items)
    if n < 2:
        raise ValueError(f"need at least 2 items to split, got {n}")
    n_train = min(max(int(round(ratio * n)), 1), n - 1)
    order = Rng(seed, "split").permutation(n)
    split: list = ["val"] * n
    for i in order[:n_train]:
        split[int(i)] = "train"
    return SliceDataset(list(items), split, seed)


def normalize_slice(image: np.ndarray) -> np.ndarray:
    """Per-slice MinMax to [0, 1]; constant slices map to 0."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = image.min(), image.max()
    if hi == lo:
        return np.zeros_like(image)
    return (image - lo) / (hi - lo)


def one_hot(mask: np.ndarray, num_classes: int) -> np.ndarray:
    """C x H x W (or N x C x H x W for a stack of masks) exact one-hot planes."""
    mask = np.asarray(mask)
    if mask.size and (mask.min() < 0 or mask.max() >= num_classes):
        raise ValueError(f"labels must be in [0, {num_classes}), got range [{mask.min()}, {mask.max()}]")
    planes = np.eye(num_classes)[mask.astype(np.int64)]
    return np.ascontiguousarray(np.moveaxis(planes, -1, -3))
