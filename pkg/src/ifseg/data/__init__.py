"""Volume loading, slicing, splitting and synthetic phantoms."""

from .dataset import (
    CLASS_NAMES,
    LABEL_PRESETS,
    SliceDataset,
    SliceItem,
    Volume,
    fit_array,
    load_labeled_volume,
    normalize_slice,
    one_hot,
    pad_or_crop,
    remap_labels,
    restore_array,
    slice_volume,
    train_val_split,
)
from .io import (
    VolumeFormatError,
    load_volume,
    read_analyze,
    read_analyze_header,
    read_pgm,
    read_raw16,
    write_analyze,
    write_pgm,
    write_raw16,
)
from .phantom import PhantomSpec, class_means, gen_phantom, phantom_items

__all__ = [
    "CLASS_NAMES",
    "LABEL_PRESETS",
    "PhantomSpec",
    "SliceDataset",
    "SliceItem",
    "Volume",
    "VolumeFormatError",
    "class_means",
    "fit_array",
    "gen_phantom",
    "load_labeled_volume",
    "load_volume",
    "normalize_slice",
    "one_hot",
    "pad_or_crop",
    "phantom_items",
    "read_analyze",
    "read_analyze_header",
    "read_pgm",
    "read_raw16",
    "remap_labels",
    "restore_array",
    "slice_volume",
    "train_val_split",
    "write_analyze",
    "write_pgm",
    "write_raw16",
]
