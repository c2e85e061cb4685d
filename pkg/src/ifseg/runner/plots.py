"""Figures written next to the CSV/JSON artifacts.

PNGs are saved without the ``Software`` metadata field so that identical
inputs give byte-identical files.
"""

from __future__ import annotations

import os
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..data.dataset import CLASS_NAMES  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "ifseg",
}

# BG, CSF, GM, WM
LABEL_COLORS = ["#000000", "#3b75af", "#b5b5b5", "#f5f5dc"]


def _save(fig, path: str | os.PathLike) -> None:
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def training_curves(rows: Sequence[Mapping[str, float]], path: str | os.PathLike, title: str = "") -> None:
    epochs = [r["epoch"] for r in rows]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=(12, 3))
        axes[0].plot(epochs, [r["loss"] for r in rows], color="k")
        axes[0].set_title("loss")
        for ax, key, label in zip(axes[1:], ("ac", "dc", "iou"), ("AC", "DC", "IoU")):
            ax.plot(epochs, [r[key] for r in rows], label="train")
            ax.plot(epochs, [r[f"{key}_val"] for r in rows], label="val", linestyle="--")
            ax.set_title(label)
            ax.set_ylim(0.0, 1.02)
        for ax in axes:
            ax.set_xlabel("epoch")
        axes[-1].legend(loc="lower right", frameon=False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)


def sweep_bars(table: Mapping[str, Mapping[str, float]], columns: Sequence[str], path: str | os.PathLike) -> None:
    """Grouped bars: one group per metric, one bar per model column."""
    groups = [("AC", "DC", "IoU"), ("AC_val", "DC_val", "IoU_val")]
    width = 0.8 / max(len(columns), 1)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(11, 3.5), sharey=True)
        for ax, metrics in zip(axes, groups):
            x = np.arange(len(metrics))
            for i, col in enumerate(columns):
                vals = [table[m][col] for m in metrics]
                ax.bar(x + (i - (len(columns) - 1) / 2) * width, vals, width, label=col)
            ax.set_xticks(x)
            ax.set_xticklabels(metrics)
            ax.set_ylim(0.0, 1.05)
        axes[0].set_title("training")
        axes[1].set_title("validation")
        axes[1].legend(loc="lower right", frameon=False, ncol=2)
        fig.tight_layout()
        _save(fig, path)


def segmentation_panel(images: Sequence[np.ndarray], preds: Sequence[np.ndarray], path: str | os.PathLike,
                       truths: Sequence[np.ndarray] | None = None) -> None:
    from matplotlib.colors import ListedColormap

    cmap = ListedColormap(LABEL_COLORS)
    ncols = 3 if truths is not None else 2
    n = len(images)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, ncols, figsize=(2.2 * ncols, 2.2 * n), squeeze=False)
        for i in range(n):
            panels = [(images[i], "gray", "image")]
            if truths is not None:
                panels.append((truths[i], cmap, "truth"))
            panels.append((preds[i], cmap, "prediction"))
            for ax, (arr, cm, label) in zip(axes[i], panels):
                if cm is cmap:
                    ax.imshow(arr, cmap=cm, vmin=0, vmax=len(LABEL_COLORS) - 1, interpolation="nearest")
                else:
                    ax.imshow(arr, cmap=cm, interpolation="nearest")
                ax.set_xticks([])
                ax.set_yticks([])
                if i == 0:
                    ax.set_title(label)
        handles = [matplotlib.patches.Patch(color=c, label=n_) for c, n_ in zip(LABEL_COLORS, CLASS_NAMES)]
        fig.legend(handles=handles, loc="lower center", ncol=4, frameon=False)
        fig.tight_layout(rect=(0, 0.05, 1, 1))
        _save(fig, path)


def ifs_planes(mu: np.ndarray, nu: np.ndarray, pi: np.ndarray, path: str | os.PathLike, title: str = "") -> None:
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(9, 3))
        for ax, plane, label in zip(axes, (mu, nu, pi), ("membership", "non-membership", "hesitation")):
            im = ax.imshow(plane, cmap="viridis", interpolation="nearest")
            ax.set_title(label)
            ax.set_xticks([])
            ax.set_yticks([])
            fig.colorbar(im, ax=ax, fraction=0.046)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)
