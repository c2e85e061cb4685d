"""Training, evaluation, λ sweeps, segmentation and benchmarking."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .. import autodiff as ad
from ..autodiff import Adam, Rng, Tape, Tensor
from ..autodiff import gradcheck as gc
from ..data import (
    CLASS_NAMES,
    LABEL_PRESETS,
    PhantomSpec,
    SliceDataset,
    SliceItem,
    fit_array,
    load_labeled_volume,
    load_volume,
    normalize_slice,
    one_hot,
    phantom_items,
    restore_array,
    slice_volume,
    train_val_split,
    write_pgm,
)
from ..fuzzy import ifs_encode
from ..metrics import ConfusionCounts, MetricsReport, confusion, report, soft_dice
from ..models import (
    Model,
    build_attention_unet,
    build_ifunet,
    build_unet,
    count_params,
    load_weights,
    param_ledger,
    save_weights,
)
from . import plots
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

RUN_COLUMNS = ("epoch", "loss", "ac", "dc", "iou", "ac_val", "dc_val", "iou_val", "soft_dc", "soft_dc_val")
TABLE_ROWS = ("AC", "DC", "IoU", "AC_val", "DC_val", "IoU_val")
EVAL_BATCH = 8


# ---------------------------------------------------------------- data


def _ibsr_subjects(cfg: ExperimentConfig) -> list[str]:
    if cfg.subjects:
        return list(cfg.subjects)
    root = Path(cfg.ibsr_root)
    if not root.is_dir():
        raise FileNotFoundError(f"IBSR root {root} is not a directory")
    names = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not names:
        raise FileNotFoundError(f"no subject directories under {root}")
    return names[: cfg.num_subjects]


def load_items(cfg: ExperimentConfig) -> list[SliceItem]:
    """Raw (unnormalized) slices fitted to ``image_size``."""
    target = (cfg.image_size, cfg.image_size)
    if cfg.data == "phantom":
        spec = PhantomSpec(size=target, num_regions=cfg.phantom_regions, blur_width=cfg.blur_width,
                           noise_sigma=cfg.noise_sigma, seed=cfg.effective_data_seed)
        return phantom_items(cfg.phantom_count, spec)

    items = []
    dims = cfg.raw_dims or None
    for subject in _ibsr_subjects(cfg):
        root = Path(cfg.ibsr_root)
        vol = load_labeled_volume(root / cfg.image_pattern.format(subject=subject),
                                  root / cfg.label_pattern.format(subject=subject),
                                  subject, cfg.ibsr_format, dims, LABEL_PRESETS[cfg.label_preset])
        for it in slice_volume(vol, cfg.slice_axis, cfg.keep_empty):
            items.append(SliceItem(fit_array(it.image, target), fit_array(it.mask, target),
                                   it.subject_id, it.slice_index))
    return items


def build_dataset(cfg: ExperimentConfig) -> SliceDataset:
    return train_val_split(load_items(cfg), cfg.split_ratio, cfg.effective_data_seed)


def make_preprocessor(cfg: ExperimentConfig, lam: Optional[float] = None) -> Callable[[np.ndarray], np.ndarray]:
    """Raw slice -> C x H x W network input (per-slice MinMax, then fuzzification for IF-UNet)."""
    if cfg.model != "ifunet":
        return lambda img: normalize_slice(img)[None]
    membership = cfg.membership_spec()
    negation = cfg.negation_spec(lam)
    return lambda img: ifs_encode(normalize_slice(img), membership, negation).stack()


def model_inputs(cfg: ExperimentConfig, items: Sequence[SliceItem], lam: Optional[float] = None) -> np.ndarray:
    prep = make_preprocessor(cfg, lam)
    return np.stack([prep(it.image) for it in items])


def build_model(cfg: ExperimentConfig, lam: Optional[float] = None, rng: Optional[Rng] = None) -> Model:
    rng = rng or Rng(cfg.seed, "init")
    if cfg.model == "unet":
        return build_unet(cfg.unet_config(), rng)
    if cfg.model == "attention_unet":
        return build_attention_unet(cfg.unet_config(), rng)
    return build_ifunet(cfg.ifunet_config(lam), rng)


# ---------------------------------------------------------------- evaluation


def predict_logits(model: Model, inputs: np.ndarray, batch: int = EVAL_BATCH) -> np.ndarray:
    outs = [model.forward(inputs[i:i + batch], train=False).data for i in range(0, len(inputs), batch)]
    return np.concatenate(outs, axis=0)


def evaluate(model: Model, inputs: np.ndarray, masks: np.ndarray, partition: str) -> tuple[MetricsReport, float]:
    """Eval-mode metrics over a whole partition (confusion counts pooled over slices)."""
    c = model.unet.num_classes
    logits = predict_logits(model, inputs)
    pred = np.argmax(logits, axis=1)
    cm = ConfusionCounts.empty(c)
    for p, t in zip(pred, masks):
        cm = cm + confusion(p, t, c)
    sd = soft_dice(ad.softmax(logits, axis=1), one_hot(masks, c))
    return report(cm, partition), sd


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    model: Model
    rows: list[dict] = field(default_factory=list)
    wall_seconds: list[float] = field(default_factory=list)
    train_report: Optional[MetricsReport] = None
    val_report: Optional[MetricsReport] = None
    lam: Optional[float] = None


def train(cfg: ExperimentConfig, lam: Optional[float] = None, dataset: Optional[SliceDataset] = None,
          on_epoch: Optional[Callable[[dict], None]] = None) -> TrainResult:
    if cfg.epochs < 1:
        raise ConfigError("nothing to train: epochs must be >= 1")
    lam = cfg.lambdas[0] if lam is None else lam
    ds = dataset if dataset is not None else build_dataset(cfg)
    train_items = ds.partition("train")
    val_items = ds.partition("val")
    x_train = model_inputs(cfg, train_items, lam)
    x_val = model_inputs(cfg, val_items, lam)
    m_train = np.stack([it.mask for it in train_items])
    m_val = np.stack([it.mask for it in val_items])
    y_train = one_hot(m_train, cfg.num_classes)

    model = build_model(cfg, lam)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.adam_eps)
    shuffle_rng = Rng(cfg.seed, "shuffle")
    dropout_rng = Rng(cfg.seed, "dropout")

    result = TrainResult(model, lam=lam if cfg.model == "ifunet" else None)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(x_train))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            with Tape() as tape:
                logits = model.forward(x_train[idx], train=True, rng=dropout_rng)
                loss = ad.softmax_ce_loss(logits, Tensor(y_train[idx]))
            ad.backward(loss, tape, params)
            opt.step()
            losses.append(loss.item())
        tr, sd_tr = evaluate(model, x_train, m_train, "train")
        va, sd_va = evaluate(model, x_val, m_val, "val")
        row = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "ac": tr.ac, "dc": tr.dc, "iou": tr.iou,
            "ac_val": va.ac, "dc_val": va.dc, "iou_val": va.iou,
            "soft_dc": sd_tr, "soft_dc_val": sd_va,
        }
        result.rows.append(row)
        result.wall_seconds.append(time.perf_counter() - t0)
        result.train_report, result.val_report = tr, va
        log.info("epoch %d loss %.5f dc %.4f dc_val %.4f", epoch, row["loss"], tr.dc, va.dc)
        if on_epoch is not None:
            on_epoch(row)
    return result


# ---------------------------------------------------------------- artifacts


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def write_run(result: TrainResult, cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.csv").write_text(rows_to_csv(result.rows, RUN_COLUMNS))
    timing = [{"epoch": r["epoch"], "wall_seconds": s} for r, s in zip(result.rows, result.wall_seconds)]
    (out / "run_timing.csv").write_text(rows_to_csv(timing, ("epoch", "wall_seconds")))
    (out / "metrics.json").write_text(dump_json(result.val_report.to_dict()))
    (out / "metrics_train.json").write_text(dump_json(result.train_report.to_dict()))
    save_weights(result.model, out / "weights.ifseg")
    (out / "ledger.txt").write_text(param_ledger(result.model))
    # the output directory is left out so a run is byte-identical wherever it is written
    (out / "config.txt").write_text(cfg.dumps(exclude=("out",)))
    if cfg.plots:
        title = result.model.describe() + (f" lambda={result.lam!r}" if result.lam is not None else "")
        plots.training_curves(result.rows, out / "curves.png", title)


def run_train(cfg: ExperimentConfig, out: Optional[Path] = None) -> TrainResult:
    out = Path(out or cfg.out)
    result = train(cfg)
    write_run(result, cfg, out)
    return result


def load_trained(cfg: ExperimentConfig, weights: Path, lam: Optional[float] = None) -> Model:
    model = build_model(cfg, lam)
    load_weights(model, weights)
    return model


def run_eval(cfg: ExperimentConfig, weights: Path, out: Optional[Path] = None) -> MetricsReport:
    """Holdout metrics for saved weights; the dataset is rebuilt from the config."""
    out = Path(out or cfg.out)
    model = load_trained(cfg, weights)
    ds = build_dataset(cfg)
    val_items = ds.partition("val")
    rep, _ = evaluate(model, model_inputs(cfg, val_items), np.stack([it.mask for it in val_items]), "val")
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(dump_json(rep.to_dict()))
    return rep


def _table_column(tr: MetricsReport, va: MetricsReport) -> dict[str, float]:
    return {"AC": tr.ac, "DC": tr.dc, "IoU": tr.iou, "AC_val": va.ac, "DC_val": va.dc, "IoU_val": va.iou}


def sweep_columns(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig, Optional[float]]]:
    if cfg.model != "ifunet":
        raise ConfigError("the lambda sweep needs model = ifunet")
    cols: list[tuple[str, ExperimentConfig, Optional[float]]] = []
    if cfg.baselines:
        cols.append(("unet", cfg.with_overrides(model="unet"), None))
        cols.append(("attention_unet", cfg.with_overrides(model="attention_unet"), None))
    for lam in cfg.lambdas:
        cols.append((f"ifunet@{lam!r}", cfg, lam))
    return cols


def run_sweep(cfg: ExperimentConfig, out: Optional[Path] = None) -> dict[str, dict[str, float]]:
    """Train every column, then write one metrics x models table."""
    out = Path(out or cfg.out)
    cols = sweep_columns(cfg)
    ds = build_dataset(cfg)
    table: dict[str, dict[str, float]] = {m: {} for m in TABLE_ROWS}
    full = {}
    for name, col_cfg, lam in cols:
        log.info("sweep column %s", name)
        res = train(col_cfg, lam, dataset=ds)
        write_run(res, col_cfg.with_overrides(lambdas=(lam,)) if lam is not None else col_cfg,
                  out / name.replace("@", "_lambda_"))
        for metric, value in _table_column(res.train_report, res.val_report).items():
            table[metric][name] = value
        full[name] = {"train": res.train_report.to_dict(), "val": res.val_report.to_dict(),
                      "trainable_params": count_params(res.model)}
    names = [c[0] for c in cols]
    rows = [{"metric": m, **table[m]} for m in TABLE_ROWS]
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(rows_to_csv(rows, ["metric", *names]))
    (out / "sweep.json").write_text(dump_json(full))
    if cfg.plots:
        plots.sweep_bars(table, names, out / "sweep_bars.png")
    return table


# ---------------------------------------------------------------- segmentation


def segment_slices(model: Model, cfg: ExperimentConfig, images: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Label map per slice at the slice's own dims (argmax; ties go to the lowest class)."""
    target = (cfg.image_size, cfg.image_size)
    prep = make_preprocessor(cfg)
    inputs = np.stack([prep(fit_array(img, target)) for img in images])
    pred = np.argmax(predict_logits(model, inputs), axis=1)
    return [restore_array(p, img.shape) for p, img in zip(pred, images)]


def run_segment(cfg: ExperimentConfig, weights: Path, volume: Optional[Path] = None,
                out: Optional[Path] = None) -> list[np.ndarray]:
    out = Path(out or cfg.out)
    model = load_trained(cfg, weights)
    truths: Optional[list[np.ndarray]]
    if volume is not None:
        vol = load_volume(volume, cfg.ibsr_format, cfg.raw_dims or None)
        images = [np.take(vol, k, axis=cfg.slice_axis) for k in range(vol.shape[cfg.slice_axis])]
        truths = None
    else:
        items = load_items(cfg)
        images = [it.image for it in items]
        truths = [it.mask for it in items]
    preds = segment_slices(model, cfg, images)

    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for k, pred in enumerate(preds):
        write_pgm(out / f"slice_{k:04d}.pgm", pred, maxval=cfg.num_classes - 1)
        if cfg.class_maps:
            for c in range(cfg.num_classes):
                name = CLASS_NAMES[c].lower() if c < len(CLASS_NAMES) else f"class{c}"
                write_pgm(out / f"slice_{k:04d}_{name}.pgm", (pred == c).astype(np.uint8) * 255)
        entry = {"slice": k, "histogram": np.bincount(pred.ravel(), minlength=cfg.num_classes).tolist()}
        if truths is not None:
            entry["accuracy"] = float(np.mean(pred == truths[k]))
        summary.append(entry)
    (out / "segment.json").write_text(dump_json({"model": model.describe(), "slices": summary}))
    if cfg.plots:
        n = min(5, len(preds))
        show = [normalize_slice(im) for im in images[:n]]
        plots.segmentation_panel(show, preds[:n], out / "segmentation.png",
                                 truths[:n] if truths is not None else None)
    return preds


# ---------------------------------------------------------------- benchmark


def run_bench(cfg: ExperimentConfig, weights: Optional[Path] = None, repeats: Optional[int] = None,
              out: Optional[Path] = None) -> dict:
    """Mean eval-mode inference time over ``repeats`` runs on one slice.

    One untimed warm-up precedes the timed runs. Without weights the model is
    randomly initialized and its normalization statistics are set by a single
    train-mode pass over the benchmark slice.
    """
    out = Path(out or cfg.out)
    repeats = cfg.repeats if repeats is None else repeats
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    items = load_items(cfg.with_overrides(phantom_count=2)) if cfg.data == "phantom" else load_items(cfg)
    image = items[0].image
    prep = make_preprocessor(cfg)
    if weights is not None:
        model = load_trained(cfg, weights)
    else:
        model = build_model(cfg)
        if model.batch_norms():
            model.forward(prep(image)[None], train=True, rng=Rng(cfg.seed, "calibrate"))

    model.forward(prep(image)[None], train=False)  # warm-up

    fuzz, fwd = [], []
    for _ in range(repeats):
        t0 = time.perf_counter()
        x = prep(image)[None]
        t1 = time.perf_counter()
        model.forward(x, train=False)
        t2 = time.perf_counter()
        fuzz.append(t1 - t0)
        fwd.append(t2 - t1)
    total = [a + b for a, b in zip(fuzz, fwd)]
    rep = {
        "model": model.describe(),
        "trainable_params": count_params(model),
        "image_size": cfg.image_size,
        "repeats": len(total),
        "mean_inference_seconds": float(np.mean(total)),
        "mean_forward_seconds": float(np.mean(fwd)),
    }
    if cfg.model == "ifunet":
        rep["mean_fuzzification_seconds"] = float(np.mean(fuzz))
    out.mkdir(parents=True, exist_ok=True)
    (out / "timing.json").write_text(dump_json(rep))
    (out / "ledger.txt").write_text(param_ledger(model))
    return rep


# ---------------------------------------------------------------- gradcheck


def run_gradcheck(seed: int = 0, out: Optional[Path] = None) -> list[gc.CheckResult]:
    results = gc.run_suite(seed)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gradcheck.txt").write_text("".join(r.line() + "\n" for r in results))
    return results


# ---------------------------------------------------------------- encode


def run_encode(cfg: ExperimentConfig, volume: Optional[Path] = None, out: Optional[Path] = None) -> int:
    """Write the fuzzy planes of every slice as containers plus PGM previews."""
    from ..fuzzy import export_ifs

    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if volume is not None:
        vol = load_volume(volume, cfg.ibsr_format, cfg.raw_dims or None)
        images = [np.take(vol, k, axis=cfg.slice_axis) for k in range(vol.shape[cfg.slice_axis])]
    else:
        images = [it.image for it in load_items(cfg)]
    membership, negation = cfg.membership_spec(), cfg.negation_spec()
    for k, img in enumerate(images):
        ifs = ifs_encode(normalize_slice(img), membership, negation)
        export_ifs(ifs, out / f"slice_{k:04d}.ifs", preview_dir=out)
        if cfg.plots and k == 0:
            plots.ifs_planes(ifs.mu, ifs.nu, ifs.pi, out / "ifs_planes.png", f"{negation}")
    return len(images)
