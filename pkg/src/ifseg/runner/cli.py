"""Command-line front end.

Exit codes: 0 ok, 1 check failure, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..autodiff.serialize import ContainerError
from ..data import VolumeFormatError
from ..models import WeightsError
from . import experiment
from .config import ConfigError, load_config, parse_value

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--model", choices=("unet", "attention_unet", "ifunet"))
    common.add_argument("--lambda", dest="lambdas", metavar="LIST", help="comma-separated Sugeno lambdas")
    common.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ifseg", description="IF-UNet segmentation experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train one model")
    ev = sub.add_parser("eval", parents=[common], help="holdout metrics for saved weights")
    ev.add_argument("--weights", type=Path, required=True)
    sub.add_parser("sweep", parents=[common], help="lambda sweep with baselines")
    seg = sub.add_parser("segment", parents=[common], help="label maps for a volume or phantoms")
    seg.add_argument("--weights", type=Path, required=True)
    seg.add_argument("--volume", type=Path)
    bench = sub.add_parser("bench", parents=[common], help="mean inference time")
    bench.add_argument("--weights", type=Path)
    bench.add_argument("--repeats", type=int)
    gcp = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    gcp.set_defaults(model=None)
    enc = sub.add_parser("encode", parents=[common], help="export fuzzy planes of each slice")
    enc.add_argument("--volume", type=Path)
    return p


def _overrides(args: argparse.Namespace) -> dict:
    ov = {}
    for item in args.sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        name = "lambdas" if key.strip() == "lambda" else key.strip()
        ov[name] = parse_value(key.strip(), value)
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.out is not None:
        ov["out"] = str(args.out)
    if args.model is not None:
        ov["model"] = args.model
    if args.lambdas is not None:
        ov["lambdas"] = parse_value("lambda", args.lambdas)
    if getattr(args, "repeats", None) is not None:
        ov["repeats"] = args.repeats
    return ov


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        out = Path(cfg.out)
        if args.command == "train":
            res = experiment.run_train(cfg, out)
            print(f"trained {res.model.describe()} for {len(res.rows)} epochs; val dc {res.val_report.dc:.4f} -> {out}")
        elif args.command == "eval":
            rep = experiment.run_eval(cfg, args.weights, out)
            print(f"ac {rep.ac:.4f} dc {rep.dc:.4f} iou {rep.iou:.4f} -> {out / 'metrics.json'}")
        elif args.command == "sweep":
            experiment.run_sweep(cfg, out)
            print((out / "sweep.csv").read_text(), end="")
        elif args.command == "segment":
            preds = experiment.run_segment(cfg, args.weights, args.volume, out)
            print(f"segmented {len(preds)} slices -> {out}")
        elif args.command == "bench":
            rep = experiment.run_bench(cfg, args.weights, cfg.repeats, out)
            print(f"{rep['model']}: {rep['trainable_params']} params, "
                  f"{rep['mean_inference_seconds']:.6f} s/image over {rep['repeats']} runs")
        elif args.command == "gradcheck":
            results = experiment.run_gradcheck(cfg.seed, out)
            for r in results:
                print(r.line())
            failed = [r for r in results if not r.passed]
            if failed:
                print(f"{len(failed)} gradient checks failed: {', '.join(sorted({r.op for r in failed}))}",
                      file=sys.stderr)
                return EXIT_CHECK
        elif args.command == "encode":
            n = experiment.run_encode(cfg, args.volume, out)
            print(f"encoded {n} slices -> {out}")
    except (ConfigError, WeightsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, VolumeFormatError, ContainerError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
