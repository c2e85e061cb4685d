"""Flat ``key = value`` experiment configuration.

Grammar: one assignment per line, ``#`` starts a comment, blank lines are
ignored, list values are comma separated. Unknown keys are an error.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from ..fuzzy import MembershipSpec, NegationSpec
from ..models import IfUNetConfig, UNetConfig

MODELS = ("unet", "attention_unet", "ifunet")


class ConfigError(ValueError):
    """Invalid configuration; the CLI exits with status 2."""


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "ifunet"
    variant: str = "dual_branch"
    fusion: str = "concat"
    base_channels: int = 8
    depth: int = 2
    num_classes: int = 4
    dropout_rate: float = 0.1
    norm: str = "bn"
    membership: str = "minmax"
    negation: str = "sugeno"
    yager_w: float = 0.5
    lambdas: tuple[float, ...] = (0.5, 0.9, 1.2, 1.5)
    epochs: int = 100
    batch_size: int = 2
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    split_ratio: float = 0.8
    seed: int = 0
    data_seed: Optional[int] = None
    out: str = "runs/default"
    image_size: int = 64
    data: str = "phantom"
    phantom_count: int = 20
    phantom_regions: int = 4
    blur_width: float = 2.0
    noise_sigma: float = 4.0
    ibsr_root: str = ""
    ibsr_format: str = "analyze"
    raw_dims: tuple[int, ...] = ()
    label_preset: str = "ibsr"
    num_subjects: int = 10
    subjects: tuple[str, ...] = ()
    image_pattern: str = "{subject}/{subject}_ana"
    label_pattern: str = "{subject}/{subject}_segTRI_ana"
    slice_axis: int = 0
    keep_empty: bool = True
    baselines: bool = True
    repeats: int = 50
    plots: bool = True
    class_maps: bool = True

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------ checks
    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}; got {self.model!r}")
        if self.variant not in ("stacked3", "dual_branch", "tri_branch"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.fusion not in ("concat", "sum"):
            raise ConfigError(f"unknown fusion {self.fusion!r}")
        if self.norm not in ("bn", "none"):
            raise ConfigError(f"norm must be bn or none; got {self.norm!r}")
        if self.negation not in ("sugeno", "yager", "standard"):
            raise ConfigError(f"unknown negation {self.negation!r}")
        if self.negation == "yager" and not 0 < self.yager_w <= 1:
            # w > 1 puts mu + nu above 1 for interior memberships
            raise ConfigError(f"yager_w must be in (0, 1] for a valid intuitionistic encoding; got {self.yager_w!r}")
        if self.data not in ("phantom", "ibsr"):
            raise ConfigError(f"data must be phantom or ibsr; got {self.data!r}")
        if self.ibsr_format not in ("analyze", "raw16"):
            raise ConfigError(f"ibsr_format must be analyze or raw16; got {self.ibsr_format!r}")
        if self.label_preset not in ("ibsr", "ibsr8bit"):
            raise ConfigError(f"label_preset must be ibsr or ibsr8bit; got {self.label_preset!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must be in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not self.lambdas:
            raise ConfigError("lambda list is empty")
        if any(not lam > 0 for lam in self.lambdas):
            raise ConfigError("every lambda must be > 0")
        if len(set(self.lambdas)) != len(self.lambdas):
            raise ConfigError(f"duplicate lambda values in {list(self.lambdas)}")
        step = 2**self.depth
        if self.image_size < step or self.image_size % step:
            raise ConfigError(f"image_size {self.image_size} is not divisible by 2**depth = {step}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.phantom_count < 2:
            raise ConfigError("phantom_count must be >= 2")
        if self.slice_axis not in (0, 1, 2):
            raise ConfigError("slice_axis must be 0, 1 or 2")
        try:
            self.membership_spec()
            self.negation_spec(self.lambdas[0])
            self.unet_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # ------------------------------------------------------------ derived
    def membership_spec(self) -> MembershipSpec:
        return MembershipSpec.parse(self.membership)

    def negation_spec(self, lam: Optional[float] = None) -> NegationSpec:
        if self.negation == "sugeno":
            return NegationSpec.sugeno(self.lambdas[0] if lam is None else lam)
        if self.negation == "yager":
            return NegationSpec.yager(self.yager_w)
        return NegationSpec("standard")

    def unet_config(self) -> UNetConfig:
        return UNetConfig(
            in_channels=3 if self.model == "ifunet" else 1,
            base_channels=self.base_channels,
            depth=self.depth,
            num_classes=self.num_classes,
            dropout_rate=self.dropout_rate,
            norm=self.norm,  # type: ignore[arg-type]
        )

    def ifunet_config(self, lam: Optional[float] = None) -> IfUNetConfig:
        return IfUNetConfig(
            unet=self.unet_config(),
            variant=self.variant,  # type: ignore[arg-type]
            fusion=self.fusion,  # type: ignore[arg-type]
            negation=self.negation_spec(lam),
            membership=self.membership_spec(),
        )

    @property
    def effective_data_seed(self) -> int:
        return self.seed if self.data_seed is None else self.data_seed

    def with_overrides(self, **kw: Any) -> "ExperimentConfig":
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self, exclude: tuple[str, ...] = ()) -> str:
        lines = []
        for f in fields(self):
            if f.name in exclude:
                continue
            key = "lambda" if f.name == "lambdas" else f.name
            lines.append(f"{key} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_ALIASES = {"lambda": "lambdas"}


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_value(key: str, text: str) -> Any:
    name = _ALIASES.get(key, key)
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    default = _FIELDS[name].default
    text = text.strip()
    try:
        if name == "data_seed":
            return None if text == "" else int(text)
        if name == "lambdas":
            return tuple(float(v) for v in text.split(",") if v.strip()) if text else ()
        if name == "raw_dims":
            return tuple(int(v) for v in text.split(",") if v.strip())
        if name == "subjects":
            return tuple(v.strip() for v in text.split(",") if v.strip())
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        name = _ALIASES.get(key, key)
        if name in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[name] = parse_value(key, value)
    return values


def load_config(path: Optional[str | os.PathLike] = None, overrides: Optional[dict[str, Any]] = None) -> ExperimentConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text, str(path)))
    values.update(overrides or {})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
