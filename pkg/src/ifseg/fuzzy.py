"""Intuitionistic fuzzy encoding of grayscale images.

A pixel becomes the triple (membership, non-membership, hesitation). The
membership plane comes from a normalizing function, non-membership from a
negation (standard, Sugeno or Yager complement), and hesitation is whatever
mass is left: ``pi = 1 - mu - nu``.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from .autodiff.serialize import read_container, write_container

ATANASSOV_TOL = 1e-12
CHANNEL_ORDER = ("mu", "nu", "pi")


class ConstantSliceWarning(UserWarning):
    """MinMax membership was asked to normalize a constant slice."""


@dataclass(frozen=True)
class MembershipSpec:
    kind: Literal["minmax", "gaussian", "sigmoid"] = "minmax"
    center: float = 0.5
    width: float = 0.25  # gaussian sigma
    slope: float = 10.0  # sigmoid a

    def __post_init__(self):
        if self.kind not in ("minmax", "gaussian", "sigmoid"):
            raise ValueError(f"unknown membership kind {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            raise ValueError(f"gaussian membership needs width > 0, got {self.width}")
        if self.kind == "sigmoid" and not self.slope > 0:
            raise ValueError(f"sigmoid membership needs slope > 0, got {self.slope}")

    @classmethod
    def parse(cls, text: str) -> "MembershipSpec":
        """``minmax``, ``gaussian:CENTER,SIGMA`` or ``sigmoid:SLOPE,CENTER``."""
        kind, _, args = text.strip().partition(":")
        vals = [float(v) for v in args.split(",")] if args else []
        if kind == "minmax" and not vals:
            return cls("minmax")
        if kind == "gaussian" and len(vals) == 2:
            return cls("gaussian", center=vals[0], width=vals[1])
        if kind == "sigmoid" and len(vals) == 2:
            return cls("sigmoid", slope=vals[0], center=vals[1])
        raise ValueError(f"bad membership spec {text!r}")

    def __str__(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian:{self.center!r},{self.width!r}"
        if self.kind == "sigmoid":
            return f"sigmoid:{self.slope!r},{self.center!r}"
        return "minmax"


@dataclass(frozen=True)
class NegationSpec:
    kind: Literal["standard", "sugeno", "yager"] = "sugeno"
    param: float = 1.0  # lambda for sugeno, w for yager

    def __post_init__(self):
        if self.kind not in ("standard", "sugeno", "yager"):
            raise ValueError(f"unknown negation kind {self.kind!r}")
        if self.kind == "sugeno" and not self.param > 0:
            raise ValueError(f"Sugeno lambda must be > 0, got {self.param}")
        if self.kind == "yager" and not self.param > 0:
            raise ValueError(f"Yager w must be > 0, got {self.param}")

    @classmethod
    def sugeno(cls, lam: float) -> "NegationSpec":
        return cls("sugeno", lam)

    @classmethod
    def yager(cls, w: float) -> "NegationSpec":
        return cls("yager", w)

    def __str__(self) -> str:
        return self.kind if self.kind == "standard" else f"{self.kind}:{self.param!r}"


@dataclass
class IfsImage:
    mu: np.ndarray
    nu: np.ndarray
    pi: np.ndarray
    membership: MembershipSpec = field(default_factory=MembershipSpec)
    negation: NegationSpec = field(default_factory=NegationSpec)
    degenerate: bool = False

    def stack(self) -> np.ndarray:
        """3 x H x W array in (mu, nu, pi) order."""
        return np.stack([self.mu, self.nu, self.pi])


def normalize_membership(image: np.ndarray, spec: MembershipSpec = MembershipSpec()) -> np.ndarray:
    """Map intensities to membership degrees in [0, 1].

    MinMax of a constant slice returns an all-zero plane and emits
    :class:`ConstantSliceWarning`.
    """
    x = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("membership: image contains non-finite values")
    if spec.kind == "minmax":
        lo, hi = x.min(), x.max()
        if hi == lo:
            warnings.warn("constant slice under MinMax membership; mu set to 0", ConstantSliceWarning, stacklevel=2)
            return np.zeros_like(x)
        return np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    if spec.kind == "gaussian":
        return np.exp(-((x - spec.center) ** 2) / (2.0 * spec.width**2))
    z = -spec.slope * (x - spec.center)
    # 1 / (1 + exp(z)) without overflow
    e = np.exp(-np.abs(z))
    return np.where(z <= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _check_mu(mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if mu.size and (mu.min() < 0.0 or mu.max() > 1.0):
        raise ValueError("membership values must lie in [0, 1]")
    return mu


def sugeno_nonmembership(mu: np.ndarray, lam: float) -> np.ndarray:
    """Sugeno complement ``(1 - mu) / (1 + lam * mu)``, ``lam > 0``."""
    if not lam > 0:
        raise ValueError(f"Sugeno lambda must be > 0, got {lam}")
    mu = _check_mu(mu)
    return (1.0 - mu) / (1.0 + lam * mu)


def yager_nonmembership(mu: np.ndarray, w: float) -> np.ndarray:
    """Yager complement ``(1 - mu**w) ** (1 / w)``, ``w > 0``."""
    if not w > 0:
        raise ValueError(f"Yager w must be > 0, got {w}")
    mu = _check_mu(mu)
    return np.clip(1.0 - mu**w, 0.0, 1.0) ** (1.0 / w)


def standard_nonmembership(mu: np.ndarray) -> np.ndarray:
    return 1.0 - _check_mu(mu)


def nonmembership(mu: np.ndarray, spec: NegationSpec) -> np.ndarray:
    if spec.kind == "sugeno":
        return sugeno_nonmembership(mu, spec.param)
    if spec.kind == "yager":
        return yager_nonmembership(mu, spec.param)
    return standard_nonmembership(mu)


def hesitation(mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """``1 - mu - nu``; rejects pairs that break ``mu + nu <= 1``."""
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    pi = 1.0 - mu - nu
    if pi.size and pi.min() < -ATANASSOV_TOL:
        bad = np.unravel_index(np.argmin(pi), pi.shape)
        raise ValueError(f"mu + nu > 1 at index {tuple(int(i) for i in bad)} (sum {mu[bad] + nu[bad]!r})")
    # rounding can leave -1e-17; keep the plane inside [0, 1]
    return np.maximum(pi, 0.0)


def ifs_encode(image: np.ndarray, membership: MembershipSpec = MembershipSpec(),
               negation: NegationSpec = NegationSpec()) -> IfsImage:
    image = np.asarray(image, dtype=np.float64)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConstantSliceWarning)
        mu = normalize_membership(image, membership)
    degenerate = any(issubclass(w.category, ConstantSliceWarning) for w in caught)
    nu = nonmembership(mu, negation)
    try:
        pi = hesitation(mu, nu)
    except ValueError as exc:
        if negation.kind == "yager" and negation.param > 1:
            # (1 - mu^w)^(1/w) >= 1 - mu when w > 1
            raise ValueError(f"Yager w = {negation.param!r} > 1 breaks mu + nu <= 1: {exc}") from exc
        raise
    return IfsImage(mu, nu, pi, membership, negation, degenerate)


def export_ifs(ifs: IfsImage, path: str | os.PathLike, preview_dir: Optional[str | os.PathLike] = None) -> None:
    """Write the three planes as a container with entries mu, nu, pi.

    With ``preview_dir``, also write ``<stem>_mu.pgm`` etc. (plane x 255, rounded).
    """
    write_container(path, {"mu": ifs.mu, "nu": ifs.nu, "pi": ifs.pi})
    if preview_dir is not None:
        from .data.io import write_pgm

        stem = Path(path).stem
        for name in CHANNEL_ORDER:
            plane = getattr(ifs, name)
            write_pgm(Path(preview_dir) / f"{stem}_{name}.pgm", np.rint(plane * 255).astype(np.uint8))


def load_ifs(path: str | os.PathLike) -> IfsImage:
    entries = read_container(path)
    missing = [n for n in CHANNEL_ORDER if n not in entries]
    if missing:
        raise ValueError(f"{path}: missing planes {missing}")
    return IfsImage(entries["mu"], entries["nu"], entries["pi"])
