"""Objective functions: cross-entropy, center, marginal softmax, contrastive,
and the joint marginal-contrastive loss.

Each loss is a tape primitive with an analytic backward rule; finite
differences (see gradcheck) independently verify every rule. All softmax-type
computations subtract the row max before exponentiation. Batch reductions are
means unless the contrastive normalizer is switched to class count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError, NumericsError, ShapeError
from .tensor import Tape, Tensor, add

_DIST_FLOOR = 1e-12  # below this a distance is treated as zero (subgradient 0)


@dataclass
class ClassCenters:
    """Learned per-class feature centers, one row per class."""

    weights: Tensor
    trainable: bool = True

    @classmethod
    def init(cls, classes: int, feature_dim: int,
             rng: Optional[np.random.Generator] = None, std: float = 1.0) -> "ClassCenters":
        """Unit-std rows sit at the norm scale of relu features (~sqrt(d)),
        so the contrastive pull engages from the first epochs."""
        rng = rng if rng is not None else np.random.default_rng(0)
        return cls(Tensor(rng.normal(0.0, std, (classes, feature_dim))))

    @property
    def classes(self) -> int:
        return self.weights.data.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.data.shape[1]


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.5
    variant: str = "eq4"        # "eq4": sample-to-center denominator with +1
                                # "eq6": center-to-center denominator, no +1
    normalizer: str = "batch"   # divide the contrastive sum by batch size or class count

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ContractError(f"margin must be >= 0, got {self.margin}")
        if self.variant not in ("eq4", "eq6"):
            raise ContractError(f"unknown contrastive variant {self.variant!r}")
        if self.normalizer not in ("batch", "classes"):
            raise ContractError(f"unknown normalizer {self.normalizer!r}")


def _as_labels(labels, classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.size and (y.min() < 0 or y.max() >= classes):
        raise ContractError(f"label out of range [0, {classes}) in {y.tolist()}")
    return y


def _check_batch(mat: Tensor, labels: np.ndarray, what: str) -> None:
    if mat.data.ndim != 2:
        raise ShapeError(f"{what} must be [B x k], got shape {mat.shape}")
    if mat.data.shape[0] != labels.size:
        raise ShapeError(f"{what} batch {mat.data.shape[0]} != labels {labels.size}")


def _margin_softmax(logits: np.ndarray, y: np.ndarray, m: float) -> tuple[float, np.ndarray]:
    """Shared CE / marginal-softmax kernel: loss value and d(loss)/d(logits)."""
    b = logits.shape[0]
    shifted = logits.copy()
    shifted[np.arange(b), y] -= m
    row_max = shifted.max(axis=1, keepdims=True)
    e = np.exp(shifted - row_max)
    denom = e.sum(axis=1, keepdims=True)
    log_probs = (shifted - row_max) - np.log(denom)
    loss = float(-log_probs[np.arange(b), y].mean())
    probs = e / denom
    probs[np.arange(b), y] -= 1.0
    return loss, probs / b


def ce_loss(tape: Optional[Tape], logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true class."""
    y = _as_labels(labels, logits.data.shape[-1] if logits.data.ndim == 2 else 0)
    _check_batch(logits, y, "logits")
    value, dlogits = _margin_softmax(logits.data, y, 0.0)
    out = Tensor(value)
    if tape is not None:
        tape.record((logits,), out, lambda g: (g * dlogits,))
    return out


def marginal_softmax_loss(tape: Optional[Tape], logits: Tensor, labels, m: float) -> Tensor:
    """Cross-entropy with the true-class logit reduced by margin ``m``."""
    if m < 0:
        raise ContractError(f"margin must be >= 0, got {m}")
    y = _as_labels(labels, logits.data.shape[-1] if logits.data.ndim == 2 else 0)
    _check_batch(logits, y, "logits")
    value, dlogits = _margin_softmax(logits.data, y, m)
    out = Tensor(value)
    if tape is not None:
        tape.record((logits,), out, lambda g: (g * dlogits,))
    return out


def center_loss(tape: Optional[Tape], features: Tensor, labels, centers: ClassCenters) -> Tensor:
    """Mean squared distance between each feature and its class center."""
    y = _as_labels(labels, centers.classes)
    _check_batch(features, y, "features")
    if features.data.shape[1] != centers.feature_dim:
        raise ShapeError(
            f"feature dim {features.data.shape[1]} != center dim {centers.feature_dim}"
        )
    b = y.size
    delta = features.data - centers.weights.data[y]
    out = Tensor(float((delta * delta).sum() / b))
    if tape is not None:
        def rule(g):
            df = (2.0 / b) * delta * g
            dc = np.zeros_like(centers.weights.data)
            np.add.at(dc, y, -(2.0 / b) * delta * g)
            return df, dc

        tape.record((features, centers.weights), out, rule)
    return out


def contrastive_loss(tape: Optional[Tape], features: Tensor, labels,
                     centers: ClassCenters, variant: str = "eq4",
                     normalizer: str = "batch") -> Tensor:
    """Ratio loss pulling features onto their center and apart from the rest.

    "eq4": per sample, distance-to-own-center over (1 + sum of distances to
    the other centers). "eq6": the denominator is the sum of distances from
    the own center to the other centers, without the +1 stabilizer; it raises
    when those centers coincide (denominator below guard).
    """
    y = _as_labels(labels, centers.classes)
    _check_batch(features, y, "features")
    n = centers.classes
    if n < 2:
        raise ContractError("contrastive loss needs at least 2 classes")
    if features.data.shape[1] != centers.feature_dim:
        raise ShapeError(
            f"feature dim {features.data.shape[1]} != center dim {centers.feature_dim}"
        )
    b = y.size
    k = b if normalizer == "batch" else n
    c = centers.weights.data
    diffs = features.data[:, None, :] - c[None, :, :]          # [B, n, d]
    dists = np.sqrt((diffs * diffs).sum(axis=2))                # [B, n]
    num = dists[np.arange(b), y]

    if variant == "eq4":
        denom = 1.0 + dists.sum(axis=1) - num
        out = Tensor(float((num / denom).sum() / k))
        if tape is not None:
            def rule(g):
                coef = np.tile((-num / (k * denom * denom))[:, None], (1, n))
                coef[np.arange(b), y] = 1.0 / (k * denom)
                safe = np.where(dists > _DIST_FLOOR, dists, np.inf)
                units = diffs / safe[:, :, None]
                weighted = coef[:, :, None] * units
                return g * weighted.sum(axis=1), g * -weighted.sum(axis=0)

            tape.record((features, centers.weights), out, rule)
        return out

    # eq6: denominator depends only on the sample's own class
    cdiffs = c[:, None, :] - c[None, :, :]                      # [n, n, d]
    cdist = np.sqrt((cdiffs * cdiffs).sum(axis=2))              # [n, n]
    row_sums = cdist.sum(axis=1)                                # diag is 0
    denom = row_sums[y]
    if denom.size and denom.min() < 1e-9:
        raise NumericsError(
            "eq6 contrastive denominator vanished: class centers coincide"
        )
    out = Tensor(float((num / denom).sum() / k))
    if tape is not None:
        def rule(g):
            safe_n = np.where(num > _DIST_FLOOR, num, np.inf)
            u_own = diffs[np.arange(b), y] / safe_n[:, None]     # [B, d]
            inv = 1.0 / (k * denom)
            df = g * u_own * inv[:, None]
            dc = np.zeros_like(c)
            np.add.at(dc, y, -g * u_own * inv[:, None])
            factor = -num / (k * denom * denom)                  # [B]
            per_class = np.zeros(n)
            np.add.at(per_class, y, factor)
            safe_cd = np.where(cdist > _DIST_FLOOR, cdist, np.inf)
            units = cdiffs / safe_cd[:, :, None]                 # v[a, j] = (c_a - c_j)/|.|
            for a in range(n):
                s = per_class[a]
                if s == 0.0:
                    continue
                dc[a] += g * s * units[a].sum(axis=0)
                dc -= g * s * units[a]
            return df, dc

        tape.record((features, centers.weights), out, rule)
    return out


def marginal_contrastive_loss(tape: Optional[Tape], features: Tensor, logits: Tensor,
                              labels, centers: ClassCenters,
                              config: LossConfig = LossConfig()) -> Tensor:
    """Unweighted sum of the marginal softmax and contrastive terms."""
    marg = marginal_softmax_loss(tape, logits, labels, config.margin)
    contr = contrastive_loss(tape, features, labels, centers,
                             variant=config.variant, normalizer=config.normalizer)
    return add(tape, marg, contr)
