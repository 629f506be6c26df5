"""Character-level CNN and a small fully-connected net for tabular inputs.

Both models expose the same contract: ``forward`` maps one encoded sample to
(penultimate features, logits) where logits are the product of the final
class matrix W [n x d] with the features; W carries no bias unless the config
asks for one. ``forward_rows`` runs a whole batch and returns [B x d] /
[B x n] stacks living on the same tape, which is what the losses consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .encoding import AlphabetCodec, FULL_LENGTH, TINY_LENGTH
from .errors import ContractError, FormatError, ShapeError
from .tensor import Tape, Tensor


# a small positive bias keeps fresh activations off the relu kink, which the
# zero-padded tail of encoded text would otherwise sit on exactly (finite
# differences disagree with the subgradient there)
_BIAS_INIT = 0.02


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-stable softmax (subtracts the row max before exponentiation)."""
    z = np.atleast_2d(z)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: int
    pool: Optional[int] = None  # non-overlapping max pool after the layer


@dataclass(frozen=True)
class CharCnnConfig:
    conv: tuple[ConvSpec, ...]
    fc: tuple[int, ...]
    classes: int
    dropout: float = 0.0
    final_bias: bool = False

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise ContractError(f"need at least 2 classes, got {self.classes}")
        if not self.fc or any(w <= 0 for w in self.fc):
            raise ContractError("fully-connected widths must be positive")

    @property
    def feature_dim(self) -> int:
        return self.fc[-1]

    def flatten_length(self, length: int, channels: int) -> int:
        """Trace the conv/pool arithmetic; raises if any stage collapses."""
        l, c = length, channels
        for i, spec in enumerate(self.conv):
            if l < spec.kernel:
                raise ShapeError(f"conv layer {i}: length {l} < kernel {spec.kernel}")
            l = l - spec.kernel + 1
            if spec.pool:
                if spec.pool > l:
                    raise ShapeError(f"pool after layer {i}: window {spec.pool} > length {l}")
                l = (l - spec.pool) // spec.pool + 1
            c = spec.out_channels
        if l <= 0:
            raise ShapeError("conv stack consumed the whole sequence")
        return l * c


def tiny_charcnn_config(classes: int, dropout: float = 0.0) -> CharCnnConfig:
    return CharCnnConfig(
        conv=(ConvSpec(64, 5, pool=2), ConvSpec(64, 3, pool=2)),
        fc=(128,),
        classes=classes,
        dropout=dropout,
    )


def full_charcnn_config(classes: int, dropout: float = 0.5) -> CharCnnConfig:
    return CharCnnConfig(
        conv=(
            ConvSpec(256, 7, pool=3),
            ConvSpec(256, 7, pool=3),
            ConvSpec(256, 3),
            ConvSpec(256, 3),
            ConvSpec(256, 3),
            ConvSpec(256, 3, pool=3),
        ),
        fc=(1024, 1024),
        classes=classes,
        dropout=dropout,
    )


def charcnn_length_for_profile(profile: str) -> int:
    if profile == "tiny":
        return TINY_LENGTH
    if profile == "full":
        return FULL_LENGTH
    raise ContractError(f"unknown profile {profile!r}")


class CharCnnModel:
    """Conv stack over one-hot characters, FC layers, final class matrix W."""

    def __init__(self, config: CharCnnConfig, codec: AlphabetCodec,
                 rng: Optional[np.random.Generator] = None) -> None:
        self.config = config
        self.codec = codec
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict[str, Tensor] = {}
        cin = codec.width
        for i, spec in enumerate(config.conv):
            fan_in = cin * spec.kernel
            self.params[f"conv{i}.kernel"] = Tensor(
                rng.normal(0.0, np.sqrt(2.0 / fan_in), (spec.out_channels, cin, spec.kernel))
            )
            self.params[f"conv{i}.bias"] = Tensor(np.full(spec.out_channels, _BIAS_INIT))
            cin = spec.out_channels
        flat = config.flatten_length(codec.length, codec.width)
        width_in = flat
        for i, width in enumerate(config.fc):
            self.params[f"fc{i}.weight"] = Tensor(
                rng.normal(0.0, np.sqrt(2.0 / width_in), (width_in, width))
            )
            self.params[f"fc{i}.bias"] = Tensor(np.full(width, _BIAS_INIT))
            width_in = width
        self.params["final.weight"] = Tensor(
            rng.normal(0.0, np.sqrt(1.0 / config.feature_dim), (config.classes, config.feature_dim))
        )
        if config.final_bias:
            self.params["final.bias"] = Tensor(np.zeros(config.classes))

    @property
    def classes(self) -> int:
        return self.config.classes

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def parameters(self) -> list[Tensor]:
        return [self.params[name] for name in sorted(self.params)]

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def _check_input(self, x: Tensor) -> None:
        want = (self.codec.length, self.codec.width)
        if x.data.shape != want:
            raise ShapeError(f"expected encoded input {want}, got {x.shape}")

    def _sample_graph(self, tape: Optional[Tape], x: Tensor,
                      train: bool = False, rng: Optional[np.random.Generator] = None
                      ) -> tuple[Tensor, Tensor]:
        """Per-sample graph: returns ([1 x d] features, [1 x n] logits)."""
        self._check_input(x)
        h = T.transpose2d(tape, x)  # [alphabet x L], channels first
        for i, spec in enumerate(self.config.conv):
            h = T.conv1d(tape, h, self.params[f"conv{i}.kernel"],
                         bias=self.params[f"conv{i}.bias"])
            h = T.relu(tape, h)
            if spec.pool:
                h = T.maxpool1d(tape, h, spec.pool, spec.pool)
        h = T.reshape(tape, h, (1, h.size))
        for i in range(len(self.config.fc)):
            h = T.matmul(tape, h, self.params[f"fc{i}.weight"])
            h = T.add_rowvec(tape, h, self.params[f"fc{i}.bias"])
            h = T.relu(tape, h)
            if train and self.config.dropout > 0.0:
                h = T.dropout(tape, h, self.config.dropout, rng)
        features = h
        logits = T.matmul(tape, features, T.transpose2d(tape, self.params["final.weight"]))
        if self.config.final_bias:
            logits = T.add_rowvec(tape, logits, self.params["final.bias"])
        return features, logits

    def forward(self, x: Tensor, tape: Optional[Tape] = None) -> tuple[Tensor, Tensor]:
        f, z = self._sample_graph(tape, x)
        return (T.reshape(tape, f, (self.feature_dim,)),
                T.reshape(tape, z, (self.classes,)))

    def forward_rows(self, xs: list[Tensor], tape: Optional[Tape] = None,
                     train: bool = False, rng: Optional[np.random.Generator] = None
                     ) -> tuple[Tensor, Tensor]:
        parts = [self._sample_graph(tape, x, train=train, rng=rng) for x in xs]
        features = T.concat_rows(tape, [p[0] for p in parts])
        logits = T.concat_rows(tape, [p[1] for p in parts])
        return features, logits

    def logits_array(self, x: Tensor) -> np.ndarray:
        _, z = self._sample_graph(None, x)
        return z.data[0]

    def predict(self, x: Tensor) -> int:
        return int(np.argmax(self.logits_array(x)))


@dataclass(frozen=True)
class TabularNetConfig:
    features: int
    hidden: tuple[int, ...]
    classes: int
    final_bias: bool = False

    def __post_init__(self) -> None:
        if self.features < 1:
            raise ContractError(f"need at least 1 input feature, got {self.features}")
        if self.classes < 2:
            raise ContractError(f"need at least 2 classes, got {self.classes}")
        if not self.hidden or any(w <= 0 for w in self.hidden):
            raise ContractError("hidden widths must be positive")


def tiny_tabular_config(features: int, classes: int) -> TabularNetConfig:
    return TabularNetConfig(features=features, hidden=(32, 32), classes=classes)


class TabularNet:
    """ReLU MLP over [0,1]-normalized feature rows."""

    def __init__(self, config: TabularNetConfig,
                 rng: Optional[np.random.Generator] = None) -> None:
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict[str, Tensor] = {}
        width_in = config.features
        for i, width in enumerate(config.hidden):
            self.params[f"fc{i}.weight"] = Tensor(
                rng.normal(0.0, np.sqrt(2.0 / width_in), (width_in, width))
            )
            self.params[f"fc{i}.bias"] = Tensor(np.full(width, _BIAS_INIT))
            width_in = width
        self.params["final.weight"] = Tensor(
            rng.normal(0.0, np.sqrt(1.0 / width_in), (config.classes, width_in))
        )
        if config.final_bias:
            self.params["final.bias"] = Tensor(np.zeros(config.classes))

    @property
    def classes(self) -> int:
        return self.config.classes

    @property
    def feature_dim(self) -> int:
        return self.config.hidden[-1]

    def parameters(self) -> list[Tensor]:
        return [self.params[name] for name in sorted(self.params)]

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.params.items()}

    def forward_rows(self, x: Tensor, tape: Optional[Tape] = None,
                     train: bool = False, rng: Optional[np.random.Generator] = None
                     ) -> tuple[Tensor, Tensor]:
        if x.data.ndim != 2 or x.data.shape[1] != self.config.features:
            raise ShapeError(f"expected [B x {self.config.features}] input, got {x.shape}")
        h = x
        for i in range(len(self.config.hidden)):
            h = T.matmul(tape, h, self.params[f"fc{i}.weight"])
            h = T.add_rowvec(tape, h, self.params[f"fc{i}.bias"])
            h = T.relu(tape, h)
        logits = T.matmul(tape, h, T.transpose2d(tape, self.params["final.weight"]))
        if self.config.final_bias:
            logits = T.add_rowvec(tape, logits, self.params["final.bias"])
        return h, logits

    def logits_array(self, x_rows: np.ndarray) -> np.ndarray:
        _, z = self.forward_rows(Tensor(np.atleast_2d(x_rows)))
        return z.data

    def predict_rows(self, x_rows: np.ndarray) -> np.ndarray:
        return self.logits_array(x_rows).argmax(axis=1)


def predict_true_class_prob(model: CharCnnModel, codec: AlphabetCodec,
                            text: str, y: int) -> float:
    """Softmax probability of class ``y``; the F behind all discrete scores."""
    if not 0 <= y < model.classes:
        raise ContractError(f"class index {y} out of range for {model.classes} classes")
    return prob_true_from_encoded(model, codec.encode(text), y)


def prob_true_from_encoded(model: CharCnnModel, x: Tensor, y: int) -> float:
    return float(softmax(model.logits_array(x))[0, y])


def load_state(model, named: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into a model; any name/shape drift is a format error."""
    for name, param in model.params.items():
        if name not in named:
            raise FormatError(f"checkpoint is missing parameter {name!r}")
        if named[name].shape != param.data.shape:
            raise FormatError(
                f"checkpoint parameter {name!r} has shape {named[name].shape}, "
                f"model expects {param.data.shape}"
            )
        param.data = np.ascontiguousarray(named[name], dtype=np.float64)
