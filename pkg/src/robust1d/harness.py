"""Experiment driver: training (standard and adversarial), evaluation under
attacks, and report generation.

Every piece of randomness (parameter init, batch order, subsampling, attack
seeds) derives from the experiment seed, so a (config, seed) pair fixes the
checkpoint bytes and every report value.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import losses as L
from .checkpoint import load_checkpoint, save_checkpoint
from .data import (Dataset, SplitSpec, TabularDataset, TextDataset, batches,
                   load_from_manifest, split)
from .encoding import AlphabetCodec
from .errors import ConfigError, ContractError, TrainingDiverged
from .gradient_attacks import ContinuousAttackSpec, batch_attack, fgsm, pgd
from .models import (CharCnnModel, TabularNet, charcnn_length_for_profile,
                     full_charcnn_config, load_state, tiny_charcnn_config,
                     tiny_tabular_config)
from .optim import OptimizerState, optimizer_step
from .tensor import Tape, Tensor, add, backward, scale, zero_grads
from .text_attacks import DiscreteAttackSpec, generate_adversarial

LOSS_KINDS = ("ce", "center", "marginal", "marginal-contrastive")
AttackSpec = Union[ContinuousAttackSpec, DiscreteAttackSpec]


# ---------------------------------------------------------------------------
# configuration

def parse_real(text: str) -> float:
    """Parse a real number, allowing fractions like 8/255."""
    text = str(text).strip()
    if "/" in text:
        num, _, den = text.partition("/")
        return float(num) / float(den)
    return float(text)


def parse_attack(spec: str) -> AttackSpec:
    """Parse attack strings like ``pgd:eps=8/255,steps=10`` or
    ``text:score=r1s,transform=substitute,budget=30``."""
    head, _, rest = spec.partition(":")
    head = head.strip().lower()
    fields: dict[str, str] = {}
    if rest.strip():
        for part in rest.split(","):
            key, eq, value = part.partition("=")
            if not eq:
                raise ConfigError(f"bad attack field {part!r} in {spec!r}")
            fields[key.strip().lower()] = value.strip()
    try:
        if head in ("fgsm", "pgd"):
            if "eps" not in fields:
                raise ConfigError(f"attack {spec!r} needs eps=")
            return ContinuousAttackSpec(
                epsilon=parse_real(fields["eps"]),
                steps=int(fields.get("steps", 10)),
                alpha=parse_real(fields["alpha"]) if "alpha" in fields else None,
                random_start=fields.get("random_start", "0") in ("1", "true", "yes"),
                seed=int(fields.get("seed", 0)),
                kind=head,
            )
        if head == "text":
            return DiscreteAttackSpec(
                scoring=fields.get("score", "r1s"),
                transform=fields.get("transform", "substitute"),
                budget=int(fields.get("budget", 30)),
                lam=parse_real(fields.get("lam", "1.0")),
                seed=int(fields.get("seed", 0)),
            )
    except (ValueError, ContractError) as exc:
        raise ConfigError(f"invalid attack spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown attack kind {head!r} in {spec!r}")


@dataclass
class ExperimentConfig:
    manifest: str
    out_dir: str = "run"
    seed: int = 0
    profile: str = "tiny"                  # tiny | full
    loss: str = "ce"
    margin: float = 0.5
    variant: str = "eq4"
    center_weight: float = 1.0
    normalizer: str = "batch"
    optimizer: str = "adam"
    lr: float = 0.001
    momentum: float = 0.9
    batch_size: Optional[int] = None       # profile default: 128 full, 32 tiny
    epochs: Optional[int] = None           # profile default: 100 full, 10 tiny
    train_fraction: float = 0.8
    stratify: bool = True
    adversarial: bool = False
    train_attack: Optional[str] = None
    eval_attacks: list[str] = field(default_factory=list)
    attack_loss: Optional[str] = None      # attack objective; None = training loss
    subsample: int = 500
    echo: str = ""                         # raw config text, carried into reports

    def __post_init__(self) -> None:
        if self.profile not in ("tiny", "full"):
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"unknown loss {self.loss!r}, want one of {LOSS_KINDS}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.batch_size is None:
            self.batch_size = 32 if self.profile == "tiny" else 128
        if self.epochs is None:
            self.epochs = 10 if self.profile == "tiny" else 100
        for spec in self.eval_attacks:
            parse_attack(spec)
        if self.train_attack is not None:
            parse_attack(self.train_attack)

    def validate_paths(self, base: Optional[Path] = None) -> None:
        path = Path(self.manifest)
        if base is not None and not path.is_absolute():
            path = base / path
            self.manifest = str(path)
        if not path.exists():
            raise ConfigError(f"dataset manifest {path} does not exist")


def config_from_toml(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    exp = doc.get("experiment", {})
    data = doc.get("data", {})
    model = doc.get("model", {})
    loss = doc.get("loss", {})
    optim = doc.get("optim", {})
    train = doc.get("train", {})
    ev = doc.get("eval", {})
    if "manifest" not in data:
        raise ConfigError(f"{path}: [data] section needs a manifest entry")
    cfg = ExperimentConfig(
        manifest=str(data["manifest"]),
        out_dir=str(exp.get("out", "run")),
        seed=int(exp.get("seed", 0)),
        profile=str(model.get("profile", "tiny")),
        loss=str(loss.get("kind", "ce")),
        margin=float(loss.get("margin", 0.5)),
        variant=str(loss.get("variant", "eq4")),
        center_weight=float(loss.get("center_weight", 1.0)),
        normalizer=str(loss.get("normalizer", "batch")),
        optimizer=str(optim.get("kind", "adam")),
        lr=float(optim.get("lr", 0.001)),
        momentum=float(optim.get("momentum", 0.9)),
        batch_size=int(optim["batch_size"]) if "batch_size" in optim else None,
        epochs=int(optim["epochs"]) if "epochs" in optim else None,
        train_fraction=float(data.get("train_fraction", 0.8)),
        stratify=bool(data.get("stratify", True)),
        adversarial=bool(train.get("adversarial", False)),
        train_attack=str(train["attack"]) if "attack" in train else None,
        eval_attacks=[str(a) for a in ev.get("attacks", [])],
        attack_loss=str(ev["attack_loss"]) if "attack_loss" in ev else None,
        subsample=int(ev.get("subsample", 500)),
        echo=text,
    )
    cfg.validate_paths(base=path.parent)
    return cfg


# ---------------------------------------------------------------------------
# loss bundles

@dataclass(frozen=True)
class LossBundle:
    kind: str = "ce"
    margin: float = 0.5
    variant: str = "eq4"
    center_weight: float = 1.0
    normalizer: str = "batch"

    @property
    def needs_centers(self) -> bool:
        return self.kind in ("center", "marginal-contrastive")

    def compute(self, tape, features, logits, labels,
                centers: Optional[L.ClassCenters]) -> Tensor:
        if self.kind == "ce":
            return L.ce_loss(tape, logits, labels)
        if self.kind == "marginal":
            return L.marginal_softmax_loss(tape, logits, labels, self.margin)
        if centers is None:
            raise ContractError(f"loss {self.kind!r} needs class centers")
        if self.kind == "center":
            ce = L.ce_loss(tape, logits, labels)
            dist = L.center_loss(tape, features, labels, centers)
            return add(tape, ce, scale(tape, dist, self.center_weight))
        return L.marginal_contrastive_loss(
            tape, features, logits, labels, centers,
            L.LossConfig(self.margin, self.variant, self.normalizer),
        )

    @classmethod
    def from_config(cls, config: ExperimentConfig, kind: Optional[str] = None) -> "LossBundle":
        return cls(kind=kind or config.loss, margin=config.margin,
                   variant=config.variant, center_weight=config.center_weight,
                   normalizer=config.normalizer)


def make_loss_fn(bundle: LossBundle, centers: Optional[L.ClassCenters]):
    """Adapter for the continuous attacks: (tape, model, x, y) -> scalar."""
    def loss_fn(tape, model, x, y):
        features, logits = model.forward_rows(x, tape)
        return bundle.compute(tape, features, logits, y, centers)
    return loss_fn


def make_loss_builder(bundle: LossBundle, centers: Optional[L.ClassCenters]):
    """Adapter for gradient word scoring: (tape, features, logits, labels) -> scalar."""
    def builder(tape, features, logits, labels):
        return bundle.compute(tape, features, logits, labels, centers)
    return builder


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    model: object
    centers: Optional[L.ClassCenters]
    bundle: LossBundle
    codec: Optional[AlphabetCodec]
    history: list[dict]
    checkpoint_path: Optional[Path]
    log_path: Optional[Path]
    train_set: Dataset
    test_set: Dataset


def build_model(config: ExperimentConfig, dataset: Dataset):
    """Seeded model (and codec, for text) for the configured profile."""
    rng = np.random.default_rng([config.seed, 0])
    if isinstance(dataset, TextDataset):
        codec = AlphabetCodec(length=charcnn_length_for_profile(config.profile))
        if config.profile == "tiny":
            arch = tiny_charcnn_config(dataset.classes)
        else:
            arch = full_charcnn_config(dataset.classes)
        return CharCnnModel(arch, codec, rng=rng), codec
    net = TabularNet(tiny_tabular_config(dataset.feature_count, dataset.classes), rng=rng)
    return net, None


def _encode_batch(codec: AlphabetCodec, records: list[tuple[int, str]]):
    xs = [codec.encode(text) for _, text in records]
    ys = np.asarray([label - 1 for label, _ in records], dtype=np.int64)
    return xs, ys


def clean_accuracy(model, codec: Optional[AlphabetCodec], dataset: Dataset) -> float:
    if isinstance(dataset, TextDataset):
        hits = sum(
            model.predict(codec.encode(text)) == label - 1
            for label, text in dataset.records
        )
        return 100.0 * hits / len(dataset)
    preds = model.predict_rows(dataset.features)
    return 100.0 * float((preds == dataset.labels).mean())


def _checkpoint_arrays(model, centers: Optional[L.ClassCenters]) -> dict[str, np.ndarray]:
    named = {name: t.data.copy() for name, t in model.params.items()}
    if centers is not None:
        named["centers"] = centers.weights.data.copy()
    return named


def _adversarial_records(model, codec, records, spec: DiscreteAttackSpec,
                         builder, base_index: int) -> list[tuple[int, str]]:
    out = []
    for offset, (label, text) in enumerate(records):
        per_sample = dataclasses.replace(spec, seed=spec.seed ^ (base_index + offset))
        adv_text, _, _ = generate_adversarial(model, codec, text, label - 1,
                                              per_sample, builder)
        out.append((label, adv_text))
    return out


def train(config: ExperimentConfig) -> TrainResult:
    """Standard or (with ``config.adversarial``) adversarial training.

    Adversarial batches are augmented 1:1 with attacks generated against the
    current parameters; a zero-budget continuous attack degenerates to clean
    duplicates and is skipped so the trajectory matches standard training
    exactly. A non-finite loss aborts, keeping the last epoch-boundary
    checkpoint on disk.
    """
    dataset = load_from_manifest(config.manifest)
    spec = SplitSpec(config.train_fraction, config.seed, config.stratify)
    train_set, test_set = split(dataset, spec)
    model, codec = build_model(config, dataset)
    bundle = LossBundle.from_config(config)
    centers = None
    if bundle.needs_centers:
        centers = L.ClassCenters.init(model.classes, model.feature_dim,
                                      rng=np.random.default_rng([config.seed, 1]))
    params = model.parameters() + ([centers.weights] if centers is not None else [])
    state = OptimizerState.for_params(params, kind=config.optimizer, lr=config.lr,
                                      momentum=config.momentum)
    train_attack: Optional[AttackSpec] = None
    if config.adversarial:
        if config.train_attack is None:
            raise ConfigError("adversarial training needs exactly one train attack")
        train_attack = parse_attack(config.train_attack)
        augment = not (isinstance(train_attack, ContinuousAttackSpec)
                       and train_attack.epsilon == 0)
    else:
        augment = False

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.mdf"
    log_path = out_dir / "train.log"
    attack_loss_fn = make_loss_fn(bundle, centers)
    attack_builder = make_loss_builder(bundle, centers)
    dropout_rng = np.random.default_rng([config.seed, 2])

    save_checkpoint(ckpt_path, _checkpoint_arrays(model, centers))  # last-good init
    history: list[dict] = []
    log_lines: list[str] = []
    n = len(train_set)
    is_text = isinstance(train_set, TextDataset)
    for epoch in range(config.epochs):
        losses_seen: list[float] = []
        sizes: list[int] = []
        for bidx, batch in enumerate(batches(n, config.batch_size, config.seed, epoch)):
            if is_text:
                records = [train_set.records[i] for i in batch]
                if augment and isinstance(train_attack, DiscreteAttackSpec):
                    records = records + _adversarial_records(
                        model, codec, records, train_attack, attack_builder,
                        base_index=epoch * n + int(batch[0]),
                    )
                xs, ys = _encode_batch(codec, records)
                tape = Tape()
                features, logits = model.forward_rows(xs, tape, train=True, rng=dropout_rng)
            else:
                rows = train_set.features[batch]
                ys = train_set.labels[batch]
                if augment and isinstance(train_attack, ContinuousAttackSpec):
                    if train_attack.kind == "fgsm":
                        adv = fgsm(model, attack_loss_fn, Tensor(rows), ys,
                                   train_attack.epsilon)
                    else:
                        adv = pgd(model, attack_loss_fn, Tensor(rows), ys, train_attack,
                                  rng=np.random.default_rng(
                                      [config.seed, 3, epoch, bidx]))
                    rows = np.concatenate([rows, adv.data], axis=0)
                    ys = np.concatenate([ys, ys])
                tape = Tape()
                features, logits = model.forward_rows(Tensor(rows), tape)
            loss = bundle.compute(tape, features, logits, ys, centers)
            if not np.isfinite(loss.data):
                log_lines.append(f"epoch {epoch + 1} diverged (non-finite loss)")
                log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")
                raise TrainingDiverged(
                    f"non-finite loss in epoch {epoch + 1}; "
                    f"last good checkpoint kept at {ckpt_path}",
                    checkpoint_path=ckpt_path,
                )
            zero_grads(params)
            backward(tape, loss)
            optimizer_step(state, params)
            losses_seen.append(loss.item())
            sizes.append(ys.size)
        val_acc = clean_accuracy(model, codec, test_set)
        entry = {
            "epoch": epoch + 1,
            "loss": float(np.mean(losses_seen)),
            "val_acc": val_acc,
            "batch_sizes": sizes,
        }
        history.append(entry)
        log_lines.append(
            f"epoch {entry['epoch']} loss {entry['loss']:.6f} "
            f"val_acc {val_acc:.2f} batch_sizes {sizes}"
        )
        save_checkpoint(ckpt_path, _checkpoint_arrays(model, centers))
    log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return TrainResult(model, centers, bundle, codec, history, ckpt_path, log_path,
                       train_set, test_set)


def adversarial_train(config: ExperimentConfig) -> TrainResult:
    if config.train_attack is None:
        raise ConfigError("adversarial training needs exactly one train attack")
    return train(dataclasses.replace(config, adversarial=True))


def load_trained(config: ExperimentConfig, checkpoint_path) -> TrainResult:
    """Rebuild the model for ``config`` and load checkpoint weights into it."""
    dataset = load_from_manifest(config.manifest)
    spec = SplitSpec(config.train_fraction, config.seed, config.stratify)
    train_set, test_set = split(dataset, spec)
    model, codec = build_model(config, dataset)
    named = load_checkpoint(checkpoint_path)
    load_state(model, named)
    bundle = LossBundle.from_config(config)
    centers = None
    if bundle.needs_centers:
        if "centers" not in named:
            raise ConfigError(f"checkpoint {checkpoint_path} lacks class centers")
        centers = L.ClassCenters(Tensor(named["centers"]))
    return TrainResult(model, centers, bundle, codec, [], Path(checkpoint_path), None,
                       train_set, test_set)


# ---------------------------------------------------------------------------
# evaluation and reports

@dataclass
class ReportRow:
    dataset: str
    loss: str
    attack: str
    scoring: str
    transform: str
    epsilon: str
    clean_accuracy: float
    adversarial_accuracy: float
    samples: int
    seed: int


@dataclass
class EvalReport:
    rows: list[ReportRow]


def evaluate(result: TrainResult, attack_specs: list[AttackSpec],
             subsample: Optional[int] = 500, seed: int = 0,
             attack_bundle: Optional[LossBundle] = None) -> EvalReport:
    """Clean accuracy plus adversarial accuracy per attack on the test split.

    Large test splits are subsampled with a seeded draw (size recorded in the
    report). Attacks run against ``attack_bundle`` (default: the training
    loss). The model and checkpoint are never mutated.
    """
    model, codec = result.model, result.codec
    test = result.test_set
    n = len(test)
    if subsample is not None and n > subsample:
        idx = np.sort(np.random.default_rng([seed, 4]).choice(n, subsample, replace=False))
        test = test.subset(idx.tolist() if isinstance(test, TextDataset) else idx)
        n = subsample
    bundle = attack_bundle or result.bundle
    loss_fn = make_loss_fn(bundle, result.centers)
    builder = make_loss_builder(bundle, result.centers)
    dataset_name = test.name
    loss_name = result.bundle.kind

    clean = clean_accuracy(model, codec, test)
    rows = [ReportRow(dataset_name, loss_name, "clean", "", "", "", clean, clean, n, seed)]
    for spec in attack_specs:
        if isinstance(spec, ContinuousAttackSpec):
            if not isinstance(test, TabularDataset):
                raise ConfigError(f"attack {spec.label()} needs tabular data")
            _, success, _ = batch_attack(model, loss_fn, test.features, test.labels, spec)
            adv_acc = 100.0 * float((~success).mean())
            rows.append(ReportRow(dataset_name, loss_name, spec.label(), "", "",
                                  f"{spec.epsilon:g}", clean, adv_acc, n, seed))
        else:
            if not isinstance(test, TextDataset):
                raise ConfigError(f"attack {spec.label()} needs text data")
            wins = 0
            for i, (label, text) in enumerate(test.records):
                per_sample = dataclasses.replace(spec, seed=spec.seed ^ i)
                _, _, success = generate_adversarial(model, codec, text, label - 1,
                                                     per_sample, builder)
                wins += int(not success)
            adv_acc = 100.0 * wins / n
            rows.append(ReportRow(dataset_name, loss_name, spec.label(), spec.scoring,
                                  spec.transform, str(spec.budget), clean, adv_acc, n, seed))
    return EvalReport(rows)


def _fmt(value: float) -> str:
    return format(round(value, 4), "g")


def write_report(reports: list[EvalReport], out_dir, config_echo: str = "") -> tuple[Path, Path]:
    """Write report.csv and report.json; adds an improvement column (ours
    minus baseline) when exactly two losses are present and one is plain CE."""
    if not reports:
        raise ContractError("write_report needs at least one evaluation report")
    rows = [row for report in reports for row in report.rows]
    losses = sorted({row.loss for row in rows})
    with_improvement = len(losses) == 2 and "ce" in losses
    baseline: dict[tuple, float] = {}
    if with_improvement:
        for row in rows:
            if row.loss == "ce":
                key = (row.dataset, row.attack, row.scoring, row.transform, row.epsilon)
                baseline[key] = row.adversarial_accuracy

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    json_path = out_dir / "report.json"

    header = ["dataset", "loss", "attack", "scoring", "transform", "epsilon",
              "clean_accuracy", "adversarial_accuracy", "samples", "seed"]
    if with_improvement:
        header.append("improvement")
    json_rows = []
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            cells = [row.dataset, row.loss, row.attack, row.scoring, row.transform,
                     row.epsilon, _fmt(row.clean_accuracy), _fmt(row.adversarial_accuracy),
                     str(row.samples), str(row.seed)]
            entry = dataclasses.asdict(row)
            if with_improvement:
                key = (row.dataset, row.attack, row.scoring, row.transform, row.epsilon)
                if row.loss != "ce" and key in baseline:
                    delta = row.adversarial_accuracy - baseline[key]
                    cells.append(_fmt(delta))
                    entry["improvement"] = round(delta, 4)
                else:
                    cells.append("")
            json_rows.append(entry)
            writer.writerow(cells)
    payload = {"config": config_echo, "rows": json_rows}
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    return csv_path, json_path
