"""Dataset loading, normalization, splitting, batching, and synthetic corpora.

Text corpora follow the quoted-CSV convention "class","title","body" with
1-based class labels; title and body are joined with a single space. Tabular
flows are numeric CSV columns min-max normalized to [0,1]; normalization
statistics come from the training rows only and out-of-range test values are
clipped (and counted).
"""

from __future__ import annotations

import csv
import random as _random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ContractError, FormatError


@dataclass
class TextDataset:
    records: list[tuple[int, str]]  # (1-based label, text)
    classes: int
    name: str = ""
    malformed_rows: int = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.asarray([r[0] for r in self.records], dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> "TextDataset":
        return TextDataset([self.records[i] for i in indices], self.classes, self.name)


@dataclass
class TabularDataset:
    features: np.ndarray            # [N x F] in [0,1]
    labels: np.ndarray              # 0-based ints
    mins: np.ndarray
    maxs: np.ndarray
    classes: int
    name: str = ""
    clip_count: int = 0
    raw: Optional[np.ndarray] = field(default=None, repr=False)  # pre-normalization values

    def __post_init__(self) -> None:
        if len(self.features) == 0:
            raise FormatError("tabular dataset has no rows")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: Sequence[int]) -> "TabularDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            features=self.features[idx],
            labels=self.labels[idx],
            raw=None if self.raw is None else self.raw[idx],
        )


Dataset = Union[TextDataset, TabularDataset]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratify: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ContractError(f"train fraction must be in (0,1), got {self.train_fraction}")


# ---------------------------------------------------------------------------
# text corpora

def load_text_csv(path, name: str = "") -> TextDataset:
    """Rows are "class","title"[,"body"]; malformed rows are counted, not fatal."""
    path = Path(path)
    records: list[tuple[int, str]] = []
    malformed = 0
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                label = int(row[0])
            except (ValueError, IndexError):
                malformed += 1
                continue
            if label < 1 or len(row) < 2:
                malformed += 1
                continue
            text = row[1] if len(row) == 2 or not row[2] else f"{row[1]} {row[2]}"
            records.append((label, text))
    if not records:
        raise FormatError(f"{path}: no valid rows")
    classes = max(r[0] for r in records)
    return TextDataset(records, classes, name=name or path.stem, malformed_rows=malformed)


def save_text_csv(dataset: TextDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_ALL)
        for label, text in dataset.records:
            writer.writerow([label, text])


# ---------------------------------------------------------------------------
# tabular flows

@dataclass(frozen=True)
class MinMaxStats:
    mins: np.ndarray
    maxs: np.ndarray


def fit_minmax(rows: np.ndarray) -> MinMaxStats:
    return MinMaxStats(rows.min(axis=0), rows.max(axis=0))


def apply_minmax(rows: np.ndarray, stats: MinMaxStats) -> tuple[np.ndarray, int]:
    """Scale to [0,1]; constant columns map to 0. Returns (values, clip count)."""
    span = stats.maxs - stats.mins
    safe = np.where(span > 0, span, 1.0)
    scaled = (rows - stats.mins) / safe
    scaled = np.where(span > 0, scaled, 0.0)
    clipped = np.clip(scaled, 0.0, 1.0)
    clip_count = int((clipped != scaled).sum())
    return clipped, clip_count


def load_tabular_csv(path, feature_columns: Optional[Sequence[str]] = None,
                     label_column: str = "label",
                     stats: Optional[MinMaxStats] = None,
                     name: str = "") -> TabularDataset:
    """Load a header-ed numeric CSV. Without ``stats`` the file's own rows fit
    the normalization; pass the training split's stats to normalize held-out
    files without leakage (overflow is clipped and counted)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if label_column not in header:
        raise FormatError(f"{path}: missing label column {label_column!r}")
    if feature_columns is None:
        feature_columns = [h for h in header if h != label_column]
    missing = [c for c in feature_columns if c not in header]
    if missing:
        raise FormatError(f"{path}: missing feature columns {missing}")
    fidx = [header.index(c) for c in feature_columns]
    lidx = header.index(label_column)
    feats = np.empty((len(rows), len(fidx)))
    labels = np.empty(len(rows), dtype=np.int64)
    for r, row in enumerate(rows):
        try:
            feats[r] = [float(row[i]) for i in fidx]
            labels[r] = int(float(row[lidx]))
        except (ValueError, IndexError):
            raise FormatError(f"{path}: non-numeric value in row {r + 2}") from None
    if stats is None:
        stats = fit_minmax(feats)
    scaled, clip_count = apply_minmax(feats, stats)
    return TabularDataset(scaled, labels, stats.mins.copy(), stats.maxs.copy(),
                          classes=int(labels.max()) + 1, name=name or path.stem,
                          clip_count=clip_count, raw=feats)


def save_tabular_csv(dataset: TabularDataset, path) -> None:
    values = dataset.raw if dataset.raw is not None else dataset.features
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(dataset.feature_count)] + ["label"])
        for row, label in zip(values, dataset.labels):
            writer.writerow([f"{v:.12g}" for v in row] + [int(label)])


# ---------------------------------------------------------------------------
# splitting and batching

def _split_indices(labels: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    n = labels.size
    rng = np.random.default_rng(spec.seed)
    if not spec.stratify:
        order = rng.permutation(n)
        cut = int(round(spec.train_fraction * n))
        return order[:cut], order[cut:]
    train_parts, test_parts = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise ContractError(f"class {cls} has {idx.size} sample(s); stratification needs >= 2")
        idx = rng.permutation(idx)
        cut = int(round(spec.train_fraction * idx.size))
        cut = min(max(cut, 1), idx.size - 1)  # both sides keep the class
        train_parts.append(idx[:cut])
        test_parts.append(idx[cut:])
    return np.concatenate(train_parts), np.concatenate(test_parts)


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded shuffle-and-split; disjoint and exhaustive.

    For tabular data the normalization is refit on the training rows and the
    test rows are re-scaled with those statistics (clipping counted), so the
    held-out side never leaks into the stats.
    """
    if isinstance(dataset, TextDataset):
        tr, te = _split_indices(dataset.labels, spec)
        return dataset.subset(tr.tolist()), dataset.subset(te.tolist())
    tr, te = _split_indices(dataset.labels, spec)
    if dataset.raw is None:
        return dataset.subset(tr), dataset.subset(te)
    stats = fit_minmax(dataset.raw[tr])
    train_scaled, _ = apply_minmax(dataset.raw[tr], stats)
    test_scaled, clips = apply_minmax(dataset.raw[te], stats)
    train = replace(dataset, features=train_scaled, labels=dataset.labels[tr],
                    mins=stats.mins.copy(), maxs=stats.maxs.copy(),
                    clip_count=0, raw=dataset.raw[tr])
    test = replace(dataset, features=test_scaled, labels=dataset.labels[te],
                   mins=stats.mins.copy(), maxs=stats.maxs.copy(),
                   clip_count=clips, raw=dataset.raw[te])
    return train, test


def batches(n_records: int, batch_size: int, seed: int, epoch: int = 0) -> list[np.ndarray]:
    """Seeded per-epoch shuffle chunked into batches; the last may be short."""
    if batch_size < 1:
        raise ContractError(f"batch size must be >= 1, got {batch_size}")
    order = np.random.default_rng([seed, epoch]).permutation(n_records)
    return [order[i:i + batch_size] for i in range(0, n_records, batch_size)]


# ---------------------------------------------------------------------------
# synthetic corpora for desk-scale runs

_FILLER = (
    "the and for with that this from have more some time very when just into "
    "over only also after other than then them well were area line part kind "
    "each about under again still place"
).split()


def signature_words(cls: int, count: int = 2) -> list[str]:
    """Deterministic made-up keywords for one class; disjoint across classes.

    Two longish words per class keep a tiny CNN trainable to high accuracy
    from a few hundred samples in a few epochs.
    """
    words = []
    for j in range(count):
        rng = _random.Random(1000003 * cls + j)
        n = rng.randint(6, 7)
        word = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(n))
        words.append(word)
    return words


def decoy_words(word: str, count: int, distance: int = 1) -> list[str]:
    """Deterministic substitution neighbors of a signature word, ``distance``
    characters away."""
    rng = _random.Random(sum(ord(c) for c in word) * 7919)
    out: set[str] = set()
    while len(out) < count:
        cand = word
        positions = rng.sample(range(len(word)), k=min(distance, len(word)))
        for p in positions:
            c = rng.choice([ch for ch in "abcdefghijklmnopqrstuvwxyz" if ch != cand[p]])
            cand = cand[:p] + c + cand[p + 1:]
        if cand != word:
            out.add(cand)
    return sorted(out)


def synth_text_dataset(classes: int, per_class: int, seed: int = 0,
                       decoys: int = 0, decoy_distance: int = 1,
                       name: str = "synth") -> TextDataset:
    """Filler words plus 2-4 class-signature keywords per sample.

    A keyword-counting oracle is exact on this corpus by construction; one
    signature word is always placed in the first eight tokens so truncating
    encoders still see the evidence. With ``decoys`` > 0 the filler pool also
    carries that many class-neutral one-edit neighbors of every signature
    word, which forces models to key on exact keyword spellings and makes
    single-character attacks genuinely destructive.
    """
    if classes < 2:
        raise ContractError(f"need at least 2 classes, got {classes}")
    rng = _random.Random(seed)
    sig = [signature_words(k) for k in range(classes)]
    pool = list(_FILLER)
    if decoys > 0:
        for words in sig:
            for word in words:
                pool.extend(decoy_words(word, decoys, decoy_distance))
    records: list[tuple[int, str]] = []
    for cls in range(classes):
        for _ in range(per_class):
            n_fill = rng.randint(8, 20)
            n_sig = rng.randint(2, 4)
            words = [rng.choice(pool) for _ in range(n_fill)]
            words += [rng.choice(sig[cls]) for _ in range(n_sig)]
            rng.shuffle(words)
            first = next(i for i, w in enumerate(words) if w in sig[cls])
            if first >= 8:
                swap_to = rng.randrange(0, 8)
                words[first], words[swap_to] = words[swap_to], words[first]
            records.append((cls + 1, " ".join(words)))
    return TextDataset(records, classes, name=name)


def keyword_oracle_accuracy(dataset: TextDataset) -> float:
    """Accuracy of the count-the-signature-words classifier, in percent."""
    sig = [set(signature_words(k)) for k in range(dataset.classes)]
    hits = 0
    for label, text in dataset.records:
        counts = [sum(w in s for w in text.split()) for s in sig]
        if int(np.argmax(counts)) + 1 == label:
            hits += 1
    return 100.0 * hits / len(dataset.records)


def synth_tabular_dataset(classes: int = 2, per_class: int = 100, features: int = 8,
                          seed: int = 0, spread: float = 0.05, gap: float = 0.25,
                          noise_features: int = 0,
                          name: str = "synthtab") -> TabularDataset:
    """Gaussian blobs in the unit box; class centers sit at 0.5 +/- gap/2 per
    informative coordinate with distinct seeded sign patterns, so any two
    centers differ by ``gap`` wherever their patterns disagree. Cleanly
    separable, yet fragile under L-infinity noise comparable to gap/2.

    ``noise_features`` appends coordinates that carry no class signal at all
    (uniform noise). Models trained without attacks tend to lean on them,
    which is exactly what a bounded attacker exploits.
    """
    if classes < 2:
        raise ContractError(f"need at least 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    patterns: list[tuple] = []
    while len(patterns) < classes:
        cand = tuple(rng.choice([-1.0, 1.0], size=features))
        if cand not in patterns:
            patterns.append(cand)
    centers = 0.5 + (gap / 2.0) * np.asarray(patterns)
    total = features + noise_features
    feats = np.empty((classes * per_class, total))
    labels = np.empty(classes * per_class, dtype=np.int64)
    for cls in range(classes):
        lo, hi = cls * per_class, (cls + 1) * per_class
        feats[lo:hi, :features] = centers[cls] + rng.normal(0.0, spread, (per_class, features))
        if noise_features:
            feats[lo:hi, features:] = rng.uniform(0.25, 0.75, (per_class, noise_features))
        labels[lo:hi] = cls
    feats = np.clip(feats, 0.0, 1.0)
    return TabularDataset(feats, labels, np.zeros(total), np.ones(total),
                          classes=classes, name=name, raw=feats.copy())


# ---------------------------------------------------------------------------
# manifests

def write_manifest(path, entries: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path) -> dict:
    path = Path(path)
    out: dict[str, str] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_from_manifest(manifest_path) -> Dataset:
    """Resolve a manifest's CSV (relative to the manifest) and load it."""
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    for key in ("path", "schema"):
        if key not in entries:
            raise FormatError(f"{manifest_path}: manifest is missing {key!r}")
    csv_path = manifest_path.parent / entries["path"]
    if not csv_path.exists():
        raise FormatError(f"{manifest_path}: dataset file {csv_path} does not exist")
    name = entries.get("name", csv_path.stem)
    if entries["schema"] == "text":
        ds = load_text_csv(csv_path, name=name)
    elif entries["schema"] == "tabular":
        cols = entries.get("feature_columns")
        ds = load_tabular_csv(
            csv_path,
            feature_columns=None if not cols else [c.strip() for c in cols.split(",")],
            label_column=entries.get("label_column", "label"),
            name=name,
        )
    else:
        raise FormatError(f"{manifest_path}: unknown schema {entries['schema']!r}")
    if "classes" in entries and int(entries["classes"]) != ds.classes:
        raise FormatError(
            f"{manifest_path}: manifest says {entries['classes']} classes, "
            f"data has {ds.classes}"
        )
    return ds
