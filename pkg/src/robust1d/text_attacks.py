"""Black-box and gradient-guided text attacks.

Word importance is scored with one of: Random, Gradient, Replace-1 (score the
drop in true-class probability when the word's characters are blanked out of
the vocabulary), Temporal Head (prefix prediction differences), Temporal Tail
(suffix differences), or Combined (head + lambda * tail). The highest-ranked
words then receive one character-level transform each (swap / substitute /
delete / insert) until the model flips or the edit budget is spent.

Prefix k keeps the encoded characters up to the start of word k+1 and blanks
the rest; suffix k re-encodes the text from the start of word k, left-aligned
in the window. With those boundaries each temporal score telescopes exactly:
the scores of one text sum to F(full input) - F(blank input).
"""

from __future__ import annotations

import csv
import re
import string
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import tensor as T
from .encoding import AlphabetCodec
from .errors import ContractError, NumericsError, ShapeError
from .losses import ce_loss
from .models import CharCnnModel, softmax
from .tensor import Tape, Tensor, backward

SCORINGS = ("random", "gradient", "r1s", "ths", "tts", "combined")
TRANSFORMS = ("swap", "substitute", "delete", "insert")

_WORD = re.compile(r"\S+")
_LETTERS = string.ascii_lowercase

# loss_builder(tape, features, logits, labels) -> scalar; defaults to plain CE
LossBuilder = Callable[[Tape, Tensor, Tensor, np.ndarray], Tensor]


@dataclass(frozen=True)
class TokenizedText:
    original: str
    words: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]  # [start, end) character offsets


def tokenize(text: str) -> TokenizedText:
    """Split into maximal runs of non-whitespace, keeping character spans."""
    words, spans = [], []
    for match in _WORD.finditer(text):
        words.append(match.group())
        spans.append((match.start(), match.end()))
    return TokenizedText(text, tuple(words), tuple(spans))


@dataclass(frozen=True)
class DiscreteAttackSpec:
    scoring: str = "r1s"
    transform: str = "substitute"
    budget: int = 30
    lam: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scoring not in SCORINGS:
            raise ContractError(f"unknown scoring {self.scoring!r}, want one of {SCORINGS}")
        if self.transform not in TRANSFORMS:
            raise ContractError(f"unknown transform {self.transform!r}, want one of {TRANSFORMS}")
        if self.budget < 1:
            raise ContractError(f"budget must be >= 1, got {self.budget}")
        if self.lam < 0:
            raise ContractError(f"lambda must be >= 0, got {self.lam}")

    def label(self) -> str:
        lam = f",lam={self.lam:g}" if self.scoring == "combined" else ""
        return f"text:score={self.scoring},transform={self.transform},budget={self.budget}{lam}"


def _prob(model: CharCnnModel, enc: np.ndarray, y: int) -> float:
    return float(softmax(model.logits_array(Tensor(enc)))[0, y])


def score_r1s(model: CharCnnModel, codec: AlphabetCodec, text: str, y: int) -> np.ndarray:
    """Probability drop from blanking each word out of the vocabulary."""
    tok = tokenize(text)
    enc = codec.encode_array(text)
    base = _prob(model, enc, y)
    scores = np.zeros(len(tok.words))
    for i, (start, end) in enumerate(tok.spans):
        if start >= codec.length:
            continue  # word is beyond the window; blanking it changes nothing
        masked = enc.copy()
        masked[start:min(end, codec.length)] = 0.0
        scores[i] = base - _prob(model, masked, y)
    return scores


def _prefix_cuts(tok: TokenizedText, length: int) -> list[int]:
    # prefix k ends where word k+1 starts; the last prefix is the full window
    cuts = [min(tok.spans[k + 1][0], length) for k in range(len(tok.words) - 1)]
    cuts.append(length)
    return cuts


def score_ths(model: CharCnnModel, codec: AlphabetCodec, text: str, y: int) -> np.ndarray:
    """Temporal head: F(prefix through word k) - F(prefix through word k-1)."""
    tok = tokenize(text)
    if not tok.words:
        return np.zeros(0)
    enc = codec.encode_array(text)
    probs = [_prob(model, np.zeros_like(enc), y)]  # empty prefix
    for cut in _prefix_cuts(tok, codec.length):
        pref = enc.copy()
        pref[cut:] = 0.0
        probs.append(_prob(model, pref, y))
    return np.diff(np.asarray(probs))


def score_tts(model: CharCnnModel, codec: AlphabetCodec, text: str, y: int) -> np.ndarray:
    """Temporal tail: F(suffix from word k) - F(suffix from word k+1)."""
    tok = tokenize(text)
    n = len(tok.words)
    if not n:
        return np.zeros(0)
    probs = []
    for k in range(n):
        start = 0 if k == 0 else tok.spans[k][0]
        probs.append(_prob(model, codec.encode_array(text[start:]), y))
    probs.append(_prob(model, np.zeros((codec.length, codec.width)), y))  # empty suffix
    p = np.asarray(probs)
    return p[:-1] - p[1:]


def score_combined(ths: np.ndarray, tts: np.ndarray, lam: float) -> np.ndarray:
    ths = np.asarray(ths, dtype=np.float64)
    tts = np.asarray(tts, dtype=np.float64)
    if ths.shape != tts.shape:
        raise ShapeError(f"score lengths differ: {ths.shape} vs {tts.shape}")
    return ths + lam * tts


def score_gradient(model: CharCnnModel, codec: AlphabetCodec, text: str, y: int,
                   loss_builder: Optional[LossBuilder] = None) -> np.ndarray:
    """Word scores from the loss gradient w.r.t. the one-hot input matrix.

    Per character: L2 norm of the gradient row over the alphabet axis; per
    word: sum of its characters' norms.
    """
    tok = tokenize(text)
    leaf = codec.encode(text)
    tape = Tape()
    features, logits = model.forward(leaf, tape)
    f2 = T.reshape(tape, features, (1, features.size))
    z2 = T.reshape(tape, logits, (1, logits.size))
    labels = np.asarray([y], dtype=np.int64)
    if loss_builder is None:
        loss = ce_loss(tape, z2, labels)
    else:
        loss = loss_builder(tape, f2, z2, labels)
    backward(tape, loss, wrt=[leaf])
    if not np.all(np.isfinite(leaf.grad)):
        raise NumericsError("gradient scoring produced non-finite values")
    per_char = np.sqrt((leaf.grad * leaf.grad).sum(axis=1))
    scores = np.zeros(len(tok.words))
    for i, (start, end) in enumerate(tok.spans):
        scores[i] = per_char[start:min(end, codec.length)].sum()
    return scores


def score_random(words: Sequence[str], seed: int) -> np.ndarray:
    """A seeded random ranking expressed as scores; independent of any model."""
    n = len(words)
    order = np.random.default_rng(seed).permutation(n)
    scores = np.empty(n)
    scores[order] = np.arange(n, 0, -1, dtype=np.float64)
    return scores


def apply_transform(word: str, transform: str, rng: np.random.Generator) -> tuple[str, bool]:
    """Apply exactly one character edit; returns (new word, applied flag).

    Violated preconditions (swap on a 1-char word, delete on an empty one)
    return the word unchanged with the flag down.
    """
    if transform == "swap":
        if len(word) < 2:
            return word, False
        p = int(rng.integers(0, len(word) - 1))
        return word[:p] + word[p + 1] + word[p] + word[p + 2:], True
    if transform == "substitute":
        if not word:
            return word, False
        p = int(rng.integers(0, len(word)))
        pool = [c for c in _LETTERS if c != word[p]]
        return word[:p] + pool[int(rng.integers(0, len(pool)))] + word[p + 1:], True
    if transform == "delete":
        if not word:
            return word, False
        p = int(rng.integers(0, len(word)))
        return word[:p] + word[p + 1:], True
    if transform == "insert":
        p = int(rng.integers(0, len(word) + 1))
        letter = _LETTERS[int(rng.integers(0, len(_LETTERS)))]
        return word[:p] + letter + word[p:], True
    raise ContractError(f"unknown transform {transform!r}")


def _render(tok: TokenizedText, words: Sequence[str]) -> str:
    """Reassemble the text with edited words, keeping original separators."""
    pieces = []
    prev_end = 0
    for (start, end), word in zip(tok.spans, words):
        pieces.append(tok.original[prev_end:start])
        pieces.append(word)
        prev_end = end
    pieces.append(tok.original[prev_end:])
    return "".join(pieces)


def _word_scores(model: CharCnnModel, codec: AlphabetCodec, text: str, y: int,
                 spec: DiscreteAttackSpec,
                 loss_builder: Optional[LossBuilder]) -> np.ndarray:
    if spec.scoring == "random":
        return score_random(tokenize(text).words, spec.seed)
    if spec.scoring == "gradient":
        return score_gradient(model, codec, text, y, loss_builder)
    if spec.scoring == "r1s":
        return score_r1s(model, codec, text, y)
    if spec.scoring == "ths":
        return score_ths(model, codec, text, y)
    if spec.scoring == "tts":
        return score_tts(model, codec, text, y)
    ths = score_ths(model, codec, text, y)
    tts = score_tts(model, codec, text, y)
    return score_combined(ths, tts, spec.lam)


def generate_adversarial(model: CharCnnModel, codec: AlphabetCodec, text: str, y: int,
                         spec: DiscreteAttackSpec,
                         loss_builder: Optional[LossBuilder] = None
                         ) -> tuple[str, int, bool]:
    """Greedy word-ranking attack under an edit budget.

    Scores are computed once on the clean text; words are visited in
    descending score order (ties to the lower index) and each receives one
    transform. Edits are kept even when they do not flip the prediction. The
    attack stops as soon as the model misclassifies or ``budget`` words have
    been modified. Returns (final text, modified word count, success flag).
    """
    def predict(t: str) -> int:
        return int(model.logits_array(codec.encode(t)).argmax())

    if predict(text) != y:
        return text, 0, True  # clean sample already misclassified

    tok = tokenize(text)
    if not tok.words:
        return text, 0, False

    scores = _word_scores(model, codec, text, y, spec, loss_builder)
    ranking = sorted(range(len(tok.words)), key=lambda i: (-scores[i], i))
    rng = np.random.default_rng([spec.seed, 1])
    words = list(tok.words)
    edits = 0
    for idx in ranking:
        if edits >= spec.budget:
            break
        new_word, applied = apply_transform(words[idx], spec.transform, rng)
        if not applied or new_word == words[idx]:
            continue
        words[idx] = new_word
        edits += 1
        current = _render(tok, words)
        if predict(current) != y:
            return current, edits, True
    return _render(tok, words), edits, False


def save_adversarial_csv(path, rows: Sequence[tuple]) -> None:
    """Write (label, text, edits_used, success, scoring, transform) rows in the
    input-corpus CSV convention (all fields quoted)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_ALL)
        for label, text, edits, success, scoring, transform in rows:
            writer.writerow([label, text, edits, int(bool(success)), scoring, transform])
