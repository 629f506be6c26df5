"""Fixed-length one-hot character encoding for text classifiers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .tensor import Tensor

# 26 lowercase letters, 10 digits, 33 punctuation/special marks (ASCII
# punctuation plus space), newline: 70 distinct symbols.
DEFAULT_ALPHABET = (
    "abcdefghijklmnopqrstuvwxyz"
    "0123456789"
    "-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{} "
    "\n"
)

TINY_LENGTH = 128
FULL_LENGTH = 1014


@dataclass(frozen=True)
class AlphabetCodec:
    """Maps text to an [L x |alphabet|] one-hot matrix.

    Characters outside the alphabet become all-zero rows; text longer than
    ``length`` is truncated, shorter text is zero-padded. ``fold_case``
    lowercases before lookup. ``reverse`` encodes the characters back to
    front (off by default).
    """

    alphabet: str = DEFAULT_ALPHABET
    length: int = FULL_LENGTH
    fold_case: bool = True
    reverse: bool = False
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ContractError("alphabet contains duplicate characters")
        if self.length < 1:
            raise ContractError(f"sequence length must be >= 1, got {self.length}")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.alphabet)})

    @property
    def width(self) -> int:
        return len(self.alphabet)

    def encode_array(self, text: str) -> np.ndarray:
        if self.fold_case:
            text = text.lower()
        if self.reverse:
            text = text[::-1]
        out = np.zeros((self.length, self.width), dtype=np.float64)
        for pos, ch in enumerate(text[: self.length]):
            col = self._index.get(ch)
            if col is not None:
                out[pos, col] = 1.0
        return out

    def encode(self, text: str) -> Tensor:
        return Tensor(self.encode_array(text))


def encode_text(codec: AlphabetCodec, text: str) -> Tensor:
    return codec.encode(text)


def tiny_codec() -> AlphabetCodec:
    return AlphabetCodec(length=TINY_LENGTH)


def full_codec() -> AlphabetCodec:
    return AlphabetCodec(length=FULL_LENGTH)
