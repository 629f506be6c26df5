import numpy as np
import pytest

from robust1d.encoding import AlphabetCodec, DEFAULT_ALPHABET
from robust1d.errors import ContractError


def test_default_alphabet_has_70_distinct_symbols():
    assert len(DEFAULT_ALPHABET) == 70
    assert len(set(DEFAULT_ALPHABET)) == 70
    lowers = [c for c in DEFAULT_ALPHABET if c.islower()]
    digits = [c for c in DEFAULT_ALPHABET if c.isdigit()]
    assert len(lowers) == 26 and len(digits) == 10
    assert "\n" in DEFAULT_ALPHABET


def test_encode_shape_and_onehot_rows():
    codec = AlphabetCodec(length=4)
    out = codec.encode_array("ab")
    assert out.shape == (4, 70)
    a, b = codec.alphabet.index("a"), codec.alphabet.index("b")
    assert out[0, a] == 1.0 and out[0].sum() == 1.0
    assert out[1, b] == 1.0 and out[1].sum() == 1.0
    assert not out[2:].any()  # rows beyond the text stay zero


def test_empty_text_is_all_zero():
    codec = AlphabetCodec(length=16)
    assert not codec.encode_array("").any()
    assert codec.encode("").shape == (16, 70)


def test_case_folding():
    codec = AlphabetCodec(length=4)
    assert np.array_equal(codec.encode_array("A"), codec.encode_array("a"))
    unfolded = AlphabetCodec(length=4, fold_case=False)
    assert not unfolded.encode_array("A").any()  # uppercase is out-of-alphabet


def test_out_of_alphabet_becomes_zero_row():
    codec = AlphabetCodec(length=4)
    out = codec.encode_array("aéb")  # accented char has no column
    assert out[0].sum() == 1.0
    assert out[1].sum() == 0.0
    assert out[2].sum() == 1.0


def test_truncation_beyond_window():
    codec = AlphabetCodec(length=3)
    out = codec.encode_array("abcdef")
    assert out.shape == (3, 70)
    assert out.sum() == 3.0


def test_reverse_flag_flips_order():
    codec = AlphabetCodec(length=3, reverse=True)
    fwd = AlphabetCodec(length=3)
    assert np.array_equal(codec.encode_array("abc"), fwd.encode_array("cba"))


def test_duplicate_alphabet_rejected():
    with pytest.raises(ContractError):
        AlphabetCodec(alphabet="aab", length=4)
