import math

import numpy as np
import pytest

from robust1d.errors import ContractError, NumericsError, ShapeError
from robust1d.gradcheck import grad_check
from robust1d.losses import (ClassCenters, LossConfig, ce_loss, center_loss,
                             contrastive_loss, marginal_contrastive_loss,
                             marginal_softmax_loss)
from robust1d.tensor import Tape, Tensor, backward


def _centers(arr):
    return ClassCenters(Tensor(arr))


# ---------------------------------------------------------------------------
# cross-entropy

def test_ce_uniform_logits():
    logits = Tensor(np.zeros((3, 4)))
    val = ce_loss(None, logits, [0, 1, 3]).item()
    assert val == pytest.approx(math.log(4.0), abs=1e-12)


def test_ce_scalar_example():
    val = ce_loss(None, Tensor([[2.0, 0.0]]), [0]).item()
    assert val == pytest.approx(math.log(1.0 + math.exp(-2.0)), abs=1e-12)  # 0.126928...


def test_ce_saturated_case_is_near_zero():
    val = ce_loss(None, Tensor([[30.0, -30.0]]), [0]).item()
    assert 0.0 <= val <= 1e-12


def test_ce_shift_invariance():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(6, 5))
    y = rng.integers(0, 5, size=6)
    base = ce_loss(None, Tensor(z), y).item()
    shifted = ce_loss(None, Tensor(z + 13.7), y).item()
    assert shifted == pytest.approx(base, abs=1e-12)


def test_ce_rejects_out_of_range_label():
    with pytest.raises(ContractError):
        ce_loss(None, Tensor(np.zeros((2, 3))), [0, 3])


# ---------------------------------------------------------------------------
# marginal softmax

def test_marginal_with_zero_margin_equals_ce():
    rng = np.random.default_rng(1)
    for _ in range(50):
        z = Tensor(rng.normal(0, 3, (4, 5)))
        y = rng.integers(0, 5, size=4)
        assert marginal_softmax_loss(None, z, y, 0.0).item() == \
            pytest.approx(ce_loss(None, z, y).item(), abs=1e-12)


def test_marginal_equal_logits_closed_form():
    # two classes, equal logits, m=1: loss = ln(1 + e), independent of z
    for z in (-4.0, 0.0, 11.5):
        val = marginal_softmax_loss(None, Tensor([[z, z]]), [0], 1.0).item()
        assert val == pytest.approx(math.log(1.0 + math.e), abs=1e-12)


def test_marginal_loss_nondecreasing_in_margin():
    rng = np.random.default_rng(2)
    for _ in range(20):
        z = Tensor(rng.normal(0, 2, (5, 4)))
        y = rng.integers(0, 4, size=5)
        values = [marginal_softmax_loss(None, z, y, m).item()
                  for m in np.arange(0.0, 1.01, 0.1)]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_marginal_rejects_negative_margin():
    with pytest.raises(ContractError):
        marginal_softmax_loss(None, Tensor([[0.0, 0.0]]), [0], -0.1)


# ---------------------------------------------------------------------------
# center loss

def test_center_loss_zero_at_centers():
    centers = _centers([[1.0, 2.0], [3.0, 4.0]])
    features = Tensor([[3.0, 4.0], [1.0, 2.0]])
    assert center_loss(None, features, [1, 0], centers).item() == 0.0


def test_center_loss_hand_value():
    centers = _centers([[0.0, 0.0]])
    features = Tensor([[1.0, 0.0], [0.0, 0.0]])
    assert center_loss(None, features, [0, 0], centers).item() == pytest.approx(0.5)


def test_center_loss_quadratic_homogeneity():
    rng = np.random.default_rng(3)
    f = rng.normal(size=(4, 3))
    c = rng.normal(size=(2, 3))
    y = [0, 1, 1, 0]
    base = center_loss(None, Tensor(f), y, _centers(c)).item()
    scaled = center_loss(None, Tensor(2 * f), y, _centers(2 * c)).item()
    assert scaled == pytest.approx(4.0 * base, rel=1e-12)


def test_center_loss_permutation_symmetry():
    rng = np.random.default_rng(4)
    f = rng.normal(size=(5, 3))
    c = rng.normal(size=(3, 3))
    y = np.array([0, 2, 1, 0, 2])
    perm = np.array([2, 0, 1])  # class k renamed to perm[k]
    base = center_loss(None, Tensor(f), y, _centers(c)).item()
    inverse = np.argsort(perm)
    permuted = center_loss(None, Tensor(f), perm[y], _centers(c[inverse])).item()
    assert permuted == pytest.approx(base, rel=1e-12)


# ---------------------------------------------------------------------------
# contrastive loss

def test_contrastive_zero_iff_features_at_centers():
    centers = _centers([[1.0, 0.0], [0.0, 1.0]])
    at = Tensor([[1.0, 0.0], [0.0, 1.0]])
    for variant in ("eq4", "eq6"):
        assert contrastive_loss(None, at, [0, 1], centers, variant).item() == 0.0
    off = Tensor([[1.0, 0.1], [0.0, 1.0]])
    for variant in ("eq4", "eq6"):
        assert contrastive_loss(None, off, [0, 1], centers, variant).item() > 0.0


def test_contrastive_eq4_hand_value():
    # |x - c_y| = 1, denominator 1 + |x - c_neg| = 1 + 1
    centers = _centers([[0.0, 0.0], [1.0, 1.0]])
    x = Tensor([[1.0, 0.0]])
    assert contrastive_loss(None, x, [0], centers, "eq4").item() == pytest.approx(0.5)


def test_contrastive_eq4_decreases_as_negative_center_recedes():
    x = Tensor([[1.0, 0.0]])
    prev = np.inf
    for d in (1.0, 2.0, 5.0, 50.0):
        centers = _centers([[0.0, 0.0], [d, d]])
        val = contrastive_loss(None, x, [0], centers, "eq4").item()
        assert val < prev
        prev = val


def test_contrastive_nonnegative_randomized():
    rng = np.random.default_rng(5)
    for _ in range(50):
        f = Tensor(rng.normal(size=(4, 6)))
        c = _centers(rng.normal(size=(3, 6)))
        y = rng.integers(0, 3, size=4)
        assert contrastive_loss(None, f, y, c, "eq4").item() >= 0.0


def test_contrastive_needs_two_classes():
    with pytest.raises(ContractError):
        contrastive_loss(None, Tensor([[1.0]]), [0], _centers([[0.0]]), "eq4")


def test_contrastive_eq6_guards_coincident_centers():
    centers = _centers([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(NumericsError):
        contrastive_loss(None, Tensor([[0.0, 0.0]]), [0], centers, "eq6")


def test_contrastive_normalizer_choice():
    rng = np.random.default_rng(6)
    f = Tensor(rng.normal(size=(6, 4)))
    c = _centers(rng.normal(size=(3, 4)))
    y = rng.integers(0, 3, size=6)
    by_batch = contrastive_loss(None, f, y, c, "eq4", normalizer="batch").item()
    by_classes = contrastive_loss(None, f, y, c, "eq4", normalizer="classes").item()
    assert by_classes == pytest.approx(by_batch * 6.0 / 3.0, rel=1e-12)


# ---------------------------------------------------------------------------
# joint loss

def test_joint_equals_ce_when_margin_zero_and_features_at_centers():
    rng = np.random.default_rng(7)
    z = Tensor(rng.normal(size=(3, 2)))
    y = np.array([0, 1, 0])
    c = _centers(rng.normal(size=(2, 4)))
    f = Tensor(c.weights.data[y])
    joint = marginal_contrastive_loss(None, f, z, y, c, LossConfig(margin=0.0)).item()
    assert joint == pytest.approx(ce_loss(None, z, y).item(), abs=1e-12)


def test_joint_is_sum_of_parts():
    rng = np.random.default_rng(8)
    z = Tensor(rng.normal(size=(4, 3)))
    f = Tensor(rng.normal(size=(4, 5)))
    y = rng.integers(0, 3, size=4)
    c = _centers(rng.normal(size=(3, 5)))
    config = LossConfig(margin=0.7)
    joint = marginal_contrastive_loss(None, f, z, y, c, config).item()
    parts = marginal_softmax_loss(None, z, y, 0.7).item() + \
        contrastive_loss(None, f, y, c, "eq4").item()
    assert joint == pytest.approx(parts, abs=1e-12)


def test_joint_single_backward_populates_all_gradients():
    rng = np.random.default_rng(9)
    z = Tensor(rng.normal(size=(4, 3)))
    f = Tensor(rng.normal(size=(4, 5)))
    y = rng.integers(0, 3, size=4)
    c = _centers(rng.normal(size=(3, 5)))
    tape = Tape()
    loss = marginal_contrastive_loss(tape, f, z, y, c, LossConfig(margin=0.5))
    backward(tape, loss)
    assert z.grad is not None and f.grad is not None and c.weights.grad is not None
    assert np.all(np.isfinite(z.grad)) and np.all(np.isfinite(c.weights.grad))


# ---------------------------------------------------------------------------
# finite-difference verification of every loss gradient

def _loss_cases(rng):
    b = int(rng.integers(2, 9))
    d = int(rng.integers(2, 17))
    n = int(rng.integers(2, 6))
    z = Tensor(rng.normal(0, 2, (b, n)))
    f = Tensor(rng.normal(0, 2, (b, d)))
    c = ClassCenters(Tensor(rng.normal(0, 2, (n, d))))
    y = rng.integers(0, n, size=b)
    m = float(rng.uniform(0, 1.5))
    return {
        "ce": ([z], lambda tape: ce_loss(tape, z, y)),
        "marginal": ([z], lambda tape: marginal_softmax_loss(tape, z, y, m)),
        "center": ([f, c.weights], lambda tape: center_loss(tape, f, y, c)),
        "contrastive_eq4": ([f, c.weights],
                            lambda tape: contrastive_loss(tape, f, y, c, "eq4")),
        "contrastive_eq6": ([f, c.weights],
                            lambda tape: contrastive_loss(tape, f, y, c, "eq6")),
        "joint": ([z, f, c.weights],
                  lambda tape: marginal_contrastive_loss(tape, f, z, y, c,
                                                         LossConfig(margin=m))),
    }


@pytest.mark.parametrize("name", sorted(_loss_cases(np.random.default_rng(0))))
def test_loss_gradients_match_finite_differences(name):
    worst = 0.0
    for trial in range(50):
        rng = np.random.default_rng(4000 + trial)
        params, f = _loss_cases(rng)[name]
        worst = max(worst, grad_check(f, params))
    assert worst <= 1e-4, f"{name}: {worst}"


def test_score_shape_errors():
    with pytest.raises(ShapeError):
        center_loss(None, Tensor([[1.0, 2.0]]), [0], _centers([[1.0, 2.0, 3.0]]))
