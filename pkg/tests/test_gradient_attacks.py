import numpy as np
import pytest

import robust1d.tensor as T
from robust1d.data import synth_tabular_dataset
from robust1d.errors import ContractError
from robust1d.gradient_attacks import ContinuousAttackSpec, batch_attack, fgsm, pgd
from robust1d.harness import LossBundle, make_loss_fn
from robust1d.models import TabularNet, tiny_tabular_config
from robust1d.tensor import Tensor


def _net(features=4, classes=2, seed=0):
    return TabularNet(tiny_tabular_config(features, classes),
                      rng=np.random.default_rng(seed))


def _ce_loss_fn():
    return make_loss_fn(LossBundle(kind="ce"), None)


def _const_gradient_loss(value=1.0):
    """Loss = value * sum(x): gradient w.r.t. x is constant `value`."""
    def loss_fn(tape, model, x, y):
        return T.scale(tape, T.sum_all(tape, x), value)
    return loss_fn


def test_fgsm_scalar_arithmetic():
    # positive gradient, interior point: x + eps exactly
    x = Tensor([[0.5]])
    out = fgsm(_net(features=1), _const_gradient_loss(2.3), x, [0], 8 / 255)
    assert out.data[0, 0] == pytest.approx(0.5 + 8 / 255, abs=1e-15)  # 0.531372...


def test_fgsm_zero_gradient_returns_input():
    x = Tensor([[0.25, 0.75]])
    out = fgsm(_net(features=2), _const_gradient_loss(0.0), x, [0], 0.1)
    assert np.array_equal(out.data, x.data)


def test_fgsm_box_clip():
    x = Tensor([[0.99]])
    out = fgsm(_net(features=1), _const_gradient_loss(1.0), x, [0], 16 / 255)
    assert out.data[0, 0] == 1.0


def test_fgsm_does_not_modify_input_or_model():
    net = _net()
    params_before = {k: v.data.copy() for k, v in net.params.items()}
    x = Tensor(np.full((1, 4), 0.5))
    x_before = x.data.copy()
    fgsm(net, _ce_loss_fn(), x, [1], 0.1)
    assert np.array_equal(x.data, x_before)
    for k, v in net.params.items():
        assert np.array_equal(v.data, params_before[k])
        assert v.grad is None  # attack must not touch parameter grads


def test_pgd_one_step_full_alpha_equals_fgsm_exactly():
    net = _net(seed=3)
    loss_fn = _ce_loss_fn()
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = Tensor(rng.uniform(size=(1, 4)))
        y = [int(rng.integers(0, 2))]
        eps = float(rng.uniform(0.01, 0.2))
        spec = ContinuousAttackSpec(epsilon=eps, steps=1, alpha=eps, random_start=False)
        a = fgsm(net, loss_fn, x, y, eps)
        b = pgd(net, loss_fn, x, y, spec)
        assert np.array_equal(a.data, b.data)


def test_pgd_constant_gradient_reaches_ball_boundary():
    # ascent at alpha = eps/4 hits the boundary at step 4 and projection holds it
    eps = 0.2
    spec = ContinuousAttackSpec(epsilon=eps, steps=10, alpha=eps / 4, random_start=False)
    x = Tensor([[0.3, 0.5]])
    out = pgd(_net(features=2), _const_gradient_loss(1.0), x, [0], spec)
    assert np.allclose(out.data, x.data + eps, atol=1e-12)


def test_pgd_ball_and_box_invariants_seeded_trials():
    net = _net(features=6, seed=1)
    loss_fn = _ce_loss_fn()
    rng = np.random.default_rng(42)
    for trial in range(100):
        x = Tensor(rng.uniform(size=(1, 6)))
        y = [int(rng.integers(0, 2))]
        eps = float(rng.uniform(0.0, 0.3))
        spec = ContinuousAttackSpec(epsilon=eps, steps=5, random_start=bool(trial % 2),
                                    seed=trial)
        out = pgd(net, loss_fn, x, y, spec)
        assert np.max(np.abs(out.data - x.data)) <= eps + 1e-12
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def test_zero_epsilon_is_identity_attack():
    net = _net(seed=2)
    ds = synth_tabular_dataset(2, 10, features=4, seed=0)
    spec = ContinuousAttackSpec(epsilon=0.0, steps=3)
    adv, success, failed = batch_attack(net, _ce_loss_fn(), ds.features, ds.labels, spec)
    assert np.array_equal(adv.data, ds.features)
    clean_wrong = net.predict_rows(ds.features) != ds.labels
    assert np.array_equal(success, clean_wrong)
    assert failed == []


def test_batch_attack_deterministic_given_seed():
    net = _net(features=5, seed=4)
    ds = synth_tabular_dataset(2, 15, features=5, seed=3)
    spec = ContinuousAttackSpec(epsilon=0.1, steps=4, random_start=True, seed=11)
    a1, s1, _ = batch_attack(net, _ce_loss_fn(), ds.features, ds.labels, spec, kind="pgd")
    a2, s2, _ = batch_attack(net, _ce_loss_fn(), ds.features, ds.labels, spec, kind="pgd")
    assert np.array_equal(a1.data, a2.data)
    assert np.array_equal(s1, s2)


def test_spec_validation():
    with pytest.raises(ContractError):
        ContinuousAttackSpec(epsilon=-0.1)
    with pytest.raises(ContractError):
        ContinuousAttackSpec(epsilon=0.1, steps=0)
    with pytest.raises(ContractError):
        ContinuousAttackSpec(epsilon=0.1, alpha=0.2)  # alpha > epsilon
    with pytest.raises(ContractError):
        batch_attack(_net(), _ce_loss_fn(), np.zeros((2, 4)), [0, 1],
                     ContinuousAttackSpec(epsilon=0.1), kind="bim")


def test_attack_reduces_accuracy_on_trained_model():
    """PGD at a meaningful budget cannot beat clean accuracy, and on a
    separable blob dataset it strictly hurts a standard-trained model."""
    from robust1d.data import SplitSpec, split
    from robust1d.harness import ExperimentConfig, train
    from robust1d.data import save_tabular_csv, write_manifest
    import tempfile
    from pathlib import Path

    tmp = Path(tempfile.mkdtemp())
    ds = synth_tabular_dataset(2, 60, features=8, seed=9)
    save_tabular_csv(ds, tmp / "t.csv")
    write_manifest(tmp / "t.manifest",
                   {"name": "t", "path": "t.csv", "schema": "tabular", "classes": 2})
    cfg = ExperimentConfig(manifest=str(tmp / "t.manifest"), out_dir=str(tmp / "o"),
                           seed=9, loss="ce", epochs=30)
    res = train(cfg)
    test = res.test_set
    clean = 100.0 * float((res.model.predict_rows(test.features) == test.labels).mean())
    spec = ContinuousAttackSpec(epsilon=0.1, steps=10, random_start=False)
    _, success, _ = batch_attack(res.model, make_loss_fn(res.bundle, None),
                                 test.features, test.labels, spec, kind="pgd")
    adv = 100.0 * float((~success).mean())
    assert clean >= 90.0
    assert adv <= clean
    assert adv < clean  # the attack must actually bite at eps=0.1
