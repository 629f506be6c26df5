import numpy as np
import pytest

from robust1d.encoding import AlphabetCodec
from robust1d.errors import ContractError, ShapeError
from robust1d.gradcheck import grad_check
from robust1d.losses import ClassCenters, LossConfig, marginal_contrastive_loss
from robust1d.models import (CharCnnConfig, CharCnnModel, ConvSpec, TabularNet,
                             full_charcnn_config, predict_true_class_prob, softmax,
                             tiny_charcnn_config, tiny_tabular_config)
from robust1d.tensor import Tensor


def test_tiny_profile_feature_length_is_128():
    # L=128: conv5 -> 124, pool2 -> 62, conv3 -> 60, pool2 -> 30; flatten 1920 -> fc 128
    config = tiny_charcnn_config(classes=4)
    assert config.feature_dim == 128
    assert config.flatten_length(128, 70) == 30 * 64
    codec = AlphabetCodec(length=128)
    model = CharCnnModel(config, codec, rng=np.random.default_rng(0))
    features, logits = model.forward(codec.encode("sample text"))
    assert features.shape == (128,)
    assert logits.shape == (4,)


def test_full_profile_arithmetic_traces():
    # the classic stack: L=1014 flattens to 34 positions of 256 channels
    config = full_charcnn_config(classes=5)
    assert config.flatten_length(1014, 70) == 34 * 256
    assert config.feature_dim == 1024


def test_full_profile_builds_and_runs_forward():
    from robust1d.encoding import full_codec
    codec = full_codec()
    model = CharCnnModel(full_charcnn_config(classes=2), codec,
                         rng=np.random.default_rng(0))
    features, logits = model.forward(codec.encode("one forward pass through the full stack"))
    assert features.shape == (1024,) and logits.shape == (2,)
    assert np.all(np.isfinite(logits.data))


def test_final_matrix_shape_and_logit_product():
    codec = AlphabetCodec(length=48)
    model = CharCnnModel(tiny_charcnn_config_small(), codec, rng=np.random.default_rng(1))
    w = model.params["final.weight"].data
    assert w.shape == (3, model.feature_dim)
    features, logits = model.forward(codec.encode("check w times x"))
    assert np.allclose(logits.data, w @ features.data, atol=1e-12)


def tiny_charcnn_config_small():
    return CharCnnConfig(conv=(ConvSpec(8, 5, pool=2), ConvSpec(8, 3, pool=2)),
                         fc=(16,), classes=3)


def test_zero_input_zero_parameters_gives_zeros(micro_codec):
    model = CharCnnModel(tiny_charcnn_config_small(), micro_codec,
                         rng=np.random.default_rng(2))
    for t in model.params.values():
        t.data[...] = 0.0
    features, logits = model.forward(micro_codec.encode(""))
    assert not features.data.any()
    assert not logits.data.any()


def test_forward_is_deterministic(micro_model, micro_codec):
    x = micro_codec.encode("same input twice")
    f1, z1 = micro_model.forward(x)
    f2, z2 = micro_model.forward(x)
    assert np.array_equal(f1.data, f2.data)
    assert np.array_equal(z1.data, z2.data)


def test_forward_rejects_wrong_shape(micro_model):
    with pytest.raises(ShapeError):
        micro_model.forward(Tensor(np.zeros((3, 70))))


def test_encode_forward_total_on_awkward_strings(micro_model, micro_codec):
    for text in ["", "!!!???", "a" * 500, "MiXeD CaSe\nnewline\ttab", "üñî"]:
        _, logits = micro_model.forward(micro_codec.encode(text))
        assert np.all(np.isfinite(logits.data))


def test_softmax_properties(micro_model, micro_codec):
    rng = np.random.default_rng(0)
    for _ in range(25):
        z = rng.normal(0, 5, (1, 6))
        p = softmax(z)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(p > 0) and np.all(p < 1)


def test_predict_true_class_prob_examples(micro_codec):
    model = CharCnnModel(tiny_charcnn_config_small(), micro_codec,
                         rng=np.random.default_rng(3))
    # symmetric logits -> 0.5
    assert softmax(np.array([[1.7, 1.7]]))[0, 0] == pytest.approx(0.5)
    # [ln 3, 0] -> 3/4
    assert softmax(np.array([[np.log(3.0), 0.0]]))[0, 0] == pytest.approx(0.75)
    p = [predict_true_class_prob(model, micro_codec, "words", y) for y in range(3)]
    assert sum(p) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ContractError):
        predict_true_class_prob(model, micro_codec, "words", 7)


def test_full_model_gradient_matches_finite_differences(micro_codec):
    model = CharCnnModel(tiny_charcnn_config_small(), micro_codec,
                         rng=np.random.default_rng(4))
    centers = ClassCenters.init(3, model.feature_dim, rng=np.random.default_rng(5))
    xs = [micro_codec.encode("gradient check text one"),
          micro_codec.encode("and a second sample!")]
    ys = np.asarray([0, 2])

    def f(tape):
        features, logits = model.forward_rows(xs, tape)
        return marginal_contrastive_loss(tape, features, logits, ys, centers,
                                         LossConfig(margin=0.5))

    err = grad_check(f, model.parameters() + [centers.weights])
    assert err <= 1e-4


def test_tiny_profile_gradient_with_sampled_coordinates():
    codec = AlphabetCodec(length=128)
    model = CharCnnModel(tiny_charcnn_config(classes=3), codec,
                         rng=np.random.default_rng(7))
    centers = ClassCenters.init(3, 128, rng=np.random.default_rng(8))
    xs = [codec.encode("the quick brown fox jumps over the lazy dog"),
          codec.encode("pack my box with five dozen liquor jugs")]
    ys = np.asarray([1, 0])

    def f(tape):
        features, logits = model.forward_rows(xs, tape)
        return marginal_contrastive_loss(tape, features, logits, ys, centers,
                                         LossConfig(margin=0.5))

    err = grad_check(f, model.parameters() + [centers.weights],
                     max_coords_per_param=6, rng=np.random.default_rng(99))
    assert err <= 1e-4


def test_bad_architecture_is_rejected_at_build_time():
    codec = AlphabetCodec(length=8)
    config = CharCnnConfig(conv=(ConvSpec(4, 16),), fc=(8,), classes=2)
    with pytest.raises(ShapeError):
        CharCnnModel(config, codec)


def test_tabular_net_shapes_and_batch_forward():
    net = TabularNet(tiny_tabular_config(features=6, classes=2),
                     rng=np.random.default_rng(9))
    x = np.random.default_rng(1).uniform(size=(5, 6))
    features, logits = net.forward_rows(Tensor(x))
    assert features.shape == (5, 32)
    assert logits.shape == (5, 2)
    assert net.predict_rows(x).shape == (5,)
    with pytest.raises(ShapeError):
        net.forward_rows(Tensor(np.zeros((2, 9))))
