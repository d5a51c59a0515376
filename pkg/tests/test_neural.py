from __future__ import annotations

import math

import numpy as np
import pytest

from morpho_nlg.exceptions import (
    CheckpointFormatError,
    NonFiniteError,
    RateOutOfRangeError,
    ShapeMismatchError,
    TargetOutOfRangeError,
)
from morpho_nlg.neural import (
    EOS,
    GO,
    UNK,
    AdamState,
    ModelParams,
    Vocabulary,
    adam_step,
    attend,
    clip_global_norm,
    dropout,
    dropout_mask,
    embedding_backward,
    init_attention,
    init_lstm,
    load_checkpoint,
    lstm_step,
    parameter_count,
    save_checkpoint,
    sigmoid_bce,
    softmax_xent,
)


@pytest.fixture
def params():
    rng = np.random.default_rng(0)
    p = ModelParams(seed=11, metadata={"kind": "test"})
    init_lstm(p, rng, "enc", 3, 4)
    init_attention(p, rng, "att", 4, 4, 2)
    return p


def test_model_params(params):
    assert parameter_count(params) == 16 * 7 + 16 + 2 * 4 + 2 * 4 + 2 + 2
    # forget gate bias starts at one
    np.testing.assert_array_equal(params["enc.b"][4:8], np.ones(4))
    with pytest.raises(ValueError):
        params.add("enc.W", np.zeros(2))
    copied = params.copy()
    assert copied.equal(params)
    copied["enc.b"][0] = 5.0
    assert not copied.equal(params)
    copied["enc.b"][0] = np.nan
    with pytest.raises(NonFiniteError):
        copied.check_finite()


def test_lstm_step_shapes(params):
    h, c = np.zeros(4), np.zeros(4)
    h2, c2, _ = lstm_step(params["enc.W"], params["enc.b"], np.ones(3), h, c)
    assert h2.shape == c2.shape == (4,)
    assert np.all(np.abs(h2) < 1.0)
    with pytest.raises(ShapeMismatchError):
        lstm_step(params["enc.W"], params["enc.b"], np.ones(2), h, c)
    with pytest.raises(ShapeMismatchError):
        lstm_step(params["enc.W"], params["enc.b"], np.ones(3), h, np.zeros(3))


def test_attention_weights_are_a_distribution(params):
    memory = np.random.default_rng(1).normal(size=(5, 4))
    context, weights, _ = attend(params, "att", np.ones(4), memory)
    assert weights.sum() == pytest.approx(1.0)
    assert context.shape == (4,)
    with pytest.raises(ShapeMismatchError):
        attend(params, "att", np.ones(4), np.zeros((0, 4)))


def test_embedding_backward_accumulates_repeats():
    dE = embedding_backward(np.ones((3, 2)), [1, 1, 0], (4, 2))
    np.testing.assert_array_equal(dE, [[1, 1], [2, 2], [0, 0], [0, 0]])


def test_softmax_xent():
    loss, grad = softmax_xent(np.zeros(4), 2)
    assert loss == pytest.approx(math.log(4))
    np.testing.assert_allclose(grad, [0.25, 0.25, -0.75, 0.25])
    with pytest.raises(TargetOutOfRangeError):
        softmax_xent(np.zeros(4), 4)
    with pytest.raises(NonFiniteError):
        softmax_xent(np.array([0.0, np.nan]), 0)


def test_sigmoid_bce():
    loss, grad = sigmoid_bce(np.array([0.0]), np.array([1.0]))
    assert loss == pytest.approx(math.log(2))
    assert grad[0] == pytest.approx(-0.5)
    loss, _ = sigmoid_bce(np.array([1000.0]), np.array([0.0]))
    assert loss == pytest.approx(1000.0)
    with pytest.raises(ShapeMismatchError):
        sigmoid_bce(np.zeros(2), np.zeros(3))


def test_dropout():
    x = np.ones(10000)
    assert dropout(x, 0.5, training=False) is x
    masked = dropout(x, 0.5, training=True, rng=np.random.default_rng(0))
    assert set(np.unique(masked)) == {0.0, 2.0}
    assert masked.mean() == pytest.approx(1.0, abs=0.05)
    np.testing.assert_array_equal(dropout_mask(3, 0.0, np.random.default_rng(0)), np.ones(3))
    for rate in (1.0, -0.1):
        with pytest.raises(RateOutOfRangeError):
            dropout(x, rate, training=True)


def test_clip_global_norm():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([4.0])}
    assert clip_global_norm(grads, 10.0) == pytest.approx(5.0)
    np.testing.assert_allclose(grads["a"], [3.0, 0.0])
    assert clip_global_norm(grads, 1.0) == pytest.approx(5.0)
    np.testing.assert_allclose(grads["a"], [0.6, 0.0])
    np.testing.assert_allclose(grads["b"], [0.8])


def test_adam_first_step_moves_by_learning_rate():
    p = ModelParams({"x": np.array([1.0, -2.0])})
    state = AdamState.for_params(p, lr=0.1)
    adam_step(state, p, {"x": np.array([0.5, -3.0])})
    np.testing.assert_allclose(p["x"], [0.9, -1.9], atol=1e-6)
    assert state.t == 1
    with pytest.raises(NonFiniteError):
        adam_step(state, p, {"x": np.array([np.inf, 0.0])})
    with pytest.raises(ShapeMismatchError):
        adam_step(state, p, {"x": np.zeros(3)})


def test_checkpoint_round_trip(tmp_path, params):
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, path, {"stage": "generator"})
    loaded = load_checkpoint(path)
    assert loaded.equal(params)
    assert loaded.seed == 11
    assert loaded.metadata == {"kind": "test", "stage": "generator"}
    assert path.read_bytes()[:4] == b"MNLG"


def test_checkpoint_is_byte_stable(tmp_path, params):
    save_checkpoint(params, tmp_path / "a.ckpt")
    save_checkpoint(load_checkpoint(tmp_path / "a.ckpt"), tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


@pytest.mark.parametrize(
    "corrupt, reason",
    [
        (lambda data: b"XXXX" + data[4:], "bad magic"),
        (lambda data: data[:-3], "truncated"),
        (lambda data: data + b"\x00", "trailing"),
    ],
)
def test_checkpoint_rejects_corrupt_files(tmp_path, params, corrupt, reason):
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, path)
    path.write_bytes(corrupt(path.read_bytes()))
    with pytest.raises(CheckpointFormatError) as excinfo:
        load_checkpoint(path)
    assert reason in excinfo.value.reason


def test_vocabulary():
    vocab = Vocabulary(["a", "b", "a"])
    assert vocab.itos == [UNK, GO, EOS, "a", "b"]
    assert vocab.index("zzz") == vocab.index(UNK) == 0
    assert vocab.decode(vocab.encode(["b", "a"])) == ["b", "a"]
    built = Vocabulary.build([["a", "b"], ["a"]], min_freq=2)
    assert "a" in built
    assert "b" not in built
