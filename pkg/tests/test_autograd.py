import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stopgo.autograd import (
    LSTM, Adam, AdamState, Dense, Tensor, adam_step, grad_check, load_checkpoint, lstm_step, ops,
    save_checkpoint,
)
from stopgo.errors import ShapeError

from gradcases import CASES


@pytest.mark.parametrize("name", sorted(CASES))
def test_gradients_match_finite_differences(name):
    for seed in range(3):
        assert grad_check(*CASES[name](seed)) < 1e-4


def test_sigmoid_and_relu_values():
    assert ops.sigmoid(Tensor(np.zeros(3))).data.tolist() == [0.5] * 3
    big = ops.sigmoid(Tensor(np.array([-800.0, 800.0]))).data
    assert np.all(np.isfinite(big)) and big[0] == 0.0 and big[1] == 1.0
    assert ops.relu(Tensor(np.array([-1.0, 0.0, 2.0]))).data.tolist() == [0.0, 0.0, 2.0]


def test_concat_shape_and_gradient_split():
    a, b = Tensor(np.ones((2, 3)), True), Tensor(np.ones((4, 3)), True)
    out = ops.concat([a, b], axis=0)
    assert out.shape == (6, 3)
    g = np.arange(18.0).reshape(6, 3)
    out.backward(g)
    assert np.array_equal(np.concatenate([a.grad, b.grad]), g)


def test_shape_errors_name_op_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\[2, 3\].*\[2, 3\]"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
    with pytest.raises(ShapeError, match="concat"):
        ops.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4)))], axis=0)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([3.0]), True)
    y = ops.mul(x, x)
    z = ops.sum_all(ops.add(y, x))
    z.backward()
    assert x.grad.tolist() == [7.0]


def test_deep_chain_backward_is_iterative():
    x = Tensor(np.array([1.0]), True)
    y = x
    for _ in range(5000):
        y = ops.add(y, Tensor(np.array([0.0])))
    ops.sum_all(y).backward()
    assert x.grad.tolist() == [1.0]


def test_backward_needs_scalar():
    with pytest.raises(Exception):
        Tensor(np.ones(3), True).backward()


def test_dropout_eval_identity_and_train_statistics():
    x = Tensor(np.ones(100_000))
    assert ops.dropout(x, 0.2, train=False) is x
    y = ops.dropout(x, 0.2, train=True, rng=np.random.default_rng(0)).data
    zeros = int((y == 0).sum())
    z = (zeros - 0.2 * y.size) / math.sqrt(y.size * 0.2 * 0.8)
    assert abs(z) < 3.29  # two-sided p < 0.001
    assert np.allclose(y[y > 0], 1.25)
    assert abs(y.mean() - 1.0) < 0.01


def test_conv_and_pool_shapes():
    x = Tensor(np.random.default_rng(0).normal(size=(2, 3, 8, 6)))
    w = Tensor(np.zeros((5, 3, 3, 3)))
    assert ops.conv2d(x, w).shape == (2, 5, 8, 6)
    assert ops.max_pool2d(ops.conv2d(x, w)).shape == (2, 5, 4, 3)


def test_conv_matches_direct_sum():
    rng = np.random.default_rng(1)
    x, w, b = rng.normal(size=(1, 2, 4, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    pad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((1, 3, 4, 5))
    for o in range(3):
        for i in range(4):
            for j in range(5):
                ref[0, o, i, j] = (pad[0, :, i:i + 3, j:j + 3] * w[o]).sum() + b[o]
    assert np.allclose(out, ref, atol=1e-12)


def test_roi_align_examples():
    feat = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    out = ops.roi_align(feat, (0, 0, 2, 2), (1, 1), samples_per_bin=1)
    assert out.data.item() == pytest.approx(2.5)
    const = Tensor(np.full((3, 8, 8), 1.7))
    assert np.allclose(ops.roi_align(const, (1.2, 0.5, 6.3, 7.1), (7, 7)).data, 1.7)
    with pytest.raises(ValueError):
        ops.roi_align(const, (1, 1, 1, 4), (2, 2))
    with pytest.raises(ValueError):
        ops.roi_align(const, (0, 0, 4, 4), (0, 2))


def test_roi_align_far_outside_reads_zero():
    feat = Tensor(np.ones((1, 4, 4)))
    assert np.all(ops.roi_align(feat, (10, 10, 14, 14), (2, 2)).data == 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4), st.integers(0, 4), st.floats(2.0, 6.0), st.floats(2.0, 6.0),
       st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 1000))
def test_roi_align_translation_consistent(dx, dy, w, h, fx, fy, seed):
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(2, 12, 12))
    shifted = np.zeros((2, 16, 16))
    shifted[:, dy:dy + 12, dx:dx + 12] = base
    roi = (3 + fx, 3 + fy, 3 + fx + w, 3 + fy + h)  # stays inside the base map
    a = ops.roi_align(Tensor(base), roi, (3, 3)).data
    b = ops.roi_align(Tensor(shifted), (roi[0] + dx, roi[1] + dy, roi[2] + dx, roi[3] + dy), (3, 3)).data
    assert np.allclose(a, b, atol=1e-12)


def test_bce_values():
    p = Tensor(np.array([1.0]))
    assert ops.bce_loss(p, [1]).item() < 1e-6
    assert ops.bce_loss(Tensor(np.array([0.5])), [1]).item() == pytest.approx(math.log(2))
    assert ops.bce_loss(Tensor(np.array([0.5])), [0]).item() == pytest.approx(math.log(2))
    assert np.isfinite(ops.bce_loss(Tensor(np.array([0.0])), [1]).item())


def test_lstm_cell_examples():
    H, D = 3, 2
    zero = {"w_x": Tensor(np.zeros((D, 4 * H))), "w_h": Tensor(np.zeros((H, 4 * H))),
            "bias": Tensor(np.zeros(4 * H))}
    h, c = lstm_step(Tensor(np.zeros((1, D))), Tensor(np.zeros((1, H))), Tensor(np.zeros((1, H))), zero)
    assert np.all(h.data == 0) and np.all(c.data == 0)
    c0 = 10.0
    h, c = lstm_step(Tensor(np.zeros((1, D))), Tensor(np.zeros((1, H))), Tensor(np.full((1, H), c0)), zero)
    assert np.allclose(c.data, 0.5 * c0)
    assert np.allclose(h.data, 0.5 * np.tanh(0.5 * c0))


def test_lstm_forget_bias_and_shape():
    cell = LSTM(4, 5, np.random.default_rng(0))
    assert np.all(cell.bias.data[5:10] == 1.0)
    out = cell([Tensor(np.ones((2, 4)))] * 3)
    assert out.shape == (2, 5)
    with pytest.raises(ShapeError):
        cell([Tensor(np.ones((2, 3)))])


def test_grad_check_linear_and_kink():
    x = Tensor(np.array([1.0, -2.0, 3.0]), True)
    a = np.array([0.5, -1.5, 2.0])
    assert grad_check(lambda x: ops.sum_all(ops.mul(x, Tensor(a))), [x]) < 1e-9
    z = Tensor(np.array([0.0, 1.0]), True)
    assert grad_check(lambda z: ops.sum_all(ops.relu(z)), [z]) < 1e-9


def test_adam_examples():
    p = {"w": np.array([1.0, 2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState(weight_decay=0.0))
    assert p["w"].tolist() == [1.0, 2.0]
    q = {"w": np.array([0.0])}
    state = AdamState(learning_rate=1e-3, weight_decay=0.0)
    adam_step(q, {"w": np.array([1.0])}, state)
    assert q["w"][0] == pytest.approx(-1e-3, rel=1e-6)
    assert state.step_count == 1
    with pytest.raises(ShapeError):
        adam_step(q, {"w": np.ones(2)}, state)


def test_adam_weight_decay_enters_gradient():
    p = {"w": np.array([2.0])}
    adam_step(p, {"w": np.array([0.0])}, AdamState(learning_rate=0.1, weight_decay=0.5))
    assert p["w"][0] == pytest.approx(2.0 - 0.1, rel=1e-6)  # m_hat / sqrt(v_hat) = 1


def _train_once(seed):
    rng = np.random.default_rng(seed)
    layer = Dense(3, 1, rng)
    opt = Adam(layer.parameters(), lr=1e-2)
    x = Tensor(rng.normal(size=(8, 3)))
    losses = []
    for _ in range(5):
        loss = ops.bce_loss(ops.reshape(ops.sigmoid(layer(x)), (-1,)), np.arange(8) % 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    return layer, losses


def test_adam_deterministic():
    a, la = _train_once(5)
    b, lb = _train_once(5)
    assert la == lb
    assert a.weight.data.tobytes() == b.weight.data.tobytes()


def test_checkpoint_round_trip(tmp_path):
    arrays = {"b": np.arange(6.0).reshape(2, 3), "a": np.array([1.5]), "s": np.array(2.0)}
    save_checkpoint(tmp_path / "x.ckpt", arrays, {"k": [1, 2]})
    back, meta = load_checkpoint(tmp_path / "x.ckpt")
    assert meta == {"k": [1, 2]}
    assert set(back) == set(arrays)
    for k in arrays:
        assert back[k].shape == np.shape(arrays[k]) and np.array_equal(back[k], arrays[k])
    blob = (tmp_path / "x.ckpt").read_bytes()
    assert blob[:8] == b"SGCKPT01"
    save_checkpoint(tmp_path / "y.ckpt", dict(reversed(list(arrays.items()))), {"k": [1, 2]})
    assert (tmp_path / "y.ckpt").read_bytes() == blob
