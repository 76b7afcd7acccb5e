"""Finite-difference cases shared by the unit and acceptance suites.

Each builder takes a seed and returns ``(fn, inputs)`` for ``grad_check``.
Outputs are contracted with a fixed random weight so every output element
contributes a distinct gradient.
"""
from __future__ import annotations

import numpy as np

from stopgo.autograd import LSTM, Tensor, ops
from stopgo.model.fusion import FusionNet, ModelSpec


def _t(rng, *shape, scale=1.0):
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)


def _contract(out, rng):
    w = Tensor(rng.normal(size=out.shape))
    return ops.sum_all(ops.mul(out, w))


def _unary(op):
    def build(seed):
        rng = np.random.default_rng(seed)
        x = _t(rng, 3, 4)
        w = rng.normal(size=(3, 4))
        return (lambda x: ops.sum_all(ops.mul(op(x), Tensor(w)))), [x]
    return build


def _binary(op, shape_b=(3, 4)):
    def build(seed):
        rng = np.random.default_rng(seed)
        a, b = _t(rng, 3, 4), _t(rng, *shape_b)
        w = rng.normal(size=(3, 4))
        return (lambda a, b: ops.sum_all(ops.mul(op(a, b), Tensor(w)))), [a, b]
    return build


def matmul(seed):
    rng = np.random.default_rng(seed)
    a, b = _t(rng, 3, 5), _t(rng, 5, 2)
    w = rng.normal(size=(3, 2))
    return (lambda a, b: ops.sum_all(ops.mul(ops.matmul(a, b), Tensor(w)))), [a, b]


def concat(seed):
    rng = np.random.default_rng(seed)
    a, b, c = _t(rng, 2, 3), _t(rng, 4, 3), _t(rng, 6, 2)
    w0, w1 = rng.normal(size=(6, 3)), rng.normal(size=(6, 5))

    def fn(a, b, c):
        ab = ops.concat([a, b], axis=0)
        return ops.add(ops.sum_all(ops.mul(ab, Tensor(w0))),
                       ops.sum_all(ops.mul(ops.concat([ab, c], axis=1), Tensor(w1))))
    return fn, [a, b, c]


def slice_reshape(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 2, 3, 4)
    w = rng.normal(size=(2, 4))

    def fn(x):
        s = ops.slice_axis(x, 1, 1, 3)
        return ops.sum_all(ops.mul(ops.slice_axis(ops.flatten(s), 1, 2, 6), Tensor(w)))
    return fn, [x]


def dropout_train(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 4, 5)
    w = rng.normal(size=(4, 5))
    # a fresh generator per call keeps the mask fixed across evaluations
    return (lambda x: ops.sum_all(ops.mul(ops.dropout(x, 0.3, True, np.random.default_rng(seed)),
                                          Tensor(w)))), [x]


def dropout_eval(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 4, 5)
    w = rng.normal(size=(4, 5))
    return (lambda x: ops.sum_all(ops.mul(ops.dropout(x, 0.3, False), Tensor(w)))), [x]


def conv2d(seed):
    rng = np.random.default_rng(seed)
    x, k, b = _t(rng, 2, 2, 5, 4), _t(rng, 3, 2, 3, 3), _t(rng, 3)
    w = rng.normal(size=(2, 3, 5, 4))
    return (lambda x, k, b: ops.sum_all(ops.mul(ops.conv2d(x, k, b), Tensor(w)))), [x, k, b]


def max_pool(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 1, 2, 4, 6)
    w = rng.normal(size=(1, 2, 2, 3))
    return (lambda x: ops.sum_all(ops.mul(ops.max_pool2d(x), Tensor(w)))), [x]


def roi_align(seed):
    rng = np.random.default_rng(seed)
    x = _t(rng, 2, 6, 7)
    x1, y1 = rng.uniform(-1, 3), rng.uniform(-1, 3)
    roi = (x1, y1, x1 + rng.uniform(1, 5), y1 + rng.uniform(1, 5))
    w = rng.normal(size=(2, 3, 3))
    return (lambda x: ops.sum_all(ops.mul(ops.roi_align(x, roi, (3, 3), 2), Tensor(w)))), [x]


def reductions_bce(seed):
    rng = np.random.default_rng(seed)
    z = _t(rng, 6)
    y = rng.integers(0, 2, size=6).astype(float)
    return (lambda z: ops.add(ops.bce_loss(ops.sigmoid(z), y), ops.mean(ops.tanh(z)))), [z]


def lstm_two_step(seed):
    rng = np.random.default_rng(seed)
    cell = LSTM(3, 4, rng)
    xs = [_t(rng, 2, 3), _t(rng, 2, 3)]
    h0, c0 = _t(rng, 2, 4, scale=0.5), _t(rng, 2, 4, scale=0.5)
    w = rng.normal(size=(2, 4))
    params = [cell.w_x, cell.w_h, cell.bias]
    for p in params:
        p.data += rng.normal(scale=0.3, size=p.shape)

    def fn(*_):
        return ops.sum_all(ops.mul(cell(xs, (h0, c0)), Tensor(w)))
    return fn, xs + [h0, c0] + params


TINY_HYBRID = dict(family="hybrid", modalities="IMBS", visual="rc", T=2, hidden_i=3, hidden_m=3,
                   hidden_b=2, embed=(4, 3, 3), head=(3, 3))


def hybrid_bce(seed):
    rng = np.random.default_rng(seed)
    spec = ModelSpec(**TINY_HYBRID)
    net = FusionNet(spec, 4, rng)
    n = 3
    inputs = {"I": [_t(rng, n, 4) for _ in range(2)], "M": [_t(rng, n, 8) for _ in range(2)],
              "B": [Tensor(rng.integers(0, 2, size=(n, 4)).astype(float)) for _ in range(2)],
              "S": _t(rng, n, 6)}
    y = rng.integers(0, 2, size=n).astype(float)
    params = [p for _, p in net.named_parameters()]

    def fn(*_):
        return ops.bce_loss(net(inputs, train=False), y)
    return fn, params + inputs["I"] + inputs["M"] + [inputs["S"]]


CASES = {
    "add": _binary(ops.add, (4,)),
    "sub": _binary(ops.sub),
    "mul": _binary(ops.mul),
    "matmul": matmul,
    "concat": concat,
    "slice_flatten": slice_reshape,
    "relu": _unary(ops.relu),
    "tanh": _unary(ops.tanh),
    "sigmoid": _unary(ops.sigmoid),
    "dropout_train": dropout_train,
    "dropout_eval": dropout_eval,
    "conv2d": conv2d,
    "max_pool2d": max_pool,
    "roi_align": roi_align,
    "bce_mean": reductions_bce,
    "lstm_2step": lstm_two_step,
    "hybrid_forward_bce": hybrid_bce,
}
