"""Differentiable primitives.

Each function computes its forward value eagerly and, when any input
requires grad, records a closure that maps the output gradient back to the
inputs. Only what the fusion models need is here.
"""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor

BCE_EPS = 1e-7


def _node(data, parents, backward, op) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward, op)
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))
    return _node(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.shape))
    return _node(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))
    return _node(a.data * b.data, (a, b), backward, "mul")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)
    return _node(a.data @ b.data, (a, b), backward, "matmul")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    ref = tensors[0]
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape)) if i != ax):
            raise ShapeError("concat", ref.shape, t.shape)
    if len(tensors) == 1:
        return ref
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[ax] = slice(lo, hi)
                t.accumulate(g[tuple(index)])
    return _node(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward, "concat")


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        x.accumulate(full)
    return _node(x.data[index], (x,), backward, "slice")


def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None

    def backward(g):
        x.accumulate(g.reshape(x.shape))
    return _node(out, (x,), backward, "reshape")


def flatten(x: Tensor) -> Tensor:
    """Collapse every axis after the first."""
    if x.ndim < 1:
        raise ShapeError("flatten", x.shape)
    return reshape(x, (x.shape[0], -1))


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0

    def backward(g):
        x.accumulate(g * keep)
    return _node(x.data * keep, (x,), backward, "relu")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g):
        x.accumulate(g * (1.0 - out * out))
    return _node(out, (x,), backward, "tanh")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)

    def backward(g):
        x.accumulate(g * out * (1.0 - out))
    return _node(out, (x,), backward, "sigmoid")


def dropout(x: Tensor, rate: float, train: bool,
            rng: Union[np.random.Generator, int, None] = None) -> Tensor:
    """Inverted dropout; the identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward(g):
        x.accumulate(g * mask)
    return _node(x.data * mask, (x,), backward, "dropout")


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1, on ``[N, C, H, W]``."""
    if x.ndim != 4 or w.ndim != 4 or w.shape[2:] != (3, 3) or x.shape[1] != w.shape[1]:
        raise ShapeError("conv2d", x.shape, w.shape)
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError("conv2d", w.shape, b.shape)
    N, C, H, W = x.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # N, C, H, W, 3, 3
    out = np.tensordot(cols, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.data[None, :, None, None]
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        if w.requires_grad:
            w.accumulate(np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3])))
        if b is not None and b.requires_grad:
            b.accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gp = np.zeros((N, C, H + 2, W + 2))
            for i in range(3):
                for j in range(3):
                    gp[:, :, i:i + H, j:j + W] += np.einsum("nohw,oc->nchw", g, w.data[:, :, i, j])
            x.accumulate(gp[:, :, 1:-1, 1:-1])
    return _node(np.ascontiguousarray(out), parents, backward, "conv2d")


def max_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping ``k x k`` max pooling; trailing rows/cols are dropped."""
    if x.ndim != 4 or x.shape[2] < k or x.shape[3] < k:
        raise ShapeError("max_pool2d", x.shape, (k, k))
    N, C, H, W = x.shape
    H2, W2 = H // k, W // k
    win = x.data[:, :, :H2 * k, :W2 * k].reshape(N, C, H2, k, W2, k).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(N, C, H2, W2, k * k)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        onehot = np.zeros_like(win)
        np.put_along_axis(onehot, arg[..., None], g[..., None], axis=-1)
        full = np.zeros_like(x.data)
        full[:, :, :H2 * k, :W2 * k] = (onehot.reshape(N, C, H2, W2, k, k)
                                       .transpose(0, 1, 2, 4, 3, 5).reshape(N, C, H2 * k, W2 * k))
        x.accumulate(full)
    return _node(out, (x,), backward, "max_pool2d")


def _axis_weights(length: int, start: float, extent: float, bins: int, samples: int) -> np.ndarray:
    """Averaged 1-D bilinear weights, ``[bins, length]``."""
    weights = np.zeros((bins, length))
    step = extent / bins
    for b in range(bins):
        for s in range(samples):
            y = start + b * step + (s + 0.5) * step / samples
            if y < -1.0 or y > length:
                continue
            y = max(y, 0.0)
            lo = int(np.floor(y))
            if lo >= length - 1:
                lo = hi = length - 1
                frac = 0.0
            else:
                hi = lo + 1
                frac = y - lo
            weights[b, lo] += (1.0 - frac) / samples
            weights[b, hi] += frac / samples
    return weights


def roi_align_weights(shape_hw, roi, output_size, samples_per_bin=2, spatial_scale=1.0):
    """Separable sampling matrices ``(Wy [h, H], Wx [w, W])`` for one region.

    ``roi`` is ``(x1, y1, x2, y2)`` in continuous coordinates where feature
    cell ``i`` covers ``[i, i + 1)``; samples are read at ``coord - 0.5``.
    Samples further than one cell outside the map read as zero.
    """
    out_h, out_w = output_size
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"roi_align output size must be positive, got {output_size}")
    x1, y1, x2, y2 = (float(v) * spatial_scale for v in roi)
    if not (x2 > x1 and y2 > y1):
        raise ValueError(f"roi must have positive area, got {tuple(roi)}")
    H, W = shape_hw
    wy = _axis_weights(H, y1 - 0.5, y2 - y1, out_h, samples_per_bin)
    wx = _axis_weights(W, x1 - 0.5, x2 - x1, out_w, samples_per_bin)
    return wy, wx


def roi_align(features: Tensor, roi, output_size=(7, 7), samples_per_bin: int = 2,
              spatial_scale: float = 1.0) -> Tensor:
    """Average of bilinear samples per output bin, ``[C, H, W] -> [C, h, w]``."""
    if features.ndim != 3:
        raise ShapeError("roi_align", features.shape)
    wy, wx = roi_align_weights(features.shape[1:], roi, output_size, samples_per_bin, spatial_scale)
    out = wy @ features.data @ wx.T

    def backward(g):
        features.accumulate(wy.T @ g @ wx)
    return _node(out, (features,), backward, "roi_align")


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        x.accumulate(np.broadcast_to(g, x.shape))
    return _node(np.array(x.data.sum()), (x,), backward, "sum")


def mean(x: Tensor) -> Tensor:
    n = x.size

    def backward(g):
        x.accumulate(np.broadcast_to(g / n, x.shape))
    return _node(np.array(x.data.mean()), (x,), backward, "mean")


def bce_loss(p: Tensor, target) -> Tensor:
    """Mean binary cross entropy of probabilities clamped to ``[eps, 1 - eps]``."""
    y = np.asarray(target, dtype=np.float64).reshape(p.shape)
    pc = np.clip(p.data, BCE_EPS, 1.0 - BCE_EPS)
    n = p.size
    loss = -np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    inside = (p.data > BCE_EPS) & (p.data < 1.0 - BCE_EPS)

    def backward(g):
        p.accumulate(g * inside * (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n)
    return _node(np.array(loss), (p,), backward, "bce")
