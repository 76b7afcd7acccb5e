"""Parameterized layers built from the primitives in :mod:`ops`."""
from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from ..errors import ShapeError
from . import ops
from .tensor import Tensor


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Module:
    """Holds parameters and submodules as attributes, in assignment order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = uniform_init(rng, (n_in, n_out), n_in)
        self.bias = uniform_init(rng, (n_out,), n_in)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(ops.matmul(x, self.weight), self.bias)


class Conv3x3(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        fan_in = 9 * c_in
        self.weight = uniform_init(rng, (c_out, c_in, 3, 3), fan_in)
        self.bias = uniform_init(rng, (c_out,), fan_in)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias)


def lstm_step(x: Tensor, h: Tensor, c: Tensor, params: dict) -> tuple[Tensor, Tensor]:
    """One vanilla LSTM step with gate blocks ordered (i, f, g, o).

    ``params`` holds ``w_x [D, 4H]``, ``w_h [H, 4H]`` and ``bias [4H]``.
    """
    w_x, w_h, bias = params["w_x"], params["w_h"], params["bias"]
    H = w_h.shape[0]
    if x.ndim != 2 or x.shape[1] != w_x.shape[0]:
        raise ShapeError("lstm_step", x.shape, w_x.shape)
    if h.shape != (x.shape[0], H) or c.shape != h.shape:
        raise ShapeError("lstm_step", h.shape, c.shape)
    z = ops.add(ops.add(ops.matmul(x, w_x), ops.matmul(h, w_h)), bias)
    i = ops.sigmoid(ops.slice_axis(z, 1, 0, H))
    f = ops.sigmoid(ops.slice_axis(z, 1, H, 2 * H))
    g = ops.tanh(ops.slice_axis(z, 1, 2 * H, 3 * H))
    o = ops.sigmoid(ops.slice_axis(z, 1, 3 * H, 4 * H))
    c_new = ops.add(ops.mul(f, c), ops.mul(i, g))
    h_new = ops.mul(o, ops.tanh(c_new))
    return h_new, c_new


class LSTM(Module):
    """Unrolled single-layer LSTM returning the final hidden state."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, forget_bias: float = 1.0):
        self.hidden = hidden
        self.w_x = uniform_init(rng, (n_in, 4 * hidden), hidden)
        self.w_h = uniform_init(rng, (hidden, 4 * hidden), hidden)
        bias = uniform_init(rng, (4 * hidden,), hidden)
        bias.data[hidden:2 * hidden] = forget_bias
        self.bias = bias

    def step(self, x, h, c):
        return lstm_step(x, h, c, {"w_x": self.w_x, "w_h": self.w_h, "bias": self.bias})

    def __call__(self, xs: list[Tensor], state: Optional[tuple[Tensor, Tensor]] = None) -> Tensor:
        n = xs[0].shape[0]
        h, c = state or (Tensor(np.zeros((n, self.hidden))), Tensor(np.zeros((n, self.hidden))))
        for x in xs:
            h, c = self.step(x, h, c)
        return h
