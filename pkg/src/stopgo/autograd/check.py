"""Finite-difference verification of backward passes."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               floor: float = 1e-6, skip_kinks: bool = True) -> float:
    """Max elementwise relative error between backward and central differences.

    ``fn(*inputs)`` must return a scalar Tensor. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``. With ``skip_kinks``, coordinates where
    the two one-sided differences disagree (e.g. relu exactly at 0, pooling
    ties) are excluded as non-differentiable points.
    """
    for x in inputs:
        x.data = np.ascontiguousarray(x.data)
        x.grad = None
    out = fn(*inputs)
    out.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    f0 = out.item()
    worst = 0.0
    for x, a in zip(inputs, analytic):
        flat = x.data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            f_plus = fn(*inputs).item()
            flat[k] = orig - eps
            f_minus = fn(*inputs).item()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            if skip_kinks:
                right, left = (f_plus - f0) / eps, (f0 - f_minus) / eps
                if abs(right - left) > 1e-3 * max(1.0, abs(numeric)):
                    continue
            an = a.reshape(-1)[k]
            err = abs(an - numeric) / max(abs(an), abs(numeric), floor)
            worst = max(worst, err)
    return worst
