"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, step: float = 1e-5,
                   indices: Sequence[int] | None = None) -> np.ndarray:
    """d fn() / d param by central differences; ``fn`` must re-read ``param.data``.

    With ``indices`` only those flat coordinates are probed; the rest of the
    returned array is left at zero.
    """
    grad = np.zeros(param.shape)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in (range(flat.size) if indices is None else indices):
        orig = flat[i]
        flat[i] = orig + step
        up = fn().item()
        flat[i] = orig - step
        down = fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def analytic_grads(fn: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    return [p.grad.copy() for p in params]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor), elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor],
                    step: float = 1e-5) -> float:
    """Worst relative error between tape gradients and finite differences."""
    grads = analytic_grads(fn, params)
    worst = 0.0
    for p, g in zip(params, grads):
        worst = max(worst, relative_error(g, numerical_grad(fn, p, step)))
    return worst
