"""Neural building blocks on top of the tensor engine.

``conv1d_same`` and ``lstm_forward`` are fused primitives with hand-written
backward rules (a Python-level unrolled LSTM would put thousands of tiny
nodes on the tape per sample).  Everything else is composed from the
primitives in :mod:`wdmir.numerics.tensor`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import (
    Tensor,
    _make,
    _sigmoid,
    concat,
    flip,
    getitem,
    matmul,
    mul,
    softmax,
    swap_last,
)


# -- parameter containers -----------------------------------------------------

@dataclass
class LinearParams:
    weight: Tensor  # [d_in, d_out]
    bias: Tensor | None = None  # [d_out]


@dataclass
class ConvParams:
    kernel: Tensor  # [d_out, d_in, 3]
    bias: Tensor  # [d_out]


@dataclass
class LstmParams:
    """Gate order along the 4h axis is input, forget, cell, output."""

    w_ih: Tensor  # [d_in, 4h]
    w_hh: Tensor  # [h, 4h]
    bias: Tensor  # [4h]

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[0]


@dataclass
class BiLstmParams:
    forward: LstmParams
    backward: LstmParams


# -- initialisation -----------------------------------------------------------

def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_linear(rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True) -> LinearParams:
    w = xavier_uniform(rng, d_in, d_out, (d_in, d_out))
    b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None
    return LinearParams(w, b)


def init_conv(rng: np.random.Generator, d_in: int, d_out: int | None = None) -> ConvParams:
    d_out = d_in if d_out is None else d_out
    k = xavier_uniform(rng, 3 * d_in, 3 * d_out, (d_out, d_in, 3))
    return ConvParams(k, Tensor(np.zeros(d_out), requires_grad=True))


def init_lstm(rng: np.random.Generator, d_in: int, hidden: int) -> LstmParams:
    w_ih = xavier_uniform(rng, d_in, 4 * hidden, (d_in, 4 * hidden))
    w_hh = xavier_uniform(rng, hidden, 4 * hidden, (hidden, 4 * hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0
    return LstmParams(w_ih, w_hh, Tensor(b, requires_grad=True))


def init_bilstm(rng: np.random.Generator, d_in: int, hidden: int) -> BiLstmParams:
    return BiLstmParams(init_lstm(rng, d_in, hidden), init_lstm(rng, d_in, hidden))


# -- layers -------------------------------------------------------------------

def linear(x: Tensor, p: LinearParams) -> Tensor:
    if x.shape[-1] != p.weight.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {p.weight.shape[0]}")
    y = matmul(x, p.weight) if x.ndim >= 2 else matmul(x.reshape(1, -1), p.weight).reshape(-1)
    return y if p.bias is None else y + p.bias


def dropout(x: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``p == 0`` or ``rng`` is None (eval)."""
    if p <= 0.0 or rng is None:
        return x
    if p >= 1.0:
        raise ConfigError(f"dropout probability must be < 1, got {p}")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor._wrap(mask))


def conv1d_same(x: Tensor, p: ConvParams) -> Tensor:
    """Width-3 convolution along the last (time) axis with zero padding.

    ``x`` is channel-major ``[..., d_in, L]``; output is ``[..., d_out, L]``.
    """
    w, b = p.kernel, p.bias
    if w.ndim != 3 or w.shape[2] != 3:
        raise ConfigError(f"conv1d kernel must be [d_out, d_in, 3], got {w.shape}")
    if x.ndim < 2 or x.shape[-2] != w.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} does not have {w.shape[1]} channels")
    length = x.shape[-1]
    pad = [(0, 0)] * (x.ndim - 1) + [(1, 1)]
    xp = np.pad(x.data, pad)
    # windows[..., i, t, k] = xp[..., i, t + k]
    windows = np.stack([xp[..., k:k + length] for k in range(3)], axis=-1)
    wd = w.data
    out = np.einsum("oik,...itk->...ot", wd, windows) + b.data[:, None]

    def backward(g):
        gw = (np.einsum("bot,bitk->oik", g.reshape((-1,) + g.shape[-2:]),
                            windows.reshape((-1,) + windows.shape[-3:]))
                  if w.requires_grad else None)
        gb = g.sum(axis=tuple(range(g.ndim - 2)) + (g.ndim - 1,)) if b.requires_grad else None
        gx = None
        if x.requires_grad:
            gwin = np.einsum("oik,...ot->...itk", wd, g)
            gxp = np.zeros(xp.shape)
            for k in range(3):
                gxp[..., k:k + length] += gwin[..., k]
            gx = gxp[..., 1:-1]
        return gx, gw, gb

    return _make("conv1d_same", out, (x, w, b), backward)


def lstm_forward(x: Tensor, p: LstmParams) -> tuple[Tensor, Tensor]:
    """Single-layer LSTM over time-major ``x`` of shape ``[..., L, d_in]``.

    Returns ``(outputs [..., L, h], last_hidden [..., h])`` with zero initial
    hidden and cell state.
    """
    if x.ndim < 2:
        raise ShapeError(f"lstm expects [..., L, d_in], got {x.shape}")
    d_in, four_h = p.w_ih.shape
    h = p.hidden
    if four_h != 4 * h or p.w_hh.shape != (h, 4 * h) or p.bias.shape != (4 * h,):
        raise ConfigError("inconsistent LSTM parameter shapes "
                          f"{p.w_ih.shape}, {p.w_hh.shape}, {p.bias.shape}")
    if x.shape[-1] != d_in:
        raise ShapeError(f"lstm: input width {x.shape[-1]} != {d_in}")
    lead = x.shape[:-2]
    steps = x.shape[-2]
    xs = x.data.reshape(-1, steps, d_in)  # [B, L, d]
    nb = xs.shape[0]
    wih, whh, bias = p.w_ih.data, p.w_hh.data, p.bias.data
    zx = xs @ wih + bias  # [B, L, 4h]

    gates = np.empty((nb, steps, 4 * h))
    cells = np.empty((nb, steps, h))
    hs = np.empty((nb, steps, h))
    h_prev = np.zeros((nb, h))
    c_prev = np.zeros((nb, h))
    for t in range(steps):
        z = zx[:, t] + h_prev @ whh
        ifo = _sigmoid(np.concatenate([z[:, :2 * h], z[:, 3 * h:]], axis=1))
        i, f, o = ifo[:, :h], ifo[:, h:2 * h], ifo[:, 2 * h:]
        gg = np.tanh(z[:, 2 * h:3 * h])
        c_prev = f * c_prev + i * gg
        h_prev = o * np.tanh(c_prev)
        gates[:, t, :h], gates[:, t, h:2 * h] = i, f
        gates[:, t, 2 * h:3 * h], gates[:, t, 3 * h:] = gg, o
        cells[:, t] = c_prev
        hs[:, t] = h_prev

    def backward(g):
        g = g.reshape(nb, steps, h)
        dz_all = np.empty((nb, steps, 4 * h))
        gwhh = np.zeros_like(whh)
        dh_next = np.zeros((nb, h))
        dc_next = np.zeros((nb, h))
        for t in range(steps - 1, -1, -1):
            i, f = gates[:, t, :h], gates[:, t, h:2 * h]
            gg, o = gates[:, t, 2 * h:3 * h], gates[:, t, 3 * h:]
            tc = np.tanh(cells[:, t])
            c_before = cells[:, t - 1] if t > 0 else np.zeros((nb, h))
            h_before = hs[:, t - 1] if t > 0 else np.zeros((nb, h))
            dh = g[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[:, t]
            dz[:, :h] = dc * gg * i * (1.0 - i)
            dz[:, h:2 * h] = dc * c_before * f * (1.0 - f)
            dz[:, 2 * h:3 * h] = dc * i * (1.0 - gg * gg)
            dz[:, 3 * h:] = dh * tc * o * (1.0 - o)
            gwhh += h_before.T @ dz
            dh_next = dz @ whh.T
            dc_next = dc * f
        flat_dz = dz_all.reshape(-1, 4 * h)
        gx = (dz_all @ wih.T).reshape(x.shape) if x.requires_grad else None
        gwih = xs.reshape(-1, d_in).T @ flat_dz if p.w_ih.requires_grad else None
        gb = flat_dz.sum(axis=0) if p.bias.requires_grad else None
        return gx, gwih, gwhh, gb

    outputs = _make("lstm", hs.reshape(lead + (steps, h)), (x, p.w_ih, p.w_hh, p.bias), backward)
    last = getitem(outputs, (Ellipsis, steps - 1, slice(None)))
    return outputs, last


def bilstm_forward(x: Tensor, p: BiLstmParams) -> Tensor:
    """Forward pass concatenated with a time-reversed pass: ``[..., L, 2h]``."""
    fwd, _ = lstm_forward(x, p.forward)
    bwd, _ = lstm_forward(flip(x, -2), p.backward)
    return concat([fwd, flip(bwd, -2)], axis=-1)


def attention(q: Tensor, k: Tensor, v: Tensor, scale: float | None = None) -> Tensor:
    """``softmax(q k^T / sqrt(d_k)) v`` with the softmax over the key axis."""
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: keys {k.shape} and values {v.shape} differ in length")
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"attention: query width {q.shape[-1]} != key width {k.shape[-1]}")
    scale = 1.0 / math.sqrt(k.shape[-1]) if scale is None else scale
    weights = softmax(matmul(q, swap_last(k)) * scale, axis=-1)
    return matmul(weights, v)
