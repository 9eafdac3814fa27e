"""Multilevel orthonormal Haar transform along the last (time) axis.

Signals are channel-major ``[..., d, L]``; each channel is transformed
independently.  All functions are composed from tape primitives, so they
are differentiable end to end.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import ShapeError
from .numerics.tensor import Tensor, concat, getitem, reshape, split

SQRT_HALF = 1.0 / math.sqrt(2.0)

# Instrumentation: number of dwt/idwt invocations since the last reset.
calls: Counter = Counter()


def reset_counters() -> None:
    calls.clear()


@dataclass
class WaveletPyramid:
    """``highs[0]`` is level 1 (finest, length L/2); ``low`` has length L/2^J."""

    low: Tensor
    highs: list[Tensor]
    levels: int
    original_length: int

    def bands(self) -> list[Tensor]:
        return [self.low, *self.highs]


def _haar_split(x: Tensor) -> tuple[Tensor, Tensor]:
    even = getitem(x, (Ellipsis, slice(0, None, 2)))
    odd = getitem(x, (Ellipsis, slice(1, None, 2)))
    return (even + odd) * SQRT_HALF, (even - odd) * SQRT_HALF


def _haar_merge(low: Tensor, high: Tensor) -> Tensor:
    even = (low + high) * SQRT_HALF
    odd = (low - high) * SQRT_HALF
    pairs = concat([reshape(even, even.shape + (1,)), reshape(odd, odd.shape + (1,))], axis=-1)
    return reshape(pairs, low.shape[:-1] + (2 * low.shape[-1],))


def dwt_multilevel(x: Tensor, levels: int) -> WaveletPyramid:
    if levels < 1:
        raise ShapeError(f"wavelet levels must be >= 1, got {levels}")
    length = x.shape[-1]
    block = 2 ** levels
    if length % block:
        pad = -length % block
        raise ShapeError(f"signal length {length} is not divisible by 2^{levels}={block}; "
                         f"pad by {pad} samples to {length + pad}")
    calls["dwt"] += 1
    highs = []
    low = x
    for _ in range(levels):
        low, high = _haar_split(low)
        highs.append(high)
    return WaveletPyramid(low, highs, levels, length)


def _check_pyramid(p: WaveletPyramid) -> None:
    if len(p.highs) != p.levels:
        raise ShapeError(f"pyramid declares {p.levels} levels but holds {len(p.highs)} high bands")
    for j, band in enumerate(p.highs):
        want = p.original_length >> (j + 1)
        if band.shape[-1] != want:
            raise ShapeError(f"high band at level {j + 1} has length {band.shape[-1]}, expected {want}")
    want_low = p.original_length >> p.levels
    if p.low.shape[-1] != want_low:
        raise ShapeError(f"low band has length {p.low.shape[-1]}, expected {want_low}")


def idwt_multilevel(p: WaveletPyramid) -> Tensor:
    _check_pyramid(p)
    calls["idwt"] += 1
    x = p.low
    for high in reversed(p.highs):
        x = _haar_merge(x, high)
    return x


def high_lengths(length: int, levels: int) -> list[int]:
    return [length >> (j + 1) for j in range(levels)]


def concat_highs(p: WaveletPyramid) -> Tensor:
    """Join the detail bands along time, finest level first."""
    return concat(p.highs, axis=-1)


def split_highs(h: Tensor, length: int, levels: int) -> list[Tensor]:
    sizes = high_lengths(length, levels)
    if h.shape[-1] != sum(sizes):
        raise ShapeError(f"concatenated high bands have length {h.shape[-1]}, "
                         f"expected {sum(sizes)} for L={length}, J={levels}")
    return split(h, sizes, axis=-1)
