"""Wavelet-driven fusion of the video and audio streams.

Pipeline per modality pair: resample both sequences to a shared length and
width, take a J-level Haar decomposition, sharpen the approximation band
with a width-3 convolution, run a BiLSTM over the concatenated detail
bands, mix each modality's details with the other's BiLSTM output, and
invert the transform.

Sequences enter and leave time-major ``[..., L, d]``; the wavelet code
works channel-major ``[..., d, L]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics.nn import (
    BiLstmParams,
    ConvParams,
    LinearParams,
    bilstm_forward,
    conv1d_same,
    init_bilstm,
    init_conv,
    init_linear,
    linear,
)
from .numerics.tensor import Tensor, matmul, softmax, swap_last
from .wavelet import (
    WaveletPyramid,
    concat_highs,
    dwt_multilevel,
    idwt_multilevel,
    split_highs,
)


@dataclass
class AlignedPair:
    V: Tensor
    A: Tensor

    @property
    def length(self) -> int:
        return self.V.shape[-2]

    @property
    def d_model(self) -> int:
        return self.V.shape[-1]


@dataclass
class WfmParams:
    align_video: LinearParams
    align_audio: LinearParams
    conv_video: ConvParams
    conv_audio: ConvParams
    bilstm_video: BiLstmParams
    bilstm_audio: BiLstmParams


def init_wfm(rng: np.random.Generator, d_video: int, d_audio: int, d_model: int) -> WfmParams:
    if d_model % 2:
        raise ConfigError(f"d_model must be even so the BiLSTM output matches it, got {d_model}")
    half = d_model // 2
    return WfmParams(
        align_video=init_linear(rng, d_video, d_model),
        align_audio=init_linear(rng, d_audio, d_model),
        conv_video=init_conv(rng, d_model),
        conv_audio=init_conv(rng, d_model),
        bilstm_video=init_bilstm(rng, d_model, half),
        bilstm_audio=init_bilstm(rng, d_model, half),
    )


@lru_cache(maxsize=64)
def _interp_matrix(src: int, dst: int) -> np.ndarray:
    """Row t holds linear-interpolation weights for source position t*(src-1)/(dst-1)."""
    m = np.zeros((dst, src))
    if src == 1:
        m[:, 0] = 1.0
        return m
    pos = np.arange(dst) * (src - 1) / max(dst - 1, 1)
    lo = np.minimum(np.floor(pos).astype(int), src - 2)
    frac = pos - lo
    m[np.arange(dst), lo] = 1.0 - frac
    m[np.arange(dst), lo + 1] += frac
    m.setflags(write=False)
    return m


def resample(x: Tensor, length: int) -> Tensor:
    """Linearly resample time-major ``x`` to ``length`` steps (endpoints kept)."""
    src = x.shape[-2]
    if src == length:
        return x
    return matmul(Tensor._wrap(_interp_matrix(src, length)), x)


def align_sequences(f_video: Tensor, f_audio: Tensor, params: WfmParams,
                    length: int) -> AlignedPair:
    if length % 8:
        raise ConfigError(f"aligned length must be a multiple of 8, got {length}")
    for name, f in (("video", f_video), ("audio", f_audio)):
        if f.ndim < 2 or f.shape[-2] < 1:
            raise ShapeError(f"{name} sequence must be [L, d] with L >= 1, got {f.shape}")
    v = linear(resample(f_video, length), params.align_video)
    a = linear(resample(f_audio, length), params.align_audio)
    return AlignedPair(v, a)


def enhance_low(band: Tensor, conv: ConvParams) -> Tensor:
    return conv1d_same(band, conv)


def cross_map(f_high: Tensor, params: BiLstmParams) -> Tensor:
    """BiLSTM over time-major detail sequence; output width equals input width."""
    width = 2 * params.forward.hidden
    if f_high.shape[-1] != width:
        raise ConfigError(f"BiLSTM output width {width} does not match feature width {f_high.shape[-1]}")
    return bilstm_forward(f_high, params)


def freq_interact(f_self: Tensor, h_other: Tensor) -> Tensor:
    """softmax(f_self * h_other + f_self) over the feature axis."""
    if f_self.shape != h_other.shape:
        raise ShapeError(f"freq_interact: shapes {f_self.shape} and {h_other.shape} differ")
    return softmax(f_self * h_other + f_self, axis=-1)


def reconstruct(low: Tensor, high_fused: Tensor, length: int, levels: int = 3) -> Tensor:
    """Channel-major inverse transform from an enhanced low band and joined details."""
    highs = split_highs(high_fused, length, levels)
    return idwt_multilevel(WaveletPyramid(low, highs, levels, length))


def wfm_forward(f_video: Tensor, f_audio: Tensor, params: WfmParams,
                length: int, levels: int = 3) -> tuple[Tensor, Tensor]:
    """Return ``(F_VA, F_AV)``: fused video and fused audio, each ``[..., L, d_model]``."""
    pair = align_sequences(f_video, f_audio, params, length)
    return wfm_from_aligned(pair, params, levels)


def wfm_from_aligned(pair: AlignedPair, params: WfmParams, levels: int = 3) -> tuple[Tensor, Tensor]:
    length = pair.length
    pv = dwt_multilevel(swap_last(pair.V), levels)
    pa = dwt_multilevel(swap_last(pair.A), levels)
    low_v = enhance_low(pv.low, params.conv_video)
    low_a = enhance_low(pa.low, params.conv_audio)
    fh_v = swap_last(concat_highs(pv))  # time-major [7L/8, d]
    fh_a = swap_last(concat_highs(pa))
    hv = cross_map(fh_v, params.bilstm_video)
    ha = cross_map(fh_a, params.bilstm_audio)
    h_av = freq_interact(fh_a, hv)
    h_va = freq_interact(fh_v, ha)
    f_av = swap_last(reconstruct(low_a, swap_last(h_av), length, levels))
    f_va = swap_last(reconstruct(low_v, swap_last(h_va), length, levels))
    return f_va, f_av
