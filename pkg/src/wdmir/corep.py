"""Text-queried cross-attention over the fused video and audio streams."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numerics.nn import LinearParams, attention, init_linear, linear
from .numerics.tensor import Tensor


@dataclass
class AttnProjections:
    query: LinearParams
    key: LinearParams
    value: LinearParams


@dataclass
class CrmParams:
    text_proj: LinearParams
    video: AttnProjections | None = None
    audio: AttnProjections | None = None
    trimodal: AttnProjections | None = None


def _init_proj(rng: np.random.Generator, d: int) -> AttnProjections:
    return AttnProjections(*(init_linear(rng, d, d, bias=False) for _ in range(3)))


def init_crm(rng: np.random.Generator, d_text: int, d_model: int,
             projections: bool = True) -> CrmParams:
    params = CrmParams(text_proj=init_linear(rng, d_text, d_model))
    if projections:
        params.video = _init_proj(rng, d_model)
        params.audio = _init_proj(rng, d_model)
        params.trimodal = _init_proj(rng, d_model)
    return params


def cross_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V, with d_k the key width."""
    if q.shape[-1] != k.shape[-1] or k.shape[-1] != v.shape[-1]:
        raise ShapeError(f"cross_attention widths differ: Q {q.shape}, K {k.shape}, V {v.shape}")
    return attention(q, k, v, scale=1.0 / math.sqrt(k.shape[-1]))


def _projected(q: Tensor, k: Tensor, v: Tensor, proj: AttnProjections | None) -> Tensor:
    if proj is not None:
        q, k, v = linear(q, proj.query), linear(k, proj.key), linear(v, proj.value)
    return cross_attention(q, k, v)


def project_text(f_text: Tensor, params: CrmParams) -> Tensor:
    return linear(f_text, params.text_proj)


def crm_forward(f_t: Tensor, f_va: Tensor, f_av: Tensor,
                params: CrmParams) -> tuple[Tensor, Tensor, Tensor]:
    """``f_t`` must already be at model width (see :func:`project_text`).

    Returns ``(F_vat, F_avt, F_tva)``, each with the text sequence length.
    """
    d = f_t.shape[-1]
    if f_va.shape[-1] != d or f_av.shape[-1] != d:
        raise ShapeError(f"crm widths differ: text {f_t.shape}, video {f_va.shape}, audio {f_av.shape}")
    f_vat = _projected(f_t, f_va, f_va, params.video)
    f_avt = _projected(f_t, f_av, f_av, params.audio)
    f_tva = _projected(f_t, f_vat, f_avt, params.trimodal)
    return f_vat, f_avt, f_tva
