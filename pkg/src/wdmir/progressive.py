"""Progressive fusion: self-attention over the stacked text-side features,
LSTM summaries of the raw video/audio, and the MLP classifier head."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics.nn import (
    LinearParams,
    LstmParams,
    attention,
    dropout,
    init_linear,
    init_lstm,
    linear,
    lstm_forward,
)
from .numerics.tensor import Tensor, _softmax, concat, getitem, mean, relu, reshape

STACK_MODES = ("time", "modality")
# Zero-fillable slots of the classifier input, in concatenation order.
SLOTS = ("flv_fla", "ft", "fvat_favt", "ftva")


@dataclass
class SelfAttnParams:
    query: LinearParams
    key: LinearParams
    value: LinearParams


@dataclass
class PfmParams:
    self_attn: SelfAttnParams
    lstm_video: LstmParams
    lstm_audio: LstmParams
    mlp_hidden: LinearParams
    mlp_out: LinearParams

    @property
    def num_classes(self) -> int:
        return self.mlp_out.weight.shape[1]


def mlp_hidden_width(in_width: int) -> int:
    return math.ceil(2 * in_width / 3)


def classifier_width(d_model: int, hidden: int) -> int:
    return 2 * hidden + 4 * d_model


def init_pfm(rng: np.random.Generator, d_video: int, d_audio: int, d_model: int,
             hidden: int, num_classes: int) -> PfmParams:
    width = classifier_width(d_model, hidden)
    mid = mlp_hidden_width(width)
    return PfmParams(
        self_attn=SelfAttnParams(*(init_linear(rng, d_model, d_model, bias=False) for _ in range(3))),
        lstm_video=init_lstm(rng, d_video, hidden),
        lstm_audio=init_lstm(rng, d_audio, hidden),
        mlp_hidden=init_linear(rng, width, mid),
        mlp_out=init_linear(rng, mid, num_classes),
    )


@dataclass
class Prediction:
    logits: np.ndarray
    probabilities: np.ndarray
    label: int

    @classmethod
    def from_logits(cls, logits) -> "Prediction":
        logits = np.asarray(logits, dtype=np.float64).reshape(-1)
        probs = _softmax(logits, axis=-1)
        # np.argmax returns the first maximum, i.e. the lowest class index on ties.
        return cls(logits, probs, int(np.argmax(logits)))


def stack_features(f_t: Tensor, f_vat: Tensor, f_avt: Tensor, mode: str = "time") -> Tensor:
    """``mode="time"`` gives ``[..., 3Lt, d]``; ``mode="modality"`` gives ``[..., Lt, 3, d]``."""
    if not f_t.shape == f_vat.shape == f_avt.shape:
        raise ShapeError(f"stack_features: shapes {f_t.shape}, {f_vat.shape}, {f_avt.shape} differ")
    if mode == "time":
        return concat([f_t, f_vat, f_avt], axis=-2)
    if mode == "modality":
        parts = [reshape(f, f.shape[:-1] + (1, f.shape[-1])) for f in (f_t, f_vat, f_avt)]
        return concat(parts, axis=-2)
    raise ConfigError(f"unknown stack mode {mode!r}; expected one of {STACK_MODES}")


def unstack_features(f_m: Tensor, mode: str = "time") -> tuple[Tensor, Tensor, Tensor]:
    if mode == "time":
        if f_m.shape[-2] % 3:
            raise ShapeError(f"stacked length {f_m.shape[-2]} is not a multiple of 3")
        n = f_m.shape[-2] // 3
        return tuple(getitem(f_m, (Ellipsis, slice(i * n, (i + 1) * n), slice(None)))
                     for i in range(3))
    if mode == "modality":
        return tuple(getitem(f_m, (Ellipsis, i, slice(None))) for i in range(3))
    raise ConfigError(f"unknown stack mode {mode!r}; expected one of {STACK_MODES}")


def self_attention_enhance(f_m: Tensor, params: SelfAttnParams,
                           mode: str = "time") -> tuple[Tensor, Tensor, Tensor]:
    q = linear(f_m, params.query)
    k = linear(f_m, params.key)
    v = linear(f_m, params.value)
    return unstack_features(attention(q, k, v), mode)


def lstm_summarize(f_video: Tensor, f_audio: Tensor, params: PfmParams) -> tuple[Tensor, Tensor]:
    for name, f in (("video", f_video), ("audio", f_audio)):
        if f.ndim < 2 or f.shape[-2] < 1:
            raise ShapeError(f"{name} sequence must be non-empty [L, d], got {f.shape}")
    _, lv = lstm_forward(f_video, params.lstm_video)
    _, la = lstm_forward(f_audio, params.lstm_audio)
    return lv, la


def classifier_input(f_lv: Tensor, f_la: Tensor, ft: Tensor, fvat: Tensor, favt: Tensor,
                     ftva: Tensor, drop: frozenset[str] | set[str] = frozenset()) -> Tensor:
    """Mean-pool the sequence features over time and concatenate all six.

    Slots named in ``drop`` are replaced by zeros so the width is unchanged.
    """
    unknown = set(drop) - set(SLOTS)
    if unknown:
        raise ConfigError(f"unknown classifier slots {sorted(unknown)}; expected from {SLOTS}")
    pooled = {"ft": [mean(ft, axis=-2)],
              "fvat_favt": [mean(fvat, axis=-2), mean(favt, axis=-2)],
              "ftva": [mean(ftva, axis=-2)],
              "flv_fla": [f_lv, f_la]}
    parts = []
    for slot in ("flv_fla", "ft", "fvat_favt", "ftva"):
        for t in pooled[slot]:
            parts.append(Tensor._wrap(np.zeros(t.shape)) if slot in drop else t)
    return concat(parts, axis=-1)


def mlp_logits(features: Tensor, params: PfmParams, dropout_p: float = 0.0,
               rng: np.random.Generator | None = None) -> Tensor:
    if features.shape[-1] != params.mlp_hidden.weight.shape[0]:
        raise ConfigError(f"classifier input width {features.shape[-1]} != "
                          f"configured {params.mlp_hidden.weight.shape[0]}")
    hidden = dropout(relu(linear(features, params.mlp_hidden)), dropout_p, rng)
    return linear(hidden, params.mlp_out)


def classify(f_lv: Tensor, f_la: Tensor, ft: Tensor, fvat: Tensor, favt: Tensor,
             ftva: Tensor, params: PfmParams,
             drop: frozenset[str] | set[str] = frozenset()) -> Prediction:
    """Single-sample prediction; batched callers use :func:`mlp_logits` directly."""
    logits = mlp_logits(classifier_input(f_lv, f_la, ft, fvat, favt, ftva, drop), params)
    return Prediction.from_logits(logits.data)
