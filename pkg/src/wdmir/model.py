"""Full network assembly: fusion -> collaborative representation -> progressive fusion."""

from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .corep import CrmParams, crm_forward, init_crm, project_text
from .errors import ConfigError
from .fusion import WfmParams, align_sequences, init_wfm, wfm_from_aligned
from .numerics.tensor import Tensor, cross_entropy
from .progressive import (
    STACK_MODES,
    SLOTS,
    PfmParams,
    Prediction,
    classifier_input,
    init_pfm,
    lstm_summarize,
    mlp_logits,
    self_attention_enhance,
    stack_features,
)

MODALITIES = ("none", "text", "video", "audio")


@dataclass(frozen=True)
class ModelConfig:
    d_text: int
    d_video: int
    d_audio: int
    num_classes: int
    length: int = 64
    d_model: int = 32
    hidden: int = 16
    levels: int = 3
    crm_projections: bool = True
    stack_mode: str = "time"
    dropout: float = 0.0
    disable_wfm: bool = False
    drop_slots: frozenset = field(default_factory=frozenset)
    drop_modality: str = "none"

    def __post_init__(self):
        for name in ("d_text", "d_video", "d_audio", "length", "d_model", "hidden", "levels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.length % 8 or self.length % (2 ** self.levels):
            raise ConfigError(f"length {self.length} must be a multiple of 8 and of 2^{self.levels}")
        if self.d_model % 2:
            raise ConfigError(f"d_model must be even, got {self.d_model}")
        if self.stack_mode not in STACK_MODES:
            raise ConfigError(f"stack_mode must be one of {STACK_MODES}, got {self.stack_mode!r}")
        if self.drop_modality not in MODALITIES:
            raise ConfigError(f"drop_modality must be one of {MODALITIES}, got {self.drop_modality!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        object.__setattr__(self, "drop_slots", frozenset(self.drop_slots))
        bad = self.drop_slots - set(SLOTS)
        if bad:
            raise ConfigError(f"unknown drop slots {sorted(bad)}")


@dataclass
class ModelParams:
    wfm: WfmParams
    crm: CrmParams
    pfm: PfmParams
    version: int = 0

    def named(self) -> dict[str, Tensor]:
        return dict(_walk(self.wfm, "wfm") + _walk(self.crm, "crm") + _walk(self.pfm, "pfm"))

    def zero_grad(self) -> None:
        for p in self.named().values():
            p.zero_grad()


def _walk(obj, prefix: str) -> list[tuple[str, Tensor]]:
    out = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        name = f"{prefix}.{f.name}"
        if isinstance(value, Tensor):
            out.append((name, value))
        elif dataclasses.is_dataclass(value):
            out.extend(_walk(value, name))
    return out


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    return ModelParams(
        wfm=init_wfm(rng, cfg.d_video, cfg.d_audio, cfg.d_model),
        crm=init_crm(rng, cfg.d_text, cfg.d_model, cfg.crm_projections),
        pfm=init_pfm(rng, cfg.d_video, cfg.d_audio, cfg.d_model, cfg.hidden, cfg.num_classes),
    )


def forward(params: ModelParams, cfg: ModelConfig, text: Tensor, video: Tensor,
            audio: Tensor, rng: np.random.Generator | None = None) -> Tensor:
    """Logits ``[..., C]`` for time-major inputs with optional leading batch dims.

    ``rng`` enables dropout (training); pass None for deterministic inference.
    """
    if cfg.drop_modality != "none":
        zeroed = {"text": text, "video": video, "audio": audio}
        src = zeroed[cfg.drop_modality]
        zeroed[cfg.drop_modality] = Tensor._wrap(np.zeros(src.shape))
        text, video, audio = zeroed["text"], zeroed["video"], zeroed["audio"]

    pair = align_sequences(video, audio, params.wfm, cfg.length)
    if cfg.disable_wfm:
        f_va, f_av = pair.V, pair.A
    else:
        f_va, f_av = wfm_from_aligned(pair, params.wfm, cfg.levels)

    f_t = project_text(text, params.crm)
    f_vat, f_avt, f_tva = crm_forward(f_t, f_va, f_av, params.crm)

    f_m = stack_features(f_t, f_vat, f_avt, cfg.stack_mode)
    ft2, fvat2, favt2 = self_attention_enhance(f_m, params.pfm.self_attn, cfg.stack_mode)
    f_lv, f_la = lstm_summarize(video, audio, params.pfm)

    feats = classifier_input(f_lv, f_la, ft2, fvat2, favt2, f_tva, cfg.drop_slots)
    return mlp_logits(feats, params.pfm, cfg.dropout, rng)


def _shape_groups(records: Sequence) -> Iterator[list[int]]:
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        groups[(r.text.shape, r.video.shape, r.audio.shape)].append(i)
    for key in sorted(groups, key=lambda k: groups[k][0]):
        yield groups[key]


def batch_logits(records: Sequence, params: ModelParams, cfg: ModelConfig,
                 rng: np.random.Generator | None = None) -> list[tuple[list[int], Tensor]]:
    """Run records in equal-shape groups; returns ``(indices, logits [B, C])`` pairs."""
    out = []
    for idx in _shape_groups(records):
        text = Tensor._wrap(np.stack([records[i].text for i in idx]))
        video = Tensor._wrap(np.stack([records[i].video for i in idx]))
        audio = Tensor._wrap(np.stack([records[i].audio for i in idx]))
        out.append((idx, forward(params, cfg, text, video, audio, rng)))
    return out


def model_loss(records: Sequence, params: ModelParams, cfg: ModelConfig,
               rng: np.random.Generator | None = None) -> Tensor:
    """Mean cross-entropy of the full pipeline over ``records``."""
    if not records:
        raise ConfigError("model_loss needs at least one record")
    total = None
    for idx, logits in batch_logits(records, params, cfg, rng):
        labels = [records[i].label for i in idx]
        part = cross_entropy(logits, labels) * (len(idx) / len(records))
        total = part if total is None else total + part
    return total


def predict_records(records: Sequence, params: ModelParams, cfg: ModelConfig) -> list[Prediction]:
    preds: list[Prediction | None] = [None] * len(records)
    for idx, logits in batch_logits(records, params, cfg):
        for row, i in enumerate(idx):
            preds[i] = Prediction.from_logits(logits.data[row])
    return preds
