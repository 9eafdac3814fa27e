"""Training, evaluation, prediction and ablation runs."""

from __future__ import annotations

import copy
import json
import logging
import os
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, stream_rng, stream_seed
from .data import (
    DatasetManifest,
    FeatureRecord,
    load_dataset,
    select_split,
    synthesize_dataset,
)
from .errors import DataError
from .metrics import MetricsReport, compute_metrics
from .model import ModelConfig, ModelParams, init_params, model_loss, predict_records
from .numerics.optim import AdamState, adam_step, clip_grad_norm
from .numerics.tensor import Tape
from .progressive import Prediction

log = logging.getLogger(__name__)

OUTPUT_ENV = "WDMIR_OUTPUT_DIR"


def output_dir(cfg: RunConfig) -> Path | None:
    override = os.environ.get(OUTPUT_ENV)
    if override:
        return Path(override)
    return Path(cfg.out_dir) if cfg.out_dir else None


def resolve_synth_seed(cfg: RunConfig):
    if cfg.synth.seed is not None:
        return cfg.synth
    seed = int(stream_seed(cfg.seed, "synth").generate_state(1)[0])
    return cfg.synth.__class__(**{**cfg.synth.__dict__, "seed": seed})


def load_data(cfg: RunConfig) -> tuple[DatasetManifest, list[FeatureRecord]]:
    if cfg.dataset:
        return load_dataset(cfg.dataset)
    return synthesize_dataset(resolve_synth_seed(cfg))


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _rng_from_state(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


def _snapshot(ck: Checkpoint) -> Checkpoint:
    return copy.deepcopy(ck)


# -- evaluation ---------------------------------------------------------------

def predict_batched(records: Sequence[FeatureRecord], params: ModelParams, mcfg: ModelConfig,
                    batch_size: int) -> list[Prediction]:
    preds: list[Prediction] = []
    for start in range(0, len(records), batch_size):
        preds.extend(predict_records(records[start:start + batch_size], params, mcfg))
    return preds


def evaluate_records(records: Sequence[FeatureRecord], params: ModelParams, mcfg: ModelConfig,
                     batch_size: int = 8) -> MetricsReport:
    preds = predict_batched(records, params, mcfg, batch_size)
    return compute_metrics([p.label for p in preds], [r.label for r in records], mcfg.num_classes)


# -- training -----------------------------------------------------------------

@dataclass
class TrainResult:
    last: Checkpoint
    best: Checkpoint
    history: list[dict[str, Any]] = field(default_factory=list)


def _epoch_entry(epoch: int, loss: float, train: MetricsReport, val: MetricsReport | None) -> dict:
    entry = {"epoch": epoch, "loss": loss}
    entry.update({f"train_{k}": v for k, v in train.summary().items()})
    if val is not None:
        entry.update({f"val_{k}": v for k, v in val.summary().items()})
    return entry


def init_checkpoint(cfg: RunConfig, mcfg: ModelConfig) -> Checkpoint:
    params = init_params(mcfg, stream_rng(cfg.seed, "init"))
    adam = AdamState.for_params(params.named(), lr=cfg.lr, beta1=cfg.beta1,
                                beta2=cfg.beta2, eps=cfg.eps)
    rng = {"shuffle": _rng_state(stream_rng(cfg.seed, "shuffle")),
           "dropout": _rng_state(stream_rng(cfg.seed, "dropout"))}
    return Checkpoint(cfg, mcfg, params, adam, epoch=0, rng=rng)


def train(cfg: RunConfig, resume: str | os.PathLike | Checkpoint | None = None,
          data: tuple[DatasetManifest, list[FeatureRecord]] | None = None) -> TrainResult:
    """Mini-batch Adam on the train split.

    With ``resume`` the run continues from that checkpoint up to
    ``cfg.epochs`` total epochs; the trajectory matches an uninterrupted run.
    """
    manifest, records = data if data is not None else load_data(cfg)
    mcfg = cfg.model_config(manifest)
    train_set = select_split(manifest, records, "train")
    val_set = select_split(manifest, records, "val")
    if not train_set:
        raise DataError("train split is empty")

    if resume is None:
        ck = init_checkpoint(cfg, mcfg)
    else:
        ck = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume, mcfg)
        if ck.model != mcfg:
            raise DataError("resume checkpoint does not match the run's model config")
        ck.config = cfg
    best = _snapshot(ck)
    shuffle = _rng_from_state(ck.rng["shuffle"])
    drop_rng = _rng_from_state(ck.rng["dropout"]) if mcfg.dropout > 0 else None
    named = ck.params.named()
    history: list[dict[str, Any]] = []
    out = output_dir(cfg)
    log_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_file = open(out / "metrics.jsonl", "a" if resume is not None else "w", encoding="utf-8")

    try:
        for epoch in range(ck.epoch, cfg.epochs):
            order = shuffle.permutation(len(train_set))
            losses = []
            for start in range(0, len(order), cfg.train_batch_size):
                batch = [train_set[i] for i in order[start:start + cfg.train_batch_size]]
                ck.params.zero_grad()
                with Tape() as tape:
                    loss = model_loss(batch, ck.params, mcfg, drop_rng)
                tape.backward(loss)
                grads = {n: p.grad for n, p in named.items()}
                if cfg.clip_norm is not None:
                    clip_grad_norm(grads, cfg.clip_norm)
                adam_step(named, grads, ck.adam)
                ck.params.version += 1
                losses.append(loss.item() * len(batch))
            ck.epoch = epoch + 1
            ck.rng["shuffle"] = _rng_state(shuffle)
            if drop_rng is not None:
                ck.rng["dropout"] = _rng_state(drop_rng)

            train_rep = evaluate_records(train_set, ck.params, mcfg, cfg.eval_batch_size)
            val_rep = evaluate_records(val_set, ck.params, mcfg, cfg.eval_batch_size) if val_set else None
            entry = _epoch_entry(ck.epoch, sum(losses) / len(train_set), train_rep, val_rep)
            history.append(entry)
            log.info("epoch %d loss %.4f train_acc %.4f%s", ck.epoch, entry["loss"], entry["train_acc"],
                     f" val_acc {entry['val_acc']:.4f}" if val_rep else "")
            if log_file is not None:
                log_file.write(json.dumps(entry, sort_keys=True) + "\n")

            score = val_rep.accuracy if val_rep else train_rep.accuracy
            if score > ck.best_val_acc:
                ck.best_val_acc, ck.best_epoch, ck.stale_epochs = score, ck.epoch, 0
                best = _snapshot(ck)
            else:
                ck.stale_epochs += 1
            if cfg.patience is not None and ck.stale_epochs >= cfg.patience:
                log.info("early stop at epoch %d (best %d)", ck.epoch, ck.best_epoch)
                break
    finally:
        if log_file is not None:
            log_file.close()

    if out is not None:
        save_checkpoint(ck, out / "last.ckpt")
        save_checkpoint(best, out / "best.ckpt")
    return TrainResult(ck, best, history)


# -- evaluate / predict -------------------------------------------------------

def evaluate(ck: Checkpoint | str | os.PathLike, split: str = "test",
             data: tuple[DatasetManifest, list[FeatureRecord]] | None = None,
             out_dir: str | os.PathLike | None = None) -> MetricsReport:
    """Metrics of a checkpoint on one split; optionally writes report + confusion CSV."""
    if not isinstance(ck, Checkpoint):
        ck = load_checkpoint(ck)
    manifest, records = data if data is not None else load_data(ck.config)
    mcfg = ck.config.model_config(manifest)
    if mcfg != ck.model:
        raise DataError("dataset/config does not match the checkpoint's model config")
    subset = select_split(manifest, records, split)
    report = evaluate_records(subset, ck.params, ck.model, ck.config.eval_batch_size)
    if out_dir is not None:
        write_report(report, manifest.class_names, Path(out_dir), split)
    return report


def format_report(report: MetricsReport, class_names: Sequence[str], split: str) -> str:
    lines = [f"split = {split}",
             f"samples = {report.total}",
             f"accuracy = {report.accuracy!r}",
             f"weighted_f1 = {report.weighted_f1!r}",
             f"weighted_precision = {report.weighted_precision!r}",
             f"recall = {report.recall!r}"]
    for i, name in enumerate(class_names):
        lines += [f"class.{i}.name = {name}",
                  f"class.{i}.precision = {float(report.precision[i])!r}",
                  f"class.{i}.recall = {float(report.per_class_recall[i])!r}",
                  f"class.{i}.f1 = {float(report.f1[i])!r}",
                  f"class.{i}.support = {int(report.support[i])}"]
    return "\n".join(lines) + "\n"


def format_confusion_csv(report: MetricsReport, class_names: Sequence[str]) -> str:
    rows = ["true\\pred," + ",".join(class_names)]
    for name, row in zip(class_names, report.confusion):
        rows.append(name + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(rows) + "\n"


def write_report(report: MetricsReport, class_names: Sequence[str], out: Path, split: str) -> tuple[Path, Path]:
    out.mkdir(parents=True, exist_ok=True)
    rp = out / f"report_{split}.txt"
    cp = out / f"confusion_{split}.csv"
    rp.write_text(format_report(report, class_names, split), encoding="utf-8")
    cp.write_text(format_confusion_csv(report, class_names), encoding="utf-8")
    return rp, cp


def predict(ck: Checkpoint, record: FeatureRecord) -> Prediction:
    m = ck.model
    for key, dim in (("text", m.d_text), ("video", m.d_video), ("audio", m.d_audio)):
        arr = record.modality(key)
        if arr.ndim != 2 or arr.shape[1] != dim:
            raise DataError(f"record {record.id}: {key} width {arr.shape[-1]} does not match "
                            f"checkpoint width {dim}")
    return predict_records([record], ck.params, m)[0]


# -- ablations ----------------------------------------------------------------

COMPONENT_ROWS = {
    "no_flv_fla": {"drop_flv_fla": True},
    "no_fvat_favt": {"drop_fvat_favt": True},
    "no_ftva": {"drop_ftva": True},
    "no_wfm": {"disable_wfm": True},
    "full": {},
}
MODALITY_ROWS = {
    "all": {},
    "no_text": {"drop_modality": "text"},
    "no_video": {"drop_modality": "video"},
    "no_audio": {"drop_modality": "audio"},
}
STUDIES = {"components": COMPONENT_ROWS, "modality": MODALITY_ROWS}


@dataclass
class AblationRow:
    name: str
    changes: dict[str, Any]
    reports: list[MetricsReport]
    seeds: list[int]

    def median(self, key: str = "acc") -> float:
        return statistics.median(r.summary()[key] for r in self.reports)


def ablate(cfg: RunConfig, study: str = "components", seeds: Sequence[int] | None = None,
           split: str = "test", rows: Sequence[str] | None = None) -> list[AblationRow]:
    """Independent seeded training run per (row, seed); test-split metrics of the last epoch."""
    table = STUDIES[study]
    seeds = [cfg.seed] if seeds is None else list(seeds)
    names = list(table) if rows is None else list(rows)
    data = load_data(cfg)
    out = []
    for name in names:
        changes = table[name]
        reports = []
        for seed in seeds:
            run_cfg = cfg.replace(seed=seed, out_dir=None, **changes)
            result = train(run_cfg, data=data)
            reports.append(evaluate(result.last, split, data=data))
            log.info("ablation %s seed %d acc %.4f", name, seed, reports[-1].accuracy)
        out.append(AblationRow(name, changes, reports, seeds))
    return out


def format_ablation(rows: Sequence[AblationRow]) -> str:
    head = f"{'row':<14}{'acc':>9}{'wf1':>9}{'wp':>9}{'r':>9}  per-seed acc"
    lines = [head, "-" * len(head)]
    for row in rows:
        per_seed = " ".join(f"{r.accuracy:.4f}" for r in row.reports)
        lines.append(f"{row.name:<14}" + "".join(f"{row.median(k):>9.4f}" for k in ("acc", "wf1", "wp", "r"))
                     + f"  {per_seed}")
    return "\n".join(lines) + "\n"


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    lines = ["row,seed,acc,wf1,wp,r"]
    for row in rows:
        for seed, rep in zip(row.seeds, row.reports):
            s = rep.summary()
            lines.append(f"{row.name},{seed},{s['acc']!r},{s['wf1']!r},{s['wp']!r},{s['r']!r}")
    return "\n".join(lines) + "\n"
