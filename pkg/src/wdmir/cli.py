"""Command-line entry point: ``wdmir {train,evaluate,predict,ablate,synth,wavelet}``.

Every :class:`RunConfig` field is a flag (``--d-model``, ``--disable-wfm``,
``--synth-n`` ...).  Precedence: built-in defaults, then ``--config FILE``
(JSON), then explicit flags.  ``WDMIR_OUTPUT_DIR`` overrides the output
directory.

Exit codes: 0 ok, 1 usage/config, 2 data/checkpoint, 3 numeric.
Errors are reported on stderr as one line: ``wdmir: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import wavelet
from .checkpoint import load_checkpoint
from .config import RunConfig
from .data import FeatureRecord, SynthSpec, read_features, write_dataset, write_features
from .errors import ConfigError, DataError, NumericError, ShapeError, TapeError
from .fusion import resample
from .numerics.tensor import Tensor
from .training import (
    STUDIES,
    ablate,
    ablation_csv,
    evaluate,
    format_ablation,
    format_report,
    load_data,
    output_dir,
    predict,
    resolve_synth_seed,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_OUT = "wdmir_out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here.
    def error(self, message):
        raise UsageError(message)


# -- flag generation ----------------------------------------------------------

def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _optional_type(default: Any, annotation: str):
    if "float" in annotation:
        return float
    if "int" in annotation:
        return int
    return type(default) if default is not None else str


def _add_field_flags(group, fields, prefix: str = "") -> None:
    for f in fields:
        default = f.default if f.default is not dataclasses.MISSING else None
        dest = prefix + f.name
        flag = _flag(dest)
        if isinstance(default, bool):
            group.add_argument(flag, dest=dest, action=argparse.BooleanOptionalAction,
                               default=argparse.SUPPRESS)
        else:
            group.add_argument(flag, dest=dest, type=_optional_type(default, str(f.type)),
                               default=argparse.SUPPRESS, metavar=f.name.upper())


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of RunConfig fields")
    run = p.add_argument_group("run config")
    _add_field_flags(run, [f for f in dataclasses.fields(RunConfig) if f.name != "synth"])
    synth = p.add_argument_group("synthetic data (used when no --dataset is given)")
    _add_field_flags(synth, dataclasses.fields(SynthSpec), prefix="synth_")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base: dict[str, Any] = {}
    if getattr(args, "config", None):
        base = RunConfig.from_file(args.config).to_dict()
    synth = dict(base.get("synth", {}))
    given = vars(args)
    for f in dataclasses.fields(SynthSpec):
        if "synth_" + f.name in given:
            synth[f.name] = given["synth_" + f.name]
    for f in dataclasses.fields(RunConfig):
        if f.name != "synth" and f.name in given:
            base[f.name] = given[f.name]
    base["synth"] = synth
    try:
        return RunConfig.from_dict(base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _out(cfg: RunConfig) -> Path:
    return output_dir(cfg) or Path(DEFAULT_OUT)


# -- commands -----------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = config_from_args(args)
    cfg = cfg.replace(out_dir=str(_out(cfg)))
    result = train(cfg, resume=args.resume)
    last = result.history[-1] if result.history else None
    if last:
        print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                       for k, v in sorted(last.items())))
    print(f"checkpoint = {output_dir(cfg) / 'last.ckpt'}")
    print(f"best = {output_dir(cfg) / 'best.ckpt'} (epoch {result.best.best_epoch})")
    return EXIT_OK


def _checkpoint_and_data(args):
    ck = load_checkpoint(args.checkpoint)
    if args.dataset:
        ck.config = ck.config.replace(dataset=args.dataset)
    return ck, load_data(ck.config)


def cmd_evaluate(args) -> int:
    ck, data = _checkpoint_and_data(args)
    out = Path(args.out) if args.out else output_dir(ck.config) or Path(args.checkpoint).parent
    report = evaluate(ck, args.split, data=data, out_dir=out)
    sys.stdout.write(format_report(report, data[0].class_names, args.split))
    print(f"report = {out / f'report_{args.split}.txt'}")
    print(f"confusion = {out / f'confusion_{args.split}.csv'}")
    return EXIT_OK


def _feature_rows(path: str, dim: int, what: str) -> np.ndarray:
    size = Path(path).stat().st_size if Path(path).exists() else 0
    if size == 0 or size % (4 * dim):
        raise DataError(f"{what} file {path}: {size} bytes is not a whole number of "
                        f"{dim}-wide float32 rows")
    return read_features(path, size // (4 * dim), dim, record_id=Path(path).name, modality=what)


def cmd_predict(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    if args.record:
        if args.dataset:
            ck.config = ck.config.replace(dataset=args.dataset)
        _, records = load_data(ck.config)
        matches = [r for r in records if r.id == args.record]
        if not matches:
            raise DataError(f"record {args.record} not found in dataset")
        record = matches[0]
    else:
        if not (args.text and args.video and args.audio):
            raise UsageError("give --record ID or all of --text, --video, --audio")
        m = ck.model
        record = FeatureRecord("input", -1,
                               _feature_rows(args.text, m.d_text, "text"),
                               _feature_rows(args.video, m.d_video, "video"),
                               _feature_rows(args.audio, m.d_audio, "audio"))
    pred = predict(ck, record)
    print(f"record = {record.id}")
    print(f"label = {pred.label}")
    print("probabilities = " + " ".join(repr(float(p)) for p in pred.probabilities))
    return EXIT_OK


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds expects comma-separated integers, got {text!r}") from None


def cmd_ablate(args) -> int:
    cfg = config_from_args(args)
    rows = args.rows.split(",") if args.rows else None
    if rows:
        unknown = [r for r in rows if r not in STUDIES[args.study]]
        if unknown:
            raise UsageError(f"unknown rows for study {args.study}: {', '.join(unknown)}")
    table = ablate(cfg, args.study, _seeds(args.seeds), args.split, rows)
    sys.stdout.write(format_ablation(table))
    out = _out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"ablation_{args.study}.csv").write_text(ablation_csv(table), encoding="utf-8")
    print(f"csv = {out / f'ablation_{args.study}.csv'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = config_from_args(args)
    spec = resolve_synth_seed(cfg)
    manifest, records = load_data(cfg.replace(dataset=None, synth=spec))
    out = Path(args.out) if args.out else _out(cfg)
    path = write_dataset(out, manifest, records)
    counts = {s: len(manifest.ids(s)) for s in ("train", "val", "test")}
    print(f"manifest = {path}")
    print(f"records = {len(records)} " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def _band_names(levels: int) -> list[str]:
    return ["low"] + [f"high{j}" for j in range(1, levels + 1)]


def cmd_wavelet(args) -> int:
    if args.reconstruct:
        return _wavelet_reconstruct(args)
    if not args.input or args.dim is None:
        raise UsageError("wavelet needs --input FILE and --dim D (or --reconstruct DIR)")
    x = _feature_rows(args.input, args.dim, "input")
    length = args.length or x.shape[0]
    if length % (2 ** args.levels):
        raise ShapeError(f"length {length} after resampling is not divisible by 2^{args.levels}")
    aligned = resample(Tensor(x), length).data
    pyr = wavelet.dwt_multilevel(Tensor(aligned.T), args.levels)
    out = Path(args.out or _out(RunConfig()))
    out.mkdir(parents=True, exist_ok=True)
    write_features(out / "input.f32", aligned)
    index = [f"dim = {args.dim}", f"length = {length}", f"levels = {args.levels}"]
    for name, band in zip(_band_names(args.levels), pyr.bands()):
        write_features(out / f"{name}.f32", band.data.T)
        energy = float(np.sum(band.data ** 2))
        index.append(f"band = {name}, {name}.f32, {band.shape[-1]}, {energy!r}")
    (out / "bands.txt").write_text("\n".join(index) + "\n", encoding="utf-8")
    print(f"bands = {out / 'bands.txt'}")
    return EXIT_OK


def read_band_index(directory: Path) -> tuple[dict[str, int], list[tuple[str, str, int]]]:
    try:
        lines = (directory / "bands.txt").read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise DataError(f"{directory / 'bands.txt'} not found") from None
    meta: dict[str, int] = {}
    bands = []
    for line in lines:
        key, _, value = (s.strip() for s in line.partition("="))
        if key == "band":
            name, fname, n, _energy = (s.strip() for s in value.split(","))
            bands.append((name, fname, int(n)))
        elif key:
            meta[key] = int(value)
    return meta, bands


def _wavelet_reconstruct(args) -> int:
    src = Path(args.reconstruct)
    meta, bands = read_band_index(src)
    dim, levels = meta["dim"], meta["levels"]
    arrays = [read_features(src / fname, n, dim, record_id=name, modality="band").T
              for name, fname, n in bands]
    pyr = wavelet.WaveletPyramid(Tensor(arrays[0]), [Tensor(a) for a in arrays[1:]],
                                 levels, meta["length"])
    x = wavelet.idwt_multilevel(pyr).data.T
    target = Path(args.output) if args.output else src / "reconstructed.f32"
    write_features(target, x)
    original = src / "input.f32"
    if original.exists():
        ref = read_features(original, meta["length"], dim, record_id="input", modality="input")
        print(f"max_abs_error = {float(np.max(np.abs(ref - x)))!r}")
    print(f"reconstructed = {target}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wdmir", description="Wavelet-driven multimodal intent recognition.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    t = sub.add_parser("train", help="train a model")
    _add_config_flags(t)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="metrics of a checkpoint on one split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--dataset", help="manifest to use instead of the checkpoint's")
    e.add_argument("--out", help="directory for report and confusion CSV")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("predict", help="classify one record")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--record", help="record id from the checkpoint's dataset")
    r.add_argument("--dataset")
    r.add_argument("--text")
    r.add_argument("--video")
    r.add_argument("--audio")
    r.set_defaults(func=cmd_predict)

    a = sub.add_parser("ablate", help="seeded ablation study")
    _add_config_flags(a)
    a.add_argument("--study", default="components", choices=sorted(STUDIES))
    a.add_argument("--seeds", default="0,1,2,3,4")
    a.add_argument("--rows", help="comma-separated subset of the study's rows")
    a.add_argument("--split", default="test", choices=("train", "val", "test"))
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("synth", help="write a synthetic dataset to disk")
    _add_config_flags(s)
    s.add_argument("--out", help="target directory")
    s.set_defaults(func=cmd_synth)

    w = sub.add_parser("wavelet", help="dump or reconstruct Haar bands of a feature file")
    w.add_argument("--input", help="headerless float32 feature file [time, dim]")
    w.add_argument("--dim", type=int)
    w.add_argument("--length", type=int, help="resample to this many steps first")
    w.add_argument("--levels", type=int, default=3)
    w.add_argument("--out", help="directory for band files")
    w.add_argument("--reconstruct", metavar="DIR", help="rebuild the signal from DIR/bands.txt")
    w.add_argument("--output", help="reconstructed file (default DIR/reconstructed.f32)")
    w.set_defaults(func=cmd_wavelet)
    return p


def _fail(kind: str, code: int, exc: BaseException) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"wdmir: {kind}: {message}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except ConfigError as exc:
        return _fail("config", EXIT_USAGE, exc)
    except (DataError, ShapeError, OSError) as exc:
        return _fail("data", EXIT_DATA, exc)
    except (NumericError, TapeError, FloatingPointError) as exc:
        return _fail("numeric", EXIT_NUMERIC, exc)


if __name__ == "__main__":
    sys.exit(main())
