import hashlib
from pathlib import Path

import numpy as np
import pytest

from wdmir import wavelet
from wdmir.data import (
    SynthSpec,
    load_dataset,
    parse_manifest,
    select_split,
    synthesize_dataset,
    write_dataset,
    write_features,
)
from wdmir.errors import DataError
from wdmir.numerics.tensor import Tensor

HEADER = "classes = a, b\ndims.text = 2\ndims.video = 3\ndims.audio = 1\nrecords:\n"


def _write_one(tmp_path: Path, label="1", video_width=3, rid="r1") -> Path:
    feats = tmp_path / "f"
    feats.mkdir(exist_ok=True)
    write_features(feats / "t.f32", np.ones((4, 2)))
    write_features(feats / "v.f32", np.arange(5 * video_width, dtype=float).reshape(5, video_width))
    write_features(feats / "a.f32", np.zeros((8, 1)))
    path = tmp_path / "m.txt"
    path.write_text(HEADER + f"{rid}, train, {label}, f/t.f32, 4, f/v.f32, 5, f/a.f32, 8\n")
    return path


def test_single_record(tmp_path):
    manifest, records = load_dataset(_write_one(tmp_path))
    assert len(records) == 1 and manifest.class_names == ["a", "b"]
    r = records[0]
    assert (r.label, r.text.shape, r.video.shape, r.audio.shape) == (1, (4, 2), (5, 3), (8, 1))
    np.testing.assert_array_equal(r.video, np.arange(15.0).reshape(5, 3))


def test_empty_manifest():
    with pytest.raises(DataError, match="no records"):
        parse_manifest(HEADER)


def test_width_mismatch_names_record(tmp_path):
    with pytest.raises(DataError, match=r"record r1: video features have width 4, expected 3"):
        load_dataset(_write_one(tmp_path, video_width=4))


def test_label_out_of_range(tmp_path):
    with pytest.raises(DataError, match="record r1: label 2 outside"):
        load_dataset(_write_one(tmp_path, label="2"))


def test_missing_file(tmp_path):
    path = _write_one(tmp_path)
    (tmp_path / "f" / "a.f32").unlink()
    with pytest.raises(DataError, match="record r1: audio feature file"):
        load_dataset(path)


def test_missing_header_key():
    with pytest.raises(DataError, match="dims.audio"):
        parse_manifest("classes = a, b\ndims.text = 2\ndims.video = 3\nrecords:\n"
                       "r1, train, 0, t, 1, v, 1, a, 1\n")


def test_duplicate_and_bad_split():
    row = "r1, train, 0, t, 1, v, 1, a, 1\n"
    with pytest.raises(DataError, match="duplicate"):
        parse_manifest(HEADER + row + row)
    with pytest.raises(DataError, match="unknown split"):
        parse_manifest(HEADER + row.replace("train", "dev"))


def test_synth_rejects_n_below_classes():
    with pytest.raises(DataError, match="smaller than the number of classes"):
        synthesize_dataset(SynthSpec(n=3, num_classes=4))


def _digest(directory: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(directory.rglob("*")):
        if p.is_file():
            h.update(p.name.encode() + p.read_bytes())
    return h.hexdigest()


def test_synth_is_byte_deterministic(tmp_path):
    spec = SynthSpec(seed=11, n=24)
    write_dataset(tmp_path / "a", *synthesize_dataset(spec))
    write_dataset(tmp_path / "b", *synthesize_dataset(spec))
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    other = SynthSpec(seed=12, n=24)
    write_dataset(tmp_path / "c", *synthesize_dataset(other))
    assert _digest(tmp_path / "a") != _digest(tmp_path / "c")


def test_written_dataset_loads_back(tmp_path):
    manifest, records = synthesize_dataset(SynthSpec(seed=3, n=16))
    m2, r2 = load_dataset(write_dataset(tmp_path, manifest, records))
    assert m2.split_of == manifest.split_of
    for a, b in zip(sorted(records, key=lambda r: r.id), r2):
        assert a.id == b.id and a.label == b.label
        np.testing.assert_allclose(a.video, b.video, rtol=1e-7, atol=1e-6)


@pytest.mark.parametrize("coding", ["direction", "phase"])
def test_splits_are_stratified(coding):
    manifest, records = synthesize_dataset(SynthSpec(n=40, num_classes=6, group_coding=coding))
    for split in ("train", "val", "test"):
        assert {r.label for r in select_split(manifest, records, split)} == set(range(6))


def test_noiseless_text_is_separable():
    manifest, records = synthesize_dataset(SynthSpec(n=40, noise=0.0, text_suppress=0.0))
    dirs = {}
    for r in records:
        dirs.setdefault(r.label, r.text[0])
    centers = np.array([dirs[c] for c in range(4)])
    hits = [int(np.argmin(np.linalg.norm(centers - r.text.mean(0), axis=1)) == r.label) for r in records]
    assert np.mean(hits) == 1.0


def test_phase_coding_relative_sign():
    _, records = synthesize_dataset(SynthSpec(n=24, num_classes=6, noise=0.0, group_coding="phase"))
    for r in records:
        v, a = r.video[:, 0], r.audio[:, 0]
        agree = np.sign(v[0]) == np.sign(a[0])
        assert agree == (r.label // 3 == 0)


def ridge_probe(xtr, ytr, xte, yte, c, lam=1e-2):
    mu, sd = xtr.mean(0), xtr.std(0) + 1e-12
    a = np.c_[(xtr - mu) / sd, np.ones(len(xtr))]
    w = np.linalg.solve(a.T @ a + lam * np.eye(a.shape[1]), a.T @ np.eye(c)[ytr])
    b = np.c_[(xte - mu) / sd, np.ones(len(xte))]
    return float(np.mean((b @ w).argmax(1) == yte))


def _band_energy(x):
    pyr = wavelet.dwt_multilevel(Tensor(x.T), 3)
    return np.concatenate([(h.data ** 2).sum(-1) for h in pyr.highs])


def test_text_probe_below_band_energy_probe():
    manifest, records = synthesize_dataset(SynthSpec(seed=0, n=400, text_suppress=0.5))
    train = [r for r in records if manifest.split_of[r.id] != "test"]
    test = select_split(manifest, records, "test")
    y = lambda rs: np.array([r.label for r in rs])
    text = lambda rs: np.array([r.text.mean(0) for r in rs])
    energy = lambda rs: np.array([np.r_[_band_energy(r.video), _band_energy(r.audio)] for r in rs])
    text_acc = ridge_probe(text(train), y(train), text(test), y(test), 4)
    energy_acc = ridge_probe(energy(train), y(train), energy(test), y(test), 4)
    # frozen from the reference run of this probe
    assert text_acc == pytest.approx(0.575)
    assert energy_acc == pytest.approx(0.9875)
    assert text_acc < energy_acc
