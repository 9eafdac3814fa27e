"""Acceptance criteria 1-8.

Each test prints exactly one ``[PASS]``/``[FAIL]`` line at the criterion's
stated tolerance; the lines are repeated in pytest's terminal summary.
Criteria 4-6 train real models and take several minutes in total.
"""

import statistics
import time
from contextlib import contextmanager

import numpy as np

from wdmir import corep, fusion, progressive, wavelet
from wdmir.config import RunConfig
from wdmir.checkpoint import to_bytes
from wdmir.data import SynthSpec
from wdmir.metrics import compute_metrics
from wdmir.model import ModelConfig, forward, init_params, model_loss
from wdmir.numerics import nn
from wdmir.numerics import tensor as T
from wdmir.numerics.gradcheck import analytic_grads, check_gradients, numerical_grad, relative_error
from wdmir.numerics.tensor import Tensor
from wdmir.training import ablate, load_data, train

from conftest import ACCEPTANCE_LINES, TINY, tiny_records
from test_metrics import brute_force, random_case


def report(tag: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# -- 1 ------------------------------------------------------------------------

def test_c1_wavelet_reconstruction():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_abs = worst_energy = 0.0
    for i in range(1000):
        d = (1, 4, 32)[i % 3]
        length = (8, 16, 32, 64)[(i // 3) % 4]
        x = rng.normal(size=(d, length)) * rng.uniform(0.1, 10)
        pyr = wavelet.dwt_multilevel(Tensor(x), 3)
        back = wavelet.idwt_multilevel(pyr).data
        worst_abs = max(worst_abs, float(np.max(np.abs(back - x))))
        energy = sum(float(np.sum(b.data ** 2)) for b in pyr.bands())
        worst_energy = max(worst_energy, abs(energy - float(np.sum(x ** 2))) / float(np.sum(x ** 2)))
    elapsed = time.perf_counter() - start
    ok = worst_abs <= 1e-9 and worst_energy <= 1e-9 and elapsed < 10
    report("C1 wavelet", ok, f"max_abs={worst_abs:.2e} (<=1e-9) rel_energy={worst_energy:.2e} (<=1e-9) "
                             f"time={elapsed:.1f}s (<10s)")


# -- 2 ------------------------------------------------------------------------

def _primitive_cases(rng):
    """(name, loss closure, leaves) for every tape primitive and fused layer."""
    def leaf(shape, positive=False):
        x = rng.normal(size=shape)
        return Tensor(np.abs(x) + 0.2 if positive else x, requires_grad=True)

    weights = {}

    def proj(out):
        # one fixed random projection per output shape, drawn on first use
        if out.shape not in weights:
            weights[out.shape] = Tensor(rng.normal(size=out.shape))
        return (out * weights[out.shape]).sum()

    a, b, c = leaf((2, 3, 4)), leaf((3, 4)), leaf((3, 4), positive=True)
    m, r = leaf((4, 2)), leaf((3, 4))
    r.data = np.where(np.abs(r.data) < 0.05, 0.5, r.data)
    labels = rng.integers(4, size=3)
    lin = nn.init_linear(rng, 4, 3)
    conv = nn.init_conv(rng, 3, 2)
    lstm = nn.init_lstm(rng, 4, 3)
    bil = nn.init_bilstm(rng, 4, 2)
    sig = leaf((2, 16))
    return [
        ("add", lambda: proj(T.add(a, b)), [a, b]),
        ("sub", lambda: proj(T.sub(b, a)), [a, b]),
        ("mul", lambda: proj(T.mul(a, b)), [a, b]),
        ("div", lambda: proj(T.div(b, c)), [b, c]),
        ("neg", lambda: proj(T.neg(b)), [b]),
        ("exp", lambda: proj(T.exp(b)), [b]),
        ("log", lambda: proj(T.log(c)), [c]),
        ("tanh", lambda: proj(T.tanh(a)), [a]),
        ("sigmoid", lambda: proj(T.sigmoid(a)), [a]),
        ("relu", lambda: proj(T.relu(r)), [r]),
        ("matmul", lambda: proj(T.matmul(a, m)), [a, m]),
        ("transpose", lambda: proj(T.transpose(a, (2, 0, 1))), [a]),
        ("swap_last", lambda: proj(T.swap_last(a)), [a]),
        ("reshape", lambda: proj(T.reshape(a, (6, 4))), [a]),
        ("getitem", lambda: proj(a[:, 1:, ::2]), [a]),
        ("flip", lambda: proj(T.flip(a, -2)), [a]),
        ("concat", lambda: proj(T.concat([b, c], axis=0)), [b, c]),
        ("split", lambda: proj(T.split(a, [1, 3], axis=-1)[1]), [a]),
        ("sum", lambda: proj(T.tsum(a, axis=1)), [a]),
        ("mean", lambda: proj(T.mean(a, axis=-1)), [a]),
        ("softmax", lambda: proj(T.softmax(a, axis=-1)), [a]),
        ("log_softmax", lambda: proj(T.log_softmax(b)), [b]),
        ("cross_entropy", lambda: T.cross_entropy(b, labels), [b]),
        ("linear", lambda: proj(nn.linear(a, lin)), [a, lin.weight, lin.bias]),
        ("conv1d", lambda: proj(nn.conv1d_same(T.swap_last(nn.linear(a, lin)), conv)), [a, conv.kernel]),
        ("lstm", lambda: proj(nn.lstm_forward(a, lstm)[0]), [a, lstm.w_ih, lstm.w_hh, lstm.bias]),
        ("bilstm", lambda: proj(nn.bilstm_forward(b, bil)), [b, bil.backward.w_hh]),
        ("attention", lambda: proj(nn.attention(b, a[0], a[1] @ m)), [a, b, m]),
        ("dwt", lambda: proj(wavelet.dwt_multilevel(sig, 3).low), [sig]),
        ("idwt", lambda: proj(wavelet.idwt_multilevel(wavelet.dwt_multilevel(sig, 3))), [sig]),
    ]


def test_c2_gradient_integrity():
    start = time.perf_counter()
    tol, step, coords = 1e-4, 1e-5, 4
    worst_prim, worst_op = 0.0, ""
    ops = set()
    for seed in range(25):
        for name, fn, leaves in _primitive_cases(np.random.default_rng(seed)):
            err = check_gradients(fn, leaves, step)
            ops.add(name)
            if err > worst_prim:
                worst_prim, worst_op = err, name

    cfg = ModelConfig(**TINY)
    worst_model, worst_param = 0.0, ""
    for seed in range(25):
        rng = np.random.default_rng(seed)
        params = init_params(cfg, rng)
        recs = tiny_records(rng)
        fn = lambda: model_loss(recs, params, cfg)
        named = params.named()
        grads = analytic_grads(fn, list(named.values()))
        for (name, p), g in zip(named.items(), grads):
            # every parameter tensor, a random sample of its coordinates
            idx = rng.choice(p.size, size=min(coords, p.size), replace=False)
            num = numerical_grad(fn, p, step, indices=idx)
            err = relative_error(g.reshape(-1)[idx], num.reshape(-1)[idx])
            if err > worst_model:
                worst_model, worst_param = err, name
    elapsed = time.perf_counter() - start
    ok = worst_prim < tol and worst_model < tol and elapsed < 120
    report("C2 gradients", ok,
           f"{len(ops)} primitives worst={worst_prim:.1e} ({worst_op}); full loss L=8 d=4 h=4 C=3 "
           f"worst={worst_model:.1e} ({worst_param}); tol 1e-4, 25 seeds, time={elapsed:.0f}s (<120s)")


# -- 3 ------------------------------------------------------------------------

def test_c3_metrics_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for i in range(1000):
        c = (2, 12, 20)[i % 3]
        preds, truths = random_case(rng, c)
        rep = compute_metrics(preds, truths, c)
        got = (rep.accuracy, rep.weighted_f1, rep.weighted_precision, rep.recall)
        worst = max(worst, max(abs(a - b) for a, b in zip(got, brute_force(preds, truths, c))))
    ex = compute_metrics([0, 1, 1, 1], [0, 0, 1, 1], 2)
    example_ok = (ex.accuracy == 0.75 and abs(ex.weighted_f1 - 11 / 15) < 1e-12
                  and abs(ex.weighted_precision - 5 / 6) < 1e-12 and ex.recall == 0.75)
    report("C3 metrics", worst <= 1e-12 and example_ok,
           f"1000 cases max_diff={worst:.1e} (<=1e-12); worked example ACC={ex.accuracy} "
           f"WF1={ex.weighted_f1:.4f} WP={ex.weighted_precision:.4f} R={ex.recall}")


# -- 4 ------------------------------------------------------------------------

def test_c4_trainability():
    start = time.perf_counter()
    cfg = RunConfig(synth=SynthSpec(seed=7, n=64, num_classes=4), epochs=200)
    result = train(cfg)
    accs = [h["train_acc"] for h in result.history]
    first = next((i + 1 for i, a in enumerate(accs) if a >= 0.95), None)
    rerun = train(cfg.replace(epochs=10))
    deterministic = rerun.history == result.history[:10]
    elapsed = time.perf_counter() - start
    ok = first is not None and deterministic and elapsed < 300
    report("C4 trainability", ok,
           f"train_acc>=0.95 first at epoch {first} (<=200), final {accs[-1]:.3f}; "
           f"rerun identical={deterministic}; time={elapsed:.0f}s (<300s)")


# -- 5 ------------------------------------------------------------------------

# Frequency-coded synthetic set with half the text suppressed; model and
# optimiser at their defaults.
ABLATION_CFG = RunConfig(synth=SynthSpec(n=160, text_suppress=0.5))
SEEDS = [0, 1, 2, 3, 4]


def test_c5_ablation_direction():
    start = time.perf_counter()
    rows = {r.name: r for r in ablate(ABLATION_CFG, "components", SEEDS, rows=["full", "no_wfm"])}
    full, no_wfm = rows["full"].median("acc"), rows["no_wfm"].median("acc")
    elapsed = time.perf_counter() - start
    per_seed = lambda r: "/".join(f"{x.accuracy:.3f}" for x in r.reports)
    report("C5 ablation", full > no_wfm and elapsed < 1800,
           f"median test acc full={full:.4f} > no_wfm={no_wfm:.4f} "
           f"(full {per_seed(rows['full'])}; no_wfm {per_seed(rows['no_wfm'])}); time={elapsed:.0f}s (<1800s)")


# -- 6 ------------------------------------------------------------------------

# Text-dominant: text never suppressed, weak frequency signature.
MODALITY_CFG = RunConfig(synth=SynthSpec(n=160, text_suppress=0.0, freq_signal=0.5))


def test_c6_modality_direction():
    rows = {r.name: r.median("acc") for r in ablate(MODALITY_CFG, "modality", SEEDS)}
    ok = rows["no_text"] < rows["no_video"] and rows["no_text"] < rows["no_audio"]
    report("C6 modality", ok,
           "median test acc " + " ".join(f"{k}={v:.4f}" for k, v in rows.items())
           + " (no_text lowest)")


# -- 7 ------------------------------------------------------------------------

def test_c7_determinism_and_resume(tmp_path):
    cfg = RunConfig(epochs=8)
    a = train(cfg.replace(out_dir=str(tmp_path / "a")))
    b = train(cfg.replace(out_dir=str(tmp_path / "b")))
    same_files = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
                     for f in ("metrics.jsonl", "last.ckpt", "best.ckpt"))
    head = train(cfg.replace(epochs=3, out_dir=str(tmp_path / "h")))
    tail = train(cfg, resume=tmp_path / "h" / "last.ckpt")
    resumed = head.history + tail.history == a.history and to_bytes(tail.last) == to_bytes(a.last)
    report("C7 determinism", same_files and a.history == b.history and resumed,
           f"repeat runs bit-identical={same_files}; resume after 3 epochs, "
           f"{len(tail.history)} further epochs identical={resumed}")


# -- 8 ------------------------------------------------------------------------

@contextmanager
def _record_softmax(monkeypatch, seen):
    site = {"name": None}

    def recorder(x, axis=-1):
        out = T.softmax(x, axis=axis)
        seen.setdefault(site["name"], []).append(out.data.sum(axis=axis))
        return out

    def tagged(name, fn):
        def wrapper(*args, **kwargs):
            prev, site["name"] = site["name"], name
            try:
                return fn(*args, **kwargs)
            finally:
                site["name"] = prev
        return wrapper

    monkeypatch.setattr(nn, "softmax", recorder)
    monkeypatch.setattr(fusion, "softmax", recorder)
    monkeypatch.setattr(fusion, "freq_interact", tagged("wfm_interact", fusion.freq_interact))
    monkeypatch.setattr(corep, "attention", tagged("crm_attention", corep.attention))
    monkeypatch.setattr(progressive, "attention", tagged("pfm_self_attention", progressive.attention))
    yield


def test_c8_simplex(monkeypatch):
    seen: dict = {}
    worst = 0.0
    with _record_softmax(monkeypatch, seen):
        for case in range(500):
            rng = np.random.default_rng(case)
            cfg = ModelConfig(**{**TINY, "stack_mode": ("time", "modality")[case % 2],
                                 "crm_projections": case % 3 != 0})
            params = init_params(cfg, rng)
            scale = rng.uniform(0.1, 5.0)
            for p in params.named().values():
                p.data = p.data * scale
            lt, lv, la = rng.integers(1, 12, size=3)
            logits = forward(params, cfg, Tensor(rng.normal(size=(lt, 3)) * scale),
                             Tensor(rng.normal(size=(lv, 2)) * scale), Tensor(rng.normal(size=(la, 3)) * scale))
            probs = progressive.Prediction.from_logits(logits.data).probabilities
            seen.setdefault("classifier", []).append(np.array([probs.sum()]))
    for sums in seen.values():
        worst = max(worst, max(float(np.max(np.abs(s - 1.0))) for s in sums))
    sites = sorted(k for k in seen if k)
    ok = worst <= 1e-6 and sites == ["classifier", "crm_attention", "pfm_self_attention", "wfm_interact"]
    report("C8 simplex", ok, f"500 cases, sites {','.join(sites)}; max |sum-1|={worst:.1e} (<=1e-6)")
