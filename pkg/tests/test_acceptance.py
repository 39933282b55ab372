"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

The lines are echoed in the pytest terminal summary. Run this file directly
(``python3 tests/test_acceptance.py``) to see them inline. Budget: about
12 minutes on one core, dominated by the three-seed ablation.
"""
import math
import shutil
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from m2vsl import metrics as M
from m2vsl import train as TR
from m2vsl.audio import Waveform, stft_log_spectrogram
from m2vsl.config import RunConfig
from m2vsl.contrastive import BatchPack, ContrastiveConfig, loss_a2v, loss_mc, loss_mmc
from m2vsl.gradcheck import gradcheck
from m2vsl.io import write_report
from m2vsl.model import Model
from m2vsl.synthdata import gen_audio
from m2vsl.tensor import Value

pytestmark = pytest.mark.slow


def test_gradient_suite(record):
    t0 = time.perf_counter()
    report = gradcheck()
    secs = time.perf_counter() - t0
    worst = max(s.max_rel_err for s in report.suites)
    ok = report.passed and worst <= 1e-4 and secs < 60
    record("gradient suite", ok, f"max rel err {worst:.2e} over {len(report.suites)} suites, {secs:.1f}s")
    assert ok, report.lines()


def test_analytic_loss_identities(record):
    cfg = ContrastiveConfig(tau=0.03)
    rng = np.random.default_rng(0)
    worst = 0.0
    for b in (2, 4, 16):
        for s in (1, 2, 3):
            a, v = rng.standard_normal(8), rng.standard_normal(8)
            pack = BatchPack(Value(np.tile(a, (b, 1))),
                             [Value(np.broadcast_to(v, (b, 4 >> k, 4 >> k, 8)).copy()) for k in range(s)])
            worst = max(worst, abs(loss_a2v(pack, cfg).item() - s * math.log(b)),
                        abs(loss_mmc(pack, cfg).item() - 2 * s * math.log(b)))
    exact = True
    for seed in range(20):
        r = np.random.default_rng(seed)
        audio, vis = Value(r.standard_normal((5, 8))), Value(r.standard_normal((5, 3, 3, 8)))
        exact &= loss_a2v(BatchPack(audio, [vis]), cfg).item() == loss_mc(audio, vis, cfg).item()
    ok = worst <= 1e-9 and exact
    record("analytic loss identities", ok,
           f"max |L - S ln B| dev {worst:.1e}; single-scale reduction exact on 20 batches: {exact}")
    assert ok


def test_metric_oracle_equivalence(record):
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        h, w = (int(x) for x in rng.integers(1, 9, size=2))
        k = int(rng.integers(1, 4))
        cats = [int(c) for c in rng.choice(4, size=k, replace=False)]
        gts = []
        for _ in cats:
            g = (rng.random((h, w)) < 0.4).astype(np.uint8)
            g.flat[rng.integers(g.size)] = 1
            gts.append(g)
        pred = (rng.random((h, w)) < 0.5).astype(np.uint8)
        score = np.round(rng.random((h, w)) * 4) / 4
        cmaps = {c: np.round(rng.random((h, w)) * 4) / 4 for c in range(4)}
        smaps = [rng.random((h, w)) for _ in cats]
        rec = M.EvalRecord(list(zip(cats, gts)), cmaps, smaps)
        orec = ([(c, g.tolist()) for c, g in zip(cats, gts)], {c: m.tolist() for c, m in cmaps.items()},
                [m.tolist() for m in smaps])
        ious = [M.iou(pred, g) for g in gts]
        o_ious = [oracles.iou(pred.tolist(), g.tolist()) for g in gts]
        cls = M.class_ious([rec])
        pairs = [
            (M.ap_pixelwise(score, gts[0]), oracles.ap(score.tolist(), gts[0].tolist())),
            (M.cap([rec]), oracles.cap([orec])),
            (M.piap([rec]), oracles.piap([orec])),
            (M.success_rate(ious, 0.3), oracles.success_rate(o_ious, 0.3)),
            (M.ciou([rec], 0.3), oracles.success_rate(oracles.class_ious([orec]), 0.3)),
            (M.auc(cls), oracles.auc(oracles.class_ious([orec]))),
            (M.miou([pred] * k, gts), oracles.miou([pred.tolist()] * k, [g.tolist() for g in gts])),
            (M.f_score(pred, gts[0]), oracles.f_score(pred.tolist(), gts[0].tolist())),
        ]
        worst = max(worst, *(abs(a - b) for a, b in pairs))
    ok = worst <= 1e-12
    record("metric oracle equivalence", ok, f"8 metrics x 100 cases (K<=3), max deviation {worst:.1e}")
    assert ok


def test_single_source_localization(desk_run, record):
    cfg, res = desk_run
    rep = TR.evaluate(res.checkpoint, "test", cfg)
    untrained = TR.evaluate_model(Model(cfg), "test")
    ok = res.seconds < 300 and rep.iou >= 0.8 and rep.miou >= 0.5 and untrained.miou < 0.3
    record("single-source desk run", ok,
           f"train {res.seconds:.0f}s, IoU@0.3 {rep.iou:.3f}, mIoU {rep.miou:.3f}, "
           f"untrained mIoU {untrained.miou:.3f}")
    assert ok


def test_ablation_direction(tmp_path, record):
    """Arms with the attention head localize with their fused map; the others with similarity."""
    rows = TR.ablate_seeds(RunConfig(out_dir=str(tmp_path), mask_source="auto"), [0, 1, 2], "duet")
    m = {r["arm"]: r["miou"] for r in rows}
    ok = m["mmc+mmt"] >= m["mmc"] + 0.02 and m["mmc"] >= m["baseline"]
    record("ablation direction", ok, "duet mIoU over seeds 0-2 (mask_source=auto): " +
           ", ".join(f"{k} {v:.3f}" for k, v in m.items()))
    assert ok


def test_batch_sweep(tmp_path, record):
    cfg = RunConfig(out_dir=str(tmp_path), epochs=2)
    rows = TR.sweep_batch(cfg, [2, 4, 8, 16])
    points = (tmp_path / "sweep_batch.tsv").read_text().strip().splitlines()[1:]
    finite = all(math.isfinite(r["final_loss"]) for r in rows)
    ok = len(rows) == 4 and len(points) == 4 and finite
    record("batch sweep", ok, f"{len(points)} points, final losses " +
           ", ".join(f"B={r['batch_size']}:{r['final_loss']:.2f}" for r in rows))
    assert ok


def _artifacts(cfg):
    TR._cached_split.cache_clear()
    res = TR.train(cfg)
    rep = TR.evaluate(res.checkpoint, "duet", cfg)
    out = Path(cfg.out_dir)
    write_report(out / "report_duet.json", TR.report_dict(rep))
    TR.localize(res.model, "duet", [0, 1, 2], out / "loc")
    blobs = {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
    shutil.rmtree(out)
    return blobs


def test_determinism(tmp_path, record):
    cfg = RunConfig(out_dir=str(tmp_path / "run"), epochs=3, n_train=128, n_duet=32)
    first, second = _artifacts(cfg), _artifacts(cfg)
    same = first.keys() == second.keys() and all(first[k] == second[k] for k in first)
    kinds = sorted({k.rsplit(".", 1)[-1] for k in first})
    ok = same and {"m2ts", "manifest", "json", "pgm"} <= set(kinds)
    record("determinism", ok, f"{len(first)} files byte-identical across two runs ({', '.join(kinds)})")
    assert ok


def test_spectrogram_contract(record):
    audio = gen_audio([1], seed=0)
    shape = stft_log_spectrogram(Waveform(audio.waveform, audio.sample_rate)).values.shape
    ok = shape == (257, 300)
    record("spectrogram contract", ok, f"3 s at {audio.sample_rate} Hz -> {shape[0]}x{shape[1]}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
