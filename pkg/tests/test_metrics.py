import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from m2vsl import metrics as M
from m2vsl.errors import DimensionError, UsageError


def _case(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(1, 9, size=2)
    gt = (rng.random((h, w)) < rng.uniform(0.1, 0.7)).astype(np.uint8)
    gt.flat[rng.integers(gt.size)] = 1
    pred = (rng.random((h, w)) < 0.5).astype(np.uint8)
    # quantised scores so ties occur
    score = np.round(rng.random((h, w)) * rng.integers(2, 6)) / 5.0
    return gt, pred, score


def test_iou_examples():
    assert M.iou(np.ones((2, 2)), np.ones((2, 2))) == 1.0
    assert M.iou(np.ones((2, 2)), np.array([[1, 1], [0, 0]])) == 0.5
    assert M.iou(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0
    with pytest.raises(DimensionError):
        M.iou(np.ones((2, 2)), np.ones((2, 3)))


def test_success_rate_and_auc_examples():
    assert M.success_rate([0.2, 0.4, 0.5], 0.3) == pytest.approx(2 / 3)
    assert M.success_rate([0.0, 0.1], 0.0) == 1.0
    assert M.auc([1.0, 1.0]) == 1.0
    assert M.auc([0.0]) == 0.0
    assert M.auc([0.5]) == pytest.approx(10 / 19)
    for bad in (lambda: M.success_rate([], 0.3), lambda: M.auc([]), lambda: M.success_rate([1], 2)):
        with pytest.raises(UsageError):
            bad()


def test_f_score_examples():
    gt = np.array([[1, 1], [0, 0]])
    assert M.f_score(gt, gt) == 1.0
    assert M.f_score(np.ones((2, 2)), gt) == pytest.approx(0.65 / 1.15)
    assert M.f_score(np.zeros((2, 2)), gt) == 0.0


def test_ap_examples():
    gt = np.array([[1, 0], [0, 0]])
    assert M.ap_pixelwise(gt.astype(float), gt) == 1.0
    assert M.ap_pixelwise(1.0 - gt, gt) == pytest.approx(gt.mean())
    assert M.ap_pixelwise(np.full((2, 2), 0.3), gt) == pytest.approx(0.25)
    with pytest.raises(UsageError):
        M.ap_pixelwise(np.ones((2, 2)), np.zeros((2, 2)))


def test_miou_examples():
    one, zero = np.ones((2, 2)), np.zeros((2, 2))
    assert M.miou([one, one], [one, one]) == 1.0
    assert M.miou([one, zero], [one, one]) == 0.5
    with pytest.raises(UsageError):
        M.miou([], [])


@pytest.mark.parametrize("seed", range(100))
def test_single_image_metrics_equal_loop_oracles(seed):
    gt, pred, score = _case(seed)
    g, p, s = gt.tolist(), pred.tolist(), score.tolist()
    assert abs(M.iou(pred, gt) - oracles.iou(p, g)) <= 1e-12
    assert abs(M.f_score(pred, gt) - oracles.f_score(p, g)) <= 1e-12
    assert abs(M.ap_pixelwise(score, gt) - oracles.ap(s, g)) <= 1e-12


def _records(seed, k_max=3):
    rng = np.random.default_rng(10_000 + seed)
    recs, orecs = [], []
    h, w = rng.integers(2, 9, size=2)
    for _ in range(rng.integers(1, 4)):
        k = int(rng.integers(1, k_max + 1))
        cats = [int(c) for c in rng.choice(5, size=k, replace=False)]
        sources = []
        for c in cats:
            m = (rng.random((h, w)) < 0.4).astype(np.uint8)
            m.flat[rng.integers(m.size)] = 1
            sources.append((c, m))
        cmaps = {c: np.round(rng.random((h, w)) * 4) / 4 for c in range(5)}
        smaps = [rng.random((h, w)) for _ in range(k)]
        recs.append(M.EvalRecord(sources, cmaps, smaps))
        orecs.append(([(c, m.tolist()) for c, m in sources], {c: v.tolist() for c, v in cmaps.items()},
                      [v.tolist() for v in smaps]))
    return recs, orecs


@pytest.mark.parametrize("seed", range(100))
def test_multi_source_metrics_equal_loop_oracles(seed):
    recs, orecs = _records(seed)
    assert abs(M.cap(recs) - oracles.cap(orecs)) <= 1e-12
    assert abs(M.piap(recs) - oracles.piap(orecs)) <= 1e-12
    cious = M.class_ious(recs)
    ref = oracles.class_ious(orecs)
    assert np.max(np.abs(np.array(cious) - ref)) <= 1e-12
    assert abs(M.ciou(recs, 0.3) - oracles.success_rate(ref, 0.3)) <= 1e-12
    assert abs(M.auc(cious) - oracles.auc(ref)) <= 1e-12
    gts = [r.sources[0][1] for r in recs]
    preds = [(m >= 0.5).astype(np.uint8) for m in (r.source_maps[0] for r in recs)]
    assert abs(M.miou(preds, gts) - oracles.miou([p.tolist() for p in preds], [g.tolist() for g in gts])) <= 1e-12


def test_piap_reductions_and_invariance(rng):
    gts = [(rng.random((4, 4)) < 0.5).astype(np.uint8) for _ in range(2)]
    for g in gts:
        g[0, 0] = 1
    maps = [g.astype(float) for g in gts]
    rec = M.EvalRecord([(0, gts[0])], source_maps=[maps[1]])
    assert M.piap([rec]) == M.ap_pixelwise(maps[1], gts[0])
    swapped = M.EvalRecord([(0, gts[0]), (1, gts[1])], source_maps=maps[::-1])
    assert M.piap([swapped]) == 1.0
    with pytest.raises(UsageError):
        M.piap([M.EvalRecord([(0, gts[0])], source_maps=maps)])
    big = [(c, gts[0]) for c in range(7)]
    with pytest.raises(UsageError):
        M.piap([M.EvalRecord(big, source_maps=[maps[0]] * 7)])


def test_cap_needs_a_map_for_every_present_category(rng):
    g = np.ones((2, 2), dtype=np.uint8)
    with pytest.raises(UsageError):
        M.cap([M.EvalRecord([(2, g)], category_maps={0: np.ones((2, 2))})])


@given(st.integers(0, 10_000))
def test_piap_dominates_identity_assignment(seed):
    recs, _ = _records(seed)
    ident = np.mean([np.mean([M.ap_pixelwise(m, g) for m, (_, g) in
                              zip(r.source_maps, sorted(r.category_gt().items()))]) for r in recs])
    assert M.piap(recs) >= ident - 1e-15


@given(st.integers(0, 10_000))
def test_ap_invariant_to_monotone_transform(seed):
    gt, _, score = _case(seed)
    assert M.ap_pixelwise(np.exp(3 * score) - 7, gt) == pytest.approx(M.ap_pixelwise(score, gt), abs=1e-15)


@given(st.integers(0, 10_000))
def test_metrics_lie_in_unit_interval(seed):
    gt, pred, score = _case(seed)
    for v in (M.iou(pred, gt), M.f_score(pred, gt), M.ap_pixelwise(score, gt)):
        assert 0.0 <= v <= 1.0
