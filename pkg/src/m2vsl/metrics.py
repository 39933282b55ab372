"""Localization and segmentation metrics.

All functions take plain numpy arrays. Masks are any integer/bool array where
nonzero means foreground.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, UsageError
from .locseg import threshold_mask

AUC_GRID = np.arange(1, 20) / 20.0
F_BETA2 = 0.3
PIAP_MAX_K = 6


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise DimensionError(f"shape mismatch {np.shape(a)} vs {np.shape(b)}")


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    _check_pair(pred, gt)
    p, g = np.asarray(pred) > 0, np.asarray(gt) > 0
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def success_rate(ious: Sequence[float], tau: float) -> float:
    if len(ious) == 0:
        raise UsageError("success_rate of an empty list")
    if not 0.0 <= tau <= 1.0:
        raise UsageError("tau must lie in [0, 1]")
    return float(np.mean(np.asarray(ious) >= tau))


def auc(ious: Sequence[float], grid: Sequence[float] = AUC_GRID) -> float:
    if len(ious) == 0:
        raise UsageError("auc of an empty list")
    return float(np.mean([success_rate(ious, t) for t in grid]))


def miou(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> float:
    if len(preds) == 0 or len(preds) != len(gts):
        raise UsageError("miou needs aligned, non-empty lists")
    return float(np.mean([iou(p, g) for p, g in zip(preds, gts)]))


def f_score(pred: np.ndarray, gt: np.ndarray, beta2: float = F_BETA2) -> float:
    _check_pair(pred, gt)
    p, g = np.asarray(pred) > 0, np.asarray(gt) > 0
    tp = np.logical_and(p, g).sum()
    if p.sum() == 0:
        return 0.0
    precision = tp / p.sum()
    recall = tp / g.sum() if g.sum() else 0.0
    denom = beta2 * precision + recall
    if denom == 0:
        return 0.0
    return float((1 + beta2) * precision * recall / denom)


def ap_pixelwise(score: np.ndarray, gt: np.ndarray) -> float:
    """Non-interpolated AP of the pixel ranking, tied scores entering together."""
    _check_pair(score, gt)
    s = np.asarray(score, dtype=np.float64).ravel()
    g = (np.asarray(gt) > 0).ravel()
    n_pos = g.sum()
    if n_pos == 0:
        raise UsageError("AP is undefined for an empty ground-truth mask")
    order = np.argsort(-s, kind="stable")
    s, g = s[order], g[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(g)[ends]
    n = ends + 1
    precision = tp / n
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class EvalRecord:
    """One evaluated image.

    ``sources`` holds ``(category id, gt mask)`` pairs. ``category_maps`` maps a
    category id to its class-aware heatmap; ``source_maps`` are the K
    unlabelled per-source heatmaps used by PIAP.
    """

    sources: list[tuple[int, np.ndarray]]
    category_maps: dict[int, np.ndarray] = field(default_factory=dict)
    source_maps: list[np.ndarray] = field(default_factory=list)

    def category_gt(self) -> dict[int, np.ndarray]:
        out: dict[int, np.ndarray] = {}
        for cat, mask in self.sources:
            m = np.asarray(mask) > 0
            out[cat] = np.logical_or(out[cat], m) if cat in out else m
        return out


def _category_pairs(records: Sequence[EvalRecord]):
    if len(records) == 0:
        raise UsageError("no records")
    for r in records:
        for cat, gt in sorted(r.category_gt().items()):
            if cat not in r.category_maps:
                raise UsageError(f"no class-aware map for present category {cat}")
            yield r.category_maps[cat], gt


def cap(records: Sequence[EvalRecord]) -> float:
    return float(np.mean([ap_pixelwise(m, g) for m, g in _category_pairs(records)]))


def class_ious(records: Sequence[EvalRecord], method: str = "minmax") -> list[float]:
    return [iou(threshold_mask(m, method), g) for m, g in _category_pairs(records)]


def ciou(records: Sequence[EvalRecord], tau: float, method: str = "minmax") -> float:
    return success_rate(class_ious(records, method), tau)


def best_assignment_ap(maps: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> float:
    k = len(maps)
    if k != len(gts) or k == 0:
        raise UsageError(f"{k} predicted maps for {len(gts)} sources")
    if k > PIAP_MAX_K:
        raise UsageError(f"exhaustive assignment limited to K <= {PIAP_MAX_K}")
    table = np.array([[ap_pixelwise(m, g) for g in gts] for m in maps])
    return max(float(np.mean(table[np.arange(k), list(perm)]))
               for perm in itertools.permutations(range(k)))


def piap(records: Sequence[EvalRecord]) -> float:
    if len(records) == 0:
        raise UsageError("no records")
    vals = []
    for r in records:
        gts = [g for _, g in sorted(r.category_gt().items())]
        vals.append(best_assignment_ap(r.source_maps, gts))
    return float(np.mean(vals))


@dataclass
class MetricsReport:
    ap: float | None = None
    cap: float | None = None
    piap: float | None = None
    iou: float | None = None
    ciou: float | None = None
    auc: float | None = None
    miou: float | None = None
    f_score: float | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def values(self) -> dict[str, float | None]:
        d = self.to_dict()
        d.pop("config")
        return d
