"""Max-pooled cosine similarity and the multiple-instance contrastive losses."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import DimensionError, UsageError
from .tensor import Value


@dataclass(frozen=True)
class ContrastiveConfig:
    tau: float = 0.03
    scales_used: tuple[int, ...] | None = None  # 1-based; None means every scale

    def __post_init__(self):
        if not self.tau > 0:
            raise UsageError("tau must be positive")


@dataclass
class BatchPack:
    """Audio embeddings ``(B, D)`` with their visual pyramids (each ``(B, H^s, W^s, D)``)."""

    audio: Value
    visual: list[Value]

    def __post_init__(self):
        if self.audio.ndim != 2:
            raise DimensionError("audio must be (B, D)")
        b, d = self.audio.shape
        if b < 2:
            raise UsageError("contrastive losses need a batch of at least 2")
        for v in self.visual:
            if v.ndim != 4 or v.shape[0] != b or v.shape[-1] != d:
                raise DimensionError(f"visual map {v.shape} does not match audio {self.audio.shape}")

    @property
    def size(self) -> int:
        return self.audio.shape[0]


def cos_sim_map(a: Value, vs: Value) -> Value:
    """Cosine similarity of one audio vector ``(D,)`` against every location of ``(H, W, D)``."""
    if vs.shape[-1] != a.shape[-1]:
        raise DimensionError(f"width mismatch {a.shape} vs {vs.shape}")
    an = T.l2_normalize(a, -1)
    vn = T.l2_normalize(vs, -1)
    return T.sum(T.mul(vn, an), axis=-1)


def sim_max(a: Value, vs: Value) -> Value:
    m, _ = T.max_over_locations(cos_sim_map(a, vs))
    return m


def similarity_matrix(audio: Value, vs: Value) -> Value:
    """``S[i, k] = max over locations of cos(A_i, V_k)`` for a batch at one scale."""
    b, h, w, d = vs.shape
    an = T.l2_normalize(audio, -1)
    vn = T.reshape(T.l2_normalize(vs, -1), (b * h * w, d))
    full = T.reshape(T.matmul(an, T.transpose(vn)), (audio.shape[0], b, h * w))
    s, _ = T.max_along(full, 2)
    return s


def _resolve_scales(n: int, cfg: ContrastiveConfig) -> Sequence[int]:
    scales = range(1, n + 1) if cfg.scales_used is None else cfg.scales_used
    for s in scales:
        if not 1 <= s <= n:
            raise UsageError(f"scale {s} not in 1..{n}")
    return list(scales)


def _nce(sim: Value, tau: float, axis: int) -> Value:
    """Mean over anchors of -log softmax at the diagonal; ``axis`` is the one normalised over."""
    logits = T.mul(sim, 1.0 / tau)
    diag = T.take(logits, (np.arange(sim.shape[0]), np.arange(sim.shape[0])))
    return T.mean(T.sub(T.logsumexp(logits, axis=axis), diag))


def loss_mc(audio: Value, vs: Value, cfg: ContrastiveConfig) -> Value:
    """Single-scale baseline objective (audio anchors, visual negatives)."""
    BatchPack(audio, [vs])
    return _nce(similarity_matrix(audio, vs), cfg.tau, axis=1)


def loss_a2v(batch: BatchPack, cfg: ContrastiveConfig) -> Value:
    terms = [_nce(similarity_matrix(batch.audio, batch.visual[s - 1]), cfg.tau, axis=1)
             for s in _resolve_scales(len(batch.visual), cfg)]
    return _total(terms)


def loss_v2a(batch: BatchPack, cfg: ContrastiveConfig) -> Value:
    terms = [_nce(similarity_matrix(batch.audio, batch.visual[s - 1]), cfg.tau, axis=0)
             for s in _resolve_scales(len(batch.visual), cfg)]
    return _total(terms)


def loss_mmc(batch: BatchPack, cfg: ContrastiveConfig) -> Value:
    """Symmetric objective: both directions summed, similarity matrices shared."""
    sims = [similarity_matrix(batch.audio, batch.visual[s - 1])
            for s in _resolve_scales(len(batch.visual), cfg)]
    a2v = _total([_nce(sim, cfg.tau, axis=1) for sim in sims])
    v2a = _total([_nce(sim, cfg.tau, axis=0) for sim in sims])
    return T.add(a2v, v2a)


def _total(terms: list[Value]) -> Value:
    if not terms:
        raise UsageError("no scales selected")
    out = terms[0]
    for t in terms[1:]:
        out = T.add(out, t)
    return out
