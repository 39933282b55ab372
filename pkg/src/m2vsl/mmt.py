"""Token fusion and the scaled dot-product attention stack over patch + category tokens."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .encoders import Params, uniform_init
from .errors import DimensionError, UsageError
from .tensor import Value


@dataclass(frozen=True)
class MMTConfig:
    dim: int = 64
    n_categories: int = 4
    depth: int = 3
    projections: bool = False  # learned Q/K/V per layer
    residual: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise UsageError("depth must be >= 1")
        if self.n_categories < 1:
            raise UsageError("need at least one category")


@dataclass
class MMTOutput:
    patches: Value  # (B, P, D)
    categories: Value  # (B, C, D)


def init_mmt_params(cfg: MMTConfig, rng: np.random.Generator) -> Params:
    d, c = cfg.dim, cfg.n_categories
    p: Params = {
        "mmt.w_v": Value(uniform_init(rng, (d, d), d), name="mmt.w_v"),
        "mmt.w_a": Value(uniform_init(rng, (d, d), d), name="mmt.w_a"),
        "mmt.category_tokens": Value(uniform_init(rng, (c, d), d), name="mmt.category_tokens"),
        "mmt.head_w": Value(uniform_init(rng, (c, d), d), name="mmt.head_w"),
        "mmt.head_b": Value(uniform_init(rng, (c,), d), name="mmt.head_b"),
    }
    if cfg.projections:
        for layer in range(cfg.depth):
            for k in ("q", "k", "v"):
                name = f"mmt.l{layer}.w{k}"
                p[name] = Value(uniform_init(rng, (d, d), d), name=name)
    return p


def build_tokens(patch_map: Value, audio: Value, p: Params,
                 audio_keep: np.ndarray | None = None) -> Value:
    """``(B, h, w, D)`` map + ``(B, D)`` audio -> ``(B, h*w + C, D)`` sequence, patches first.

    ``audio_keep`` optionally scales the audio term per sample (0 drops it).
    """
    if patch_map.ndim != 4 or audio.ndim != 2:
        raise DimensionError("expected (B, h, w, D) patches and (B, D) audio")
    b, h, w, d = patch_map.shape
    table = p["mmt.category_tokens"]
    if audio.shape != (b, d) or table.shape[1] != d or p["mmt.w_v"].shape != (d, d):
        raise DimensionError(f"width mismatch: patches {patch_map.shape}, audio {audio.shape}, "
                             f"categories {table.shape}")
    v = T.matmul(T.reshape(patch_map, (b, h * w, d)), p["mmt.w_v"])
    a = T.reshape(T.matmul(audio, p["mmt.w_a"]), (b, 1, d))
    if audio_keep is not None:
        a = T.mul(a, np.asarray(audio_keep, dtype=np.float64).reshape(b, 1, 1))
    fused = T.add(v, a)
    cats = T.add(Value(np.zeros((b,) + table.shape), op="const"), table)
    return T.concat([fused, cats], axis=1)


def attention(x: Value, seq: Value) -> Value:
    """One query token ``(D,)`` attending over ``(N, D)``: softmax(x seq^T / sqrt(D)) seq."""
    if x.ndim != 1 or seq.ndim != 2 or x.shape[0] != seq.shape[1]:
        raise DimensionError(f"attention width mismatch: {x.shape} vs {seq.shape}")
    d = x.shape[0]
    scores = T.mul(T.matmul(T.reshape(x, (1, d)), T.transpose(seq)), 1.0 / np.sqrt(d))
    return T.reshape(T.matmul(T.softmax(scores, -1), seq), (d,))


def attention_weights(seq: Value) -> Value:
    d = seq.shape[-1]
    scores = T.mul(T.matmul(seq, T.transpose(seq, (0, 2, 1))), 1.0 / np.sqrt(d))
    return T.softmax(scores, -1)


def mmt_layer(seq: Value, p: Params | None = None, cfg: MMTConfig | None = None,
              layer: int = 0) -> Value:
    """Every token attends over the whole pre-update sequence ``(B, N, D)``."""
    cfg = cfg or MMTConfig(dim=seq.shape[-1])
    if cfg.projections:
        q = T.matmul(seq, p[f"mmt.l{layer}.wq"])
        k = T.matmul(seq, p[f"mmt.l{layer}.wk"])
        v = T.matmul(seq, p[f"mmt.l{layer}.wv"])
    else:
        q = k = v = seq
    d = seq.shape[-1]
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(d))
    out = T.matmul(T.softmax(scores, -1), v)
    return T.add(out, seq) if cfg.residual else out


def mmt_stack(seq: Value, n_patches: int, p: Params | None = None,
              cfg: MMTConfig | None = None, depth: int | None = None) -> MMTOutput:
    cfg = cfg or MMTConfig(dim=seq.shape[-1])
    depth = cfg.depth if depth is None else depth
    if depth < 1:
        raise UsageError("depth must be >= 1")
    for layer in range(depth):
        seq = mmt_layer(seq, p, cfg, layer)
    n_cat = seq.shape[1] - n_patches
    patches, cats = T.split(seq, [n_patches, n_cat], axis=1)
    return MMTOutput(patches, cats)


def category_logits(out: MMTOutput, p: Params) -> Value:
    """Per-category score ``<c_i, w_i> + b_i``, shape ``(B, C)``."""
    return T.add(T.sum(T.mul(out.categories, p["mmt.head_w"]), axis=-1), p["mmt.head_b"])
