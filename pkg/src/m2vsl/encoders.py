"""Small pool-project-tanh towers standing in for the image and audio backbones.

Feature maps are kept channels-last, ``(B, H, W, D)``, so that per-location
vectors are contiguous.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Value

Params = dict[str, Value]


@dataclass(frozen=True)
class EncoderConfig:
    image_hw: tuple[int, int] = (32, 32)
    channels: int = 3
    patch: int = 4
    n_scales: int = 3
    dim: int = 64
    n_bins: int = 257
    normalize_visual: bool = True
    normalize_audio: bool = True

    def grid(self, s: int, hw: tuple[int, int] | None = None) -> tuple[int, int]:
        """Spatial extent of scale ``s`` (1-based, 1 = finest)."""
        h, w = hw or self.image_hw
        f = self.patch * 2 ** (s - 1)
        return h // f, w // f


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator) -> Params:
    p: Params = {}
    d_in = cfg.patch * cfg.patch * cfg.channels
    for s in range(1, cfg.n_scales + 1):
        fan = d_in if s == 1 else cfg.dim
        p[f"visual.w{s}"] = Value(uniform_init(rng, (fan, cfg.dim), fan), name=f"visual.w{s}")
        p[f"visual.b{s}"] = Value(uniform_init(rng, (cfg.dim,), fan), name=f"visual.b{s}")
    p["audio.w1"] = Value(uniform_init(rng, (cfg.n_bins, cfg.dim), cfg.n_bins), name="audio.w1")
    p["audio.b1"] = Value(uniform_init(rng, (cfg.dim,), cfg.n_bins), name="audio.b1")
    p["audio.w2"] = Value(uniform_init(rng, (cfg.dim, cfg.dim), cfg.dim), name="audio.w2")
    p["audio.b2"] = Value(uniform_init(rng, (cfg.dim,), cfg.dim), name="audio.b2")
    return p


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    b, h, w, c = images.shape
    x = images.reshape(b, h // patch, patch, w // patch, patch, c)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(b, h // patch, w // patch, patch * patch * c)


def avg_pool2(x: Value) -> Value:
    b, h, w, d = x.shape
    return T.mean(T.reshape(x, (b, h // 2, 2, w // 2, 2, d)), axis=(2, 4))


def encode_images(images: np.ndarray, p: Params, cfg: EncoderConfig) -> list[Value]:
    """Batch of ``(B, H, W, C)`` images -> list of S feature maps ``(B, H^s, W^s, D)``."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[-1] != cfg.channels:
        raise DimensionError(f"expected (B, H, W, {cfg.channels}) images, got {images.shape}")
    step = cfg.patch * 2 ** (cfg.n_scales - 1)
    if images.shape[1] % step or images.shape[2] % step:
        raise DimensionError(f"image {images.shape[1:3]} not divisible by {step}")
    hidden = Value(patchify(images, cfg.patch), op="input")
    pyramid = []
    for s in range(1, cfg.n_scales + 1):
        if s > 1:
            hidden = avg_pool2(hidden)
        hidden = T.tanh(T.add(T.matmul(hidden, p[f"visual.w{s}"]), p[f"visual.b{s}"]))
        pyramid.append(T.l2_normalize(hidden, -1) if cfg.normalize_visual else hidden)
    return pyramid


def encode_image(img: np.ndarray, p: Params, cfg: EncoderConfig) -> list[Value]:
    """Single ``(H, W, C)`` image; maps keep a leading batch axis of 1."""
    return encode_images(np.asarray(img)[None], p, cfg)


def encode_audio(specs: np.ndarray, p: Params, cfg: EncoderConfig) -> Value:
    """Batch of ``(B, bins, frames)`` log-spectrograms -> ``(B, D)`` embeddings."""
    specs = np.asarray(specs, dtype=np.float64)
    if specs.ndim == 2:
        specs = specs[None]
    if specs.shape[1] != cfg.n_bins:
        raise DimensionError(f"expected {cfg.n_bins} frequency bins, got {specs.shape[1]}")
    # Projection is linear, so pooling frames first gives the same result at a fraction of the cost.
    pooled = Value(specs.mean(axis=2), op="input")
    h = T.tanh(T.add(T.matmul(pooled, p["audio.w1"]), p["audio.b1"]))
    a = T.add(T.matmul(h, p["audio.w2"]), p["audio.b2"])
    return T.l2_normalize(a, -1) if cfg.normalize_audio else a
