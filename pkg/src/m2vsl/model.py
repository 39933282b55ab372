"""Encoders + contrastive objective + optional attention head, wired from a RunConfig."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import RunConfig
from .contrastive import BatchPack, ContrastiveConfig, loss_mc, loss_mmc
from .encoders import EncoderConfig, Params, encode_audio, encode_images, init_encoder_params
from .errors import UsageError
from .locseg import aggregate_scales, class_aware_maps, per_scale_maps
from .mmt import MMTConfig, MMTOutput, build_tokens, category_logits, init_mmt_params, mmt_stack
from .tensor import Value


@dataclass
class Forward:
    pyramid: list[Value]
    audio: Value
    mmt: MMTOutput | None = None
    logits: Value | None = None


def encoder_config(cfg: RunConfig, n_bins: int = 257) -> EncoderConfig:
    return EncoderConfig(image_hw=(cfg.image_size, cfg.image_size), patch=cfg.patch,
                         n_scales=cfg.n_scales, dim=cfg.dim, n_bins=n_bins)


def mmt_config(cfg: RunConfig) -> MMTConfig:
    return MMTConfig(dim=cfg.dim, n_categories=cfg.n_categories, depth=cfg.mmt_depth,
                     projections=cfg.mmt_projections, residual=cfg.mmt_residual)


class Model:
    def __init__(self, cfg: RunConfig, params: Params | None = None, n_bins: int = 257):
        self.cfg = cfg
        self.enc = encoder_config(cfg, n_bins)
        self.mmt_cfg = mmt_config(cfg)
        if params is None:
            rng = np.random.default_rng(cfg.seed)
            params = init_encoder_params(self.enc, rng)
            if cfg.mmt_enabled:
                params.update(init_mmt_params(self.mmt_cfg, rng))
        self.params = params

    @classmethod
    def from_arrays(cls, cfg: RunConfig, arrays: dict[str, np.ndarray]) -> "Model":
        params = {k: Value(np.asarray(v, dtype=np.float64), name=k) for k, v in arrays.items()}
        return cls(cfg, params, n_bins=params["audio.w1"].shape[0])

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def zero_grad(self) -> None:
        for v in self.params.values():
            v.zero_grad()

    def forward(self, images: np.ndarray, specs: np.ndarray,
                audio_keep: np.ndarray | None = None) -> Forward:
        pyramid = encode_images(images, self.params, self.enc)
        audio = encode_audio(specs, self.params, self.enc)
        fwd = Forward(pyramid, audio)
        if self.cfg.mmt_enabled:
            grid = pyramid[self.cfg.mmt_scale - 1]
            seq = build_tokens(grid, audio, self.params, audio_keep)
            fwd.mmt = mmt_stack(seq, grid.shape[1] * grid.shape[2], self.params, self.mmt_cfg)
            fwd.logits = category_logits(fwd.mmt, self.params)
        return fwd

    def loss(self, fwd: Forward, labels: np.ndarray | None = None) -> tuple[Value, dict[str, float]]:
        cfg = self.cfg
        ccfg = ContrastiveConfig(tau=cfg.tau, scales_used=cfg.scales_used)
        if cfg.mmc_enabled:
            contrast = loss_mmc(BatchPack(fwd.audio, fwd.pyramid), ccfg)
        else:
            contrast = loss_mc(fwd.audio, fwd.pyramid[-1], ccfg)
        parts = {"contrastive": contrast.item()}
        total = contrast
        if cfg.mmt_enabled and labels is not None:
            cls = T.bce_with_logits(fwd.logits, labels)
            parts["classification"] = cls.item()
            total = T.add(total, T.mul(cls, cfg.cls_weight))
        parts["total"] = total.item()
        return total, parts

    # -- inference helpers (numpy only)

    def heatmaps(self, fwd: Forward, hw: tuple[int, int]) -> np.ndarray:
        """Similarity heatmaps ``(B, H, W)`` averaged over the scales the loss trains."""
        scales = self.cfg.loss_scales()
        maps = per_scale_maps(fwd.audio.data, [fwd.pyramid[s - 1].data for s in scales])
        return np.stack([aggregate_scales([m[b] for m in maps], hw)
                         for b in range(fwd.audio.shape[0])])

    def category_heatmaps(self, fwd: Forward, hw: tuple[int, int]) -> np.ndarray:
        """Class-aware maps ``(B, C, H, W)``; requires the attention head.

        Category i's map compares every updated patch token with the classifier
        direction for i, so high values mean evidence *for* the category. The
        updated category tokens themselves are not used: the classifier can
        read them with either sign, so their cosine with a patch has no fixed
        polarity.
        """
        if fwd.mmt is None:
            raise UsageError("class-aware maps need mmt_enabled")
        grid = fwd.pyramid[self.cfg.mmt_scale - 1].shape[1:3]
        head = self.params["mmt.head_w"].data
        return np.stack([class_aware_maps(fwd.mmt.patches.data[b], head, grid, hw)
                         for b in range(fwd.audio.shape[0])])
