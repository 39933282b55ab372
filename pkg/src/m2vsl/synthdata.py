"""Seeded synthetic audio-visual scenes with exact ground truth.

Each category owns one saturated colour and one pure tone (200 * (i + 1) Hz).
Sounding objects are filled ellipses on a low-saturation textured background.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import CLIP_SECONDS, SAMPLE_RATE, Waveform, stft_log_spectrogram
from .errors import DimensionError, GenerationError, UsageError
from .io import mask_to_u8, save_tensor, write_pgm

MIN_AREA = 0.02
MAX_AREA = 0.30
MAX_ATTEMPTS = 100
SPLIT_BASE = {"train": 0, "val": 1_000_000, "test": 2_000_000, "duet": 3_000_000}
SPLIT_STRIDE = 10_000_000


@dataclass
class SyntheticScene:
    image: np.ndarray  # H x W x 3 in [0, 1]
    sources: list[tuple[int, np.ndarray]]
    seed: int


@dataclass
class SyntheticAudio:
    waveform: np.ndarray
    categories: list[int]
    sample_rate: int = SAMPLE_RATE


def category_color(cat: int, n_categories: int) -> np.ndarray:
    r, g, b = colorsys.hsv_to_rgb(cat / n_categories, 0.9, 0.9)
    return np.array([r, g, b])


def category_frequency(cat: int) -> float:
    return 200.0 * (cat + 1)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


def _background(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    coarse = rng.uniform(0.25, 0.65, size=(h // 4 + 1, w // 4 + 1))
    gray = np.kron(coarse, np.ones((4, 4)))[:h, :w]
    gray = gray + rng.normal(0.0, 0.04, size=(h, w))
    tint = rng.normal(0.0, 0.02, size=(h, w, 3))
    return np.clip(gray[..., None] + tint, 0.0, 1.0)


def _ellipse(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    frac = rng.uniform(0.04, 0.22)
    aspect = rng.uniform(0.6, 1.6)
    area = frac * h * w
    ry = np.sqrt(area / np.pi * aspect)
    rx = area / (np.pi * ry)
    ry, rx = min(ry, h / 2 - 0.5), min(rx, w / 2 - 0.5)
    cy = rng.uniform(ry - 0.5, h - ry - 0.5)
    cx = rng.uniform(rx - 0.5, w - rx - 0.5)
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def gen_scene(seed: int, categories, n_categories: int = 4,
              hw: tuple[int, int] = (32, 32)) -> SyntheticScene:
    categories = list(categories)
    if not 1 <= len(categories) <= n_categories:
        raise UsageError(f"need between 1 and {n_categories} categories")
    if any(not 0 <= c < n_categories for c in categories):
        raise UsageError("category id out of range")
    h, w = hw
    rng = _rng(seed, 0)
    image = _background(rng, h, w)
    occupied = np.zeros((h, w), dtype=bool)
    sources = []
    for cat in categories:
        for _ in range(MAX_ATTEMPTS):
            mask = _ellipse(rng, h, w)
            frac = mask.mean()
            if MIN_AREA <= frac <= MAX_AREA and not np.any(mask & occupied):
                break
        else:
            raise GenerationError(f"could not place category {cat} (seed {seed})")
        occupied |= mask
        color = category_color(cat, n_categories) + rng.normal(0.0, 0.05, size=(h, w, 3))
        image[mask] = np.clip(color[mask], 0.0, 1.0)
        sources.append((cat, mask.astype(np.uint8)))
    return SyntheticScene(image=image, sources=sources, seed=seed)


def gen_audio(categories, seed: int, duration_s: float = CLIP_SECONDS,
              sample_rate: int = SAMPLE_RATE) -> SyntheticAudio:
    if duration_s <= 0:
        raise UsageError("duration must be positive")
    rng = _rng(seed, 1)
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    x = np.zeros_like(t)
    for cat in categories:
        amp = rng.uniform(0.7, 1.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        x += amp * np.sin(2 * np.pi * category_frequency(cat) * t + phase)
    x += rng.normal(0.0, 0.01, size=t.shape)
    peak = np.abs(x).max()
    if peak > 0:
        x = 0.9 * x / peak
    return SyntheticAudio(waveform=x, categories=list(categories), sample_rate=sample_rate)


@dataclass
class Sample:
    scene: SyntheticScene
    audio: SyntheticAudio


def make_duet(a: Sample, b: Sample) -> Sample:
    """Side-by-side image, masks padded into their half, waveform = mean of the two."""
    ha, wa, _ = a.scene.image.shape
    hb, wb, _ = b.scene.image.shape
    if (ha, wa) != (hb, wb):
        raise DimensionError("duet halves must have the same size")
    if len(a.audio.waveform) != len(b.audio.waveform):
        raise DimensionError("duet waveforms must have the same length")
    image = np.concatenate([a.scene.image, b.scene.image], axis=1)
    pad = np.zeros((ha, wa), dtype=np.uint8)
    sources = [(c, np.concatenate([m, pad], axis=1)) for c, m in a.scene.sources]
    sources += [(c, np.concatenate([pad, m], axis=1)) for c, m in b.scene.sources]
    wave = 0.5 * (a.audio.waveform + b.audio.waveform)
    scene = SyntheticScene(image=image, sources=sources, seed=a.scene.seed)
    cats = a.audio.categories + b.audio.categories
    return Sample(scene, SyntheticAudio(wave, cats, a.audio.sample_rate))


def split_seed(split: str, index: int, data_seed: int = 0) -> int:
    if split not in SPLIT_BASE:
        raise UsageError(f"unknown split {split!r}")
    return data_seed * SPLIT_STRIDE + SPLIT_BASE[split] + index


def single_sample(seed: int, n_categories: int, hw: tuple[int, int]) -> Sample:
    cat = int(_rng(seed, 2).integers(n_categories))
    return Sample(gen_scene(seed, [cat], n_categories, hw), gen_audio([cat], seed))


def duet_sample(seed: int, n_categories: int, hw: tuple[int, int]) -> Sample:
    rng = _rng(seed, 3)
    c1, c2 = (int(c) for c in rng.choice(n_categories, size=2, replace=False))
    left = Sample(gen_scene(seed, [c1], n_categories, hw), gen_audio([c1], seed))
    s2 = seed + SPLIT_STRIDE // 2
    right = Sample(gen_scene(s2, [c2], n_categories, hw), gen_audio([c2], s2))
    return make_duet(left, right)


@dataclass
class Dataset:
    """Arrays for one split, ready for batching."""

    images: np.ndarray  # (N, H, W, 3)
    specs: np.ndarray  # (N, bins, frames), float32
    labels: np.ndarray  # (N, C) multi-hot
    sources: list[list[tuple[int, np.ndarray]]]
    seeds: list[int]
    categories: list[list[int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.seeds)


def build_split(split: str, n: int, n_categories: int = 4, hw: tuple[int, int] = (32, 32),
                data_seed: int = 0, normalize_spectrogram: bool = False) -> Dataset:
    samples, seeds = [], []
    for i in range(n):
        seed = split_seed(split, i, data_seed)
        make = duet_sample if split == "duet" else single_sample
        samples.append(make(seed, n_categories, hw))
        seeds.append(seed)
    images = np.stack([s.scene.image for s in samples])
    specs = np.stack([
        stft_log_spectrogram(Waveform(s.audio.waveform, s.audio.sample_rate),
                             normalize=normalize_spectrogram).values.astype(np.float32)
        for s in samples])
    labels = np.zeros((n, n_categories))
    for i, s in enumerate(samples):
        labels[i, s.audio.categories] = 1.0
    return Dataset(images=images, specs=specs, labels=labels,
                   sources=[s.scene.sources for s in samples], seeds=seeds,
                   categories=[s.audio.categories for s in samples])


def write_cache(ds: Dataset, out_dir, split: str) -> Path:
    """Materialise a split: images/spectrograms as M2TS, masks as PGM, plus a manifest."""
    root = Path(out_dir) / split
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, seed in enumerate(ds.seeds):
        save_tensor(root / f"{i:05d}_image.m2ts", ds.images[i])
        save_tensor(root / f"{i:05d}_spec.m2ts", ds.specs[i])
        for j, (cat, mask) in enumerate(ds.sources[i]):
            write_pgm(root / f"{i:05d}_mask{j}_cat{cat}.pgm", mask_to_u8(mask))
        lines.append(f"{i} {seed} {','.join(str(c) for c in ds.categories[i])}")
    (root / "manifest.txt").write_text("\n".join(lines) + "\n")
    return root
