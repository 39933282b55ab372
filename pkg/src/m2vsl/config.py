"""Run configuration and its plain-text ``key=value`` form."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import UsageError


@dataclass
class RunConfig:
    dim: int = 64
    n_scales: int = 3
    n_categories: int = 4
    image_size: int = 32
    patch: int = 2
    tau: float = 0.03
    batch_size: int = 16
    epochs: int = 30
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    data_seed: int = 0
    mmc_enabled: bool = True
    mmt_enabled: bool = True
    mmt_depth: int = 3
    mmt_scale: int = 2  # pyramid level whose locations become patch tokens
    mmt_audio_dropout: float = 0.5  # training only: fraction of samples whose tokens omit audio
    mmt_projections: bool = False
    mmt_residual: bool = False
    cls_weight: float = 0.1
    scales_used: tuple[int, ...] | None = None
    normalize_spectrogram: bool = False
    n_train: int = 512
    n_val: int = 128
    n_test: int = 128
    n_duet: int = 128
    threshold_method: str = "minmax"
    mask_source: str = "similarity"  # or class_aware | fused | auto (fused iff MMT)
    iou_tau: float = 0.3
    ciou_tau: float = 0.3
    f_beta2: float = 0.3
    out_dir: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.batch_size < 2:
            raise UsageError("batch_size must be >= 2")
        if self.mmt_enabled and self.mmt_depth < 1:
            raise UsageError("mmt_depth must be >= 1 when MMT is enabled")
        if self.tau <= 0:
            raise UsageError("tau must be positive")
        if self.n_scales < 1 or self.dim < 1 or self.n_categories < 1:
            raise UsageError("n_scales, dim and n_categories must be positive")
        step = self.patch * 2 ** (self.n_scales - 1)
        if self.image_size % step:
            raise UsageError(f"image_size {self.image_size} not divisible by {step}")
        if not 1 <= self.mmt_scale <= self.n_scales:
            raise UsageError(f"mmt_scale must lie in 1..{self.n_scales}")
        if self.mask_source not in ("auto", "similarity", "class_aware", "fused"):
            raise UsageError(f"unknown mask_source {self.mask_source!r}")
        if self.scales_used is not None:
            if not self.scales_used or any(not 1 <= s <= self.n_scales for s in self.scales_used):
                raise UsageError(f"scales_used must be a non-empty subset of 1..{self.n_scales}")

    @property
    def n_patches(self) -> int:
        """Patch tokens per (square) image, taken from ``mmt_scale``."""
        g = self.image_size // (self.patch * 2 ** (self.mmt_scale - 1))
        return g * g

    def loss_scales(self) -> tuple[int, ...]:
        if not self.mmc_enabled:
            return (self.n_scales,)
        return self.scales_used or tuple(range(1, self.n_scales + 1))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "scales_used":
                v = "all" if v is None else ",".join(str(s) for s in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        raw: dict[str, str] = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"line {n}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k] = v
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_strings(raw)

    @classmethod
    def from_strings(cls, raw: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for k, v in raw.items():
            if k not in known:
                raise UsageError(f"unknown config key {k!r}")
            kwargs[k] = _parse(k, v, cls)
        return cls(**kwargs)

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _parse(key: str, value, cls):
    if not isinstance(value, str):
        return value
    default = getattr(cls(), key)
    if key == "scales_used":
        return None if value in ("", "all", "None") else tuple(int(s) for s in value.split(","))
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: not a boolean: {value!r}")
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError as exc:
        raise UsageError(f"{key}: {exc}") from None
    return value
