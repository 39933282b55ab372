"""Log-magnitude STFT front end."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, UsageError

SAMPLE_RATE = 22_050
CLIP_SECONDS = 3.0
# 257 bins x 300 frames for a 3 s clip at 22.05 kHz.
N_FFT = 512
WIN_SAMPLES = 512
HOP_SAMPLES = 221
LOG_EPS = 1e-5


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise UsageError("sample_rate must be positive")
        if np.asarray(self.samples).ndim != 1 or len(self.samples) == 0:
            raise UsageError("waveform must be a non-empty 1-D array")


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray  # bins x frames

    @property
    def bins(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(length: int, win_samples: int = WIN_SAMPLES, hop_samples: int = HOP_SAMPLES) -> int:
    """Number of frames after reflective padding of ``win_samples // 2`` on each side."""
    padded = length + 2 * (win_samples // 2)
    if padded < win_samples:
        return 0
    return (padded - win_samples) // hop_samples + 1


def frame_signal(x: np.ndarray, win_samples: int, hop_samples: int) -> np.ndarray:
    pad = win_samples // 2
    if len(x) <= pad:
        raise DegenerateInputError(f"signal of {len(x)} samples too short for window {win_samples}")
    xp = np.pad(x, pad, mode="reflect")
    n = frame_count(len(x), win_samples, hop_samples)
    if n < 1:
        raise DegenerateInputError("signal shorter than one window")
    idx = np.arange(win_samples)[None, :] + hop_samples * np.arange(n)[:, None]
    return xp[idx]


def stft_magnitude(w: Waveform, n_fft: int = N_FFT, win_samples: int = WIN_SAMPLES,
                   hop_samples: int = HOP_SAMPLES) -> np.ndarray:
    """One-sided |DFT| of Hann-windowed frames, shape (n_fft // 2 + 1, frames).

    Frames longer than ``n_fft`` are truncated, shorter ones zero-padded at the end.
    """
    if hop_samples < 1:
        raise UsageError("hop_samples must be >= 1")
    frames = frame_signal(np.asarray(w.samples, dtype=np.float64), win_samples, hop_samples)
    spec = np.fft.rfft(frames * hann(win_samples), n=n_fft, axis=1)
    return np.abs(spec).T


def stft_log_spectrogram(w: Waveform, n_fft: int = N_FFT, win_samples: int = WIN_SAMPLES,
                         hop_samples: int = HOP_SAMPLES, eps: float = LOG_EPS,
                         normalize: bool = False) -> Spectrogram:
    values = np.log(stft_magnitude(w, n_fft, win_samples, hop_samples) + eps)
    if normalize:
        sd = values.std()
        values = (values - values.mean()) / (sd if sd > 0 else 1.0)
    return Spectrogram(values)
