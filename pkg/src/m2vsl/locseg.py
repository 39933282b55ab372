"""Similarity maps -> heatmaps -> binary masks."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionError, UsageError


def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise DegenerateInputError("zero-norm feature vector")
    return x / n


def per_scale_maps(audio: np.ndarray, pyramid: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Cosine maps of each audio vector against its own image's pyramid.

    ``audio`` is ``(D,)`` with maps ``(H, W, D)``, or ``(B, D)`` with maps ``(B, H, W, D)``.
    """
    a = _unit(np.asarray(audio, dtype=np.float64))
    out = []
    for v in pyramid:
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != a.shape[-1]:
            raise DimensionError(f"width mismatch {a.shape} vs {v.shape}")
        vn = _unit(v)
        if a.ndim == 1:
            out.append(vn @ a)
        else:
            out.append(np.einsum("bhwd,bd->bhw", vn, a))
    return out


def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Corner-aligned linear interpolation weights, shape (n_out, n_in)."""
    r = np.zeros((n_out, n_in))
    if n_in == 1:
        r[:, 0] = 1.0
        return r
    pos = np.arange(n_out) * (n_in - 1) / max(n_out - 1, 1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - lo
    r[np.arange(n_out), lo] = 1.0 - frac
    r[np.arange(n_out), lo + 1] += frac
    return r


def upsample_bilinear(m: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of the last two axes with corner-aligned sampling."""
    m = np.asarray(m, dtype=np.float64)
    h, w = m.shape[-2:]
    if (h, w) == tuple(target_hw):
        return m.copy()
    rows = _interp_matrix(target_hw[0], h)
    cols = _interp_matrix(target_hw[1], w)
    return rows @ m @ cols.T


def aggregate_scales(maps: Sequence[np.ndarray], target_hw: tuple[int, int]) -> np.ndarray:
    if len(maps) == 0:
        raise UsageError("aggregate_scales needs at least one map")
    # Canonical summation order, so the float result does not depend on input order.
    ups = sorted((upsample_bilinear(m, target_hw) for m in maps), key=lambda u: u.tobytes())
    return np.mean(ups, axis=0)


def minmax(m: np.ndarray) -> np.ndarray:
    """Scale to [0, 1] over the last two axes; constant maps become all ones."""
    m = np.asarray(m, dtype=np.float64)
    lo = m.min(axis=(-2, -1), keepdims=True)
    hi = m.max(axis=(-2, -1), keepdims=True)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (m - lo) / safe, 1.0)


def threshold_mask(m: np.ndarray, method: str = "minmax", threshold: float = 0.5) -> np.ndarray:
    """Binary mask. ``minmax`` thresholds the normalised map; ``fixed`` thresholds raw values."""
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise DegenerateInputError("map contains non-finite values")
    if method == "minmax":
        return (minmax(m) >= threshold).astype(np.uint8)
    if method == "fixed":
        return (m >= threshold).astype(np.uint8)
    raise UsageError(f"unknown threshold method {method!r}")


def class_aware_maps(patches: np.ndarray, class_vectors: np.ndarray, grid_hw: tuple[int, int],
                     target_hw: tuple[int, int]) -> np.ndarray:
    """Map for category i = cos(class vector i, updated patch token p) on the token grid.

    ``patches`` is ``(P, D)``, ``class_vectors`` ``(C, D)``; returns ``(C, *target_hw)``
    with values in [-1, 1] before upsampling.
    """
    p = _unit(np.asarray(patches, dtype=np.float64))
    c = _unit(np.asarray(class_vectors, dtype=np.float64))
    if p.shape[0] != grid_hw[0] * grid_hw[1]:
        raise DimensionError(f"{p.shape[0]} patches do not fill grid {grid_hw}")
    raw = (c @ p.T).reshape(c.shape[0], *grid_hw)
    return upsample_bilinear(raw, target_hw)
