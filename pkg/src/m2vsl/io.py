"""On-disk formats: M2TS tensors, named-tensor checkpoints, PGM images, key=value configs."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DimensionError, UsageError

MAGIC = b"M2TS"


def encode_tensor(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one tensor starting at ``offset``; returns the array and the offset just past it."""
    if buf[offset:offset + 4] != MAGIC:
        raise UsageError(f"bad magic at byte {offset}")
    (rank,) = struct.unpack_from("<I", buf, offset + 4)
    shape = struct.unpack_from(f"<{rank}I", buf, offset + 8)
    start = offset + 8 + 4 * rank
    n = int(np.prod(shape)) if rank else 1
    end = start + 4 * n
    if end > len(buf):
        raise DimensionError("truncated tensor payload")
    arr = np.frombuffer(buf, dtype="<f4", count=n, offset=start).reshape(shape)
    return arr.astype(np.float32), end


def save_tensor(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(arr))


def load_tensor(path) -> np.ndarray:
    arr, _ = decode_tensor(Path(path).read_bytes())
    return arr


# -- checkpoints: <stem>.m2ts holds the concatenated tensors, <stem>.manifest indexes them

def save_checkpoint(stem, tensors: dict[str, np.ndarray]) -> tuple[Path, Path]:
    stem = Path(stem)
    blob = bytearray()
    lines = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        shape = "x".join(str(n) for n in arr.shape) or "1"
        lines.append(f"{name} {shape} {len(blob)}")
        blob += encode_tensor(arr)
    data_path = stem.with_suffix(".m2ts")
    manifest_path = stem.with_suffix(".manifest")
    data_path.write_bytes(bytes(blob))
    manifest_path.write_text("\n".join(lines) + "\n")
    return data_path, manifest_path


def read_manifest(stem) -> list[tuple[str, tuple[int, ...], int]]:
    out = []
    for line in Path(stem).with_suffix(".manifest").read_text().splitlines():
        if not line.strip():
            continue
        name, shape, off = line.split()
        out.append((name, tuple(int(s) for s in shape.split("x")), int(off)))
    return out


def load_checkpoint(stem) -> dict[str, np.ndarray]:
    blob = Path(stem).with_suffix(".m2ts").read_bytes()
    tensors = {}
    for name, shape, off in read_manifest(stem):
        arr, _ = decode_tensor(blob, off)
        if arr.shape != shape:
            raise DimensionError(f"{name}: manifest says {shape}, payload has {arr.shape}")
        tensors[name] = arr
    return tensors


# -- PGM (binary P5, 8-bit)

def write_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise DimensionError("PGM needs a 2-D array")
    if img.dtype != np.uint8:
        raise UsageError("PGM writer expects uint8 pixels")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise UsageError("only binary P5 PGM is supported")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval > 255:
        raise UsageError("16-bit PGM not supported")
    pos += 1
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w).copy()


def heatmap_to_u8(m: np.ndarray) -> np.ndarray:
    lo, hi = float(m.min()), float(m.max())
    if hi == lo:
        return np.zeros(m.shape, dtype=np.uint8)
    return np.round((m - lo) / (hi - lo) * 255.0).astype(np.uint8)


def mask_to_u8(mask: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(mask) > 0, 255, 0).astype(np.uint8)


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
