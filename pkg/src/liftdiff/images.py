"""Image file I/O and resampling on the data path.

Arrays are float32 (C,H,W) in [0,1], C in {1,3}. Formats: PGM/PPM (8- and
16-bit, own reader/writer, fully deterministic bytes) and PNG via Pillow.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = ["read_image", "write_image", "bicubic_resize", "to_uint", "from_uint"]

_PNM_HEADER = re.compile(rb"^(P[56])\s+(?:#.*\s+)*(\d+)\s+(\d+)\s+(\d+)\s")


def to_uint(arr: np.ndarray, bitdepth: int) -> np.ndarray:
    maxval = (1 << bitdepth) - 1
    q = np.clip(np.rint(arr * maxval), 0, maxval)
    return q.astype(np.uint8 if bitdepth == 8 else np.uint16)


def from_uint(arr: np.ndarray, maxval: int) -> np.ndarray:
    return (arr.astype(np.float32) / float(maxval)).astype(np.float32)


def _read_pnm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    m = _PNM_HEADER.match(raw)
    if not m:
        raise ValueError(f"{path}: not a binary PGM/PPM file")
    kind, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    channels = 1 if kind == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    count = w * h * channels
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=m.end())
    img = data.reshape(h, w, channels).transpose(2, 0, 1)
    return from_uint(img, maxval)


def _write_pnm(path: Path, arr: np.ndarray, bitdepth: int) -> None:
    c, h, w = arr.shape
    kind = "P5" if c == 1 else "P6"
    maxval = (1 << bitdepth) - 1
    q = to_uint(arr, bitdepth).transpose(1, 2, 0)
    if bitdepth == 16:
        q = q.astype(">u2")
    header = f"{kind}\n{w} {h}\n{maxval}\n".encode()
    path.write_bytes(header + q.tobytes())


def read_image(path) -> np.ndarray:
    """Read PNG/PGM/PPM into float32 (C,H,W) in [0,1]."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image: {path}")
    if path.suffix.lower() in (".pgm", ".ppm"):
        return _read_pnm(path)
    img = Image.open(path)
    if img.mode in ("I", "I;16"):
        arr = np.asarray(img, dtype=np.uint16)[None]
        return from_uint(arr, 65535)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if "A" in img.mode or img.mode == "P" else "L")
    arr = np.asarray(img)
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return from_uint(arr, 255)


def write_image(path, arr: np.ndarray, bitdepth: int = 8) -> None:
    """Write float32 (C,H,W) in [0,1] as PNG (by extension) or PGM/PPM."""
    path = Path(path)
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"write_image: expected (C,H,W) with C in {{1,3}}, got {arr.shape}")
    if bitdepth not in (8, 16):
        raise ValueError(f"write_image: bitdepth must be 8 or 16, got {bitdepth}")
    if path.suffix.lower() in (".pgm", ".ppm"):
        _write_pnm(path, arr, bitdepth)
        return
    q = to_uint(arr, bitdepth)
    if bitdepth == 16:
        if arr.shape[0] != 1:
            raise ValueError("16-bit PNG output supports grayscale only; use .ppm for RGB")
        Image.fromarray(q[0], mode="I;16").save(path)
    else:
        img = q[0] if arr.shape[0] == 1 else q.transpose(1, 2, 0)
        Image.fromarray(img).save(path)


def bicubic_resize(arr: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Bicubic resample of (C,H,W) float32 to the given (H,W)."""
    h, w = out_hw
    chans = [
        np.asarray(Image.fromarray(c.astype(np.float32), mode="F").resize((w, h), Image.BICUBIC))
        for c in arr
    ]
    return np.stack(chans).astype(np.float32)
