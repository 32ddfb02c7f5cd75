"""Single-level 2-d Haar split/merge, decimated and undecimated.

Both variants are differentiable (they compose conv primitives) and satisfy
exact perfect reconstruction: ``merge(*split(x)) == x`` up to float32
round-off. The decimated transform uses orthonormal kernels (entries +-1/2),
so it also conserves energy; the undecimated transform runs the same kernels
without decimation on a circular boundary, with mirrored synthesis kernels
scaled by 1/4.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = ["WaveletKind", "split", "merge"]


class WaveletKind(enum.Enum):
    DECIMATED = "decimated"
    UNDECIMATED = "undecimated"


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_LOW = np.array([_INV_SQRT2, _INV_SQRT2], dtype=np.float32)
_HIGH = np.array([_INV_SQRT2, -_INV_SQRT2], dtype=np.float32)

# subband order: LL (coarse), then details LH, HL, HH
_KERNELS = np.stack([
    np.outer(_LOW, _LOW),
    np.outer(_LOW, _HIGH),
    np.outer(_HIGH, _LOW),
    np.outer(_HIGH, _HIGH),
]).astype(np.float32)


def _analysis_weight(channels: int) -> np.ndarray:
    w = np.zeros((4 * channels, channels, 2, 2), dtype=np.float32)
    for s in range(4):
        for c in range(channels):
            w[s * channels + c, c] = _KERNELS[s]
    return w


def _synthesis_weight_undecimated(channels: int) -> np.ndarray:
    # mirrored kernels, 1/4 scale for the redundant perfect-reconstruction sum
    w = np.zeros((channels, 4 * channels, 2, 2), dtype=np.float32)
    for s in range(4):
        for c in range(channels):
            w[c, s * channels + c] = _KERNELS[s][::-1, ::-1] * 0.25
    return w


def _transpose_weight(channels: int) -> np.ndarray:
    w = np.zeros((4 * channels, channels, 2, 2), dtype=np.float32)
    for s in range(4):
        for c in range(channels):
            w[s * channels + c, c] = _KERNELS[s]
    return w


_CACHE: dict[tuple[str, int], Tensor] = {}


def _weight(kind: str, channels: int) -> Tensor:
    key = (kind, channels)
    if key not in _CACHE:
        builder = {
            "analysis": _analysis_weight,
            "synth_und": _synthesis_weight_undecimated,
            "transpose": _transpose_weight,
        }[kind]
        _CACHE[key] = Tensor(builder(channels))
    return _CACHE[key]


def split(x: Tensor, kind: WaveletKind) -> tuple[Tensor, Tensor]:
    """Split (B,C,H,W) into coarse (B,C,·,·) and detail (B,3C,·,·) subbands.

    Decimated output sits at half resolution and requires even H and W;
    undecimated output keeps full resolution and accepts any extents >= 2.
    """
    B, C, H, W = x.shape
    if H < 2 or W < 2:
        raise ValueError(f"split: spatial extents must be >= 2, got {(H, W)}")
    if kind is WaveletKind.DECIMATED:
        if H % 2 or W % 2:
            raise ValueError(f"split: decimated Haar requires even extents, got {(H, W)}")
        bands = ad.conv2d(x, _weight("analysis", C), stride=2)
    else:
        xp = ad.pad2d(x, (0, 1, 0, 1), mode="wrap")
        bands = ad.conv2d(xp, _weight("analysis", C), stride=1)
    coarse, detail = ad.split(bands, [C, 3 * C], axis=1)
    return coarse, detail


def merge(coarse: Tensor, detail: Tensor, kind: WaveletKind) -> Tensor:
    """Inverse of :func:`split` for matching kind and shapes."""
    B, C, h, w = coarse.shape
    if detail.shape != (B, 3 * C, h, w):
        raise ValueError(
            f"merge: detail shape {detail.shape} inconsistent with coarse {coarse.shape}")
    bands = ad.concat([coarse, detail], axis=1)
    if kind is WaveletKind.DECIMATED:
        return ad.conv_transpose2d(bands, _weight("transpose", C), stride=2)
    bp = ad.pad2d(bands, (1, 0, 1, 0), mode="wrap")
    return ad.conv2d(bp, _weight("synth_und", C), stride=1)
