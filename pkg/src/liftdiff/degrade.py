"""Synthetic degradation: blur, bicubic decimation, noise, block-cosine
compression, plus the small regressor that produces degradation embeddings.

The pipeline is y = compress(blur(x) downsampled + noise), entirely on the
non-differentiated data path and deterministic given its seed. Compression is
a block-cosine quantize/dequantize proxy: 8x8 orthonormal DCT against the
standard luminance table under the conventional quality-to-scale mapping
(no entropy coding, bit-exact and portable).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import convolve1d

from . import autodiff as ad
from .autodiff import Tensor
from .images import bicubic_resize
from .nn import Adam, ParamModule, conv_init, fc_init

__all__ = [
    "DegradationParams",
    "PRESETS",
    "degrade",
    "compress_blocks",
    "DegradationEstimator",
    "estimate_embedding",
    "train_estimator",
    "PARAM_SCALE",
]

# normalization for (sigma, delta, q) regression targets
PARAM_SCALE = np.array([16.0, 100.0, 100.0], dtype=np.float32)

# standard luminance quantization table
_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


@dataclass(frozen=True)
class DegradationParams:
    sigma: float        # Gaussian blur std, pixels
    delta: float        # AWGN std on a 0-255 scale
    q: int              # compression quality factor
    r: int = 4          # integer downsampling factor

    def __post_init__(self):
        if not 0 <= self.sigma <= 16:
            raise ValueError(f"sigma {self.sigma} outside [0, 16]")
        if not 0 <= self.delta <= 100:
            raise ValueError(f"delta {self.delta} outside [0, 100]")
        if not 1 <= self.q <= 100:
            raise ValueError(f"q {self.q} outside [1, 100]")
        if self.r not in (1, 2, 4, 8):
            raise ValueError(f"r {self.r} not in {{1,2,4,8}}")

    def normalized(self) -> np.ndarray:
        return (np.array([self.sigma, self.delta, self.q], dtype=np.float32)
                / PARAM_SCALE)


PRESETS = {
    "mild": DegradationParams(sigma=4, delta=15, q=70),
    "medium": DegradationParams(sigma=6, delta=25, q=50),
    "severe": DegradationParams(sigma=8, delta=35, q=30),
}


def _quant_table(q: int) -> np.ndarray:
    scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
    scale = max(scale, 1.0)
    tab = np.floor((_LUMA_TABLE * scale + 50.0) / 100.0)
    return np.clip(tab, 1.0, 255.0)


def compress_blocks(img: np.ndarray, q: int) -> np.ndarray:
    """Block-cosine quantize/dequantize of (C,H,W) in [0,1]; extents % 8 == 0."""
    c, h, w = img.shape
    if h % 8 or w % 8:
        raise ValueError(f"compression proxy requires extents divisible by 8, got {(h, w)}")
    tab = _quant_table(q)
    x = img.astype(np.float64) * 255.0 - 128.0
    blocks = x.reshape(c, h // 8, 8, w // 8, 8).transpose(0, 1, 3, 2, 4)
    coef = dctn(blocks, axes=(-2, -1), norm="ortho")
    coef = np.round(coef / tab) * tab
    rec = idctn(coef, axes=(-2, -1), norm="ortho")
    rec = rec.transpose(0, 1, 3, 2, 4).reshape(c, h, w)
    return (np.clip(rec + 128.0, 0.0, 255.0) / 255.0).astype(np.float32)


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img
    radius = int(np.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-0.5 * (k / sigma) ** 2)
    kern /= kern.sum()
    out = convolve1d(img.astype(np.float64), kern, axis=1, mode="reflect")
    out = convolve1d(out, kern, axis=2, mode="reflect")
    return out.astype(np.float32)


def degrade(x, params: DegradationParams, seed: int):
    """Apply the blur/downsample/noise/compression chain; deterministic per seed.

    Accepts float32 (C,H,W) in [0,1] (or a Tensor of that shape); returns the
    degraded image at (C, H/r, W/r) of the same kind.
    """
    was_tensor = isinstance(x, Tensor)
    img = np.asarray(x.data if was_tensor else x, dtype=np.float32)
    if img.ndim != 3:
        raise ValueError(f"degrade: expected (C,H,W), got {img.shape}")
    c, h, w = img.shape
    r = params.r
    if h % r or w % r:
        raise ValueError(f"degrade: extents {(h, w)} not divisible by r={r}")
    if (h // r) % 8 or (w // r) % 8:
        raise ValueError(
            f"degrade: downsampled extents {(h // r, w // r)} not divisible by 8")
    out = _gaussian_blur(img, params.sigma)
    if r > 1:
        out = bicubic_resize(out, (h // r, w // r))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(out.shape).astype(np.float32)
    out = out + (params.delta / 255.0) * noise
    out = compress_blocks(np.clip(out, 0.0, 1.0), params.q)
    out = np.clip(out, 0.0, 1.0)
    return Tensor(out) if was_tensor else out


# ---------------------------------------------------------------------------
# degradation embedding regressor


class DegradationEstimator(ParamModule):
    """Small conv regressor predicting normalized (sigma, delta, q) from y;
    its penultimate features are the degradation embedding."""

    def __init__(self, embed_dim: int = 64, width: int = 32, seed: int = 0):
        super().__init__()
        self.embed_dim = embed_dim
        self.trained = False
        rng = np.random.default_rng(seed)
        w = width
        self.c1 = self.add_param("c1_w", conv_init(rng, w // 2, 1, 3))
        self.b1 = self.add_param("c1_b", np.zeros(w // 2, np.float32))
        self.c2 = self.add_param("c2_w", conv_init(rng, w, w // 2, 3))
        self.b2 = self.add_param("c2_b", np.zeros(w, np.float32))
        self.c3 = self.add_param("c3_w", conv_init(rng, w, w, 3))
        self.b3 = self.add_param("c3_b", np.zeros(w, np.float32))
        self.f1 = self.add_param("f1_w", fc_init(rng, 2 * w, embed_dim))
        self.g1 = self.add_param("f1_b", np.zeros(embed_dim, np.float32))
        self.f2 = self.add_param("f2_w", fc_init(rng, embed_dim, 3))
        self.g2 = self.add_param("f2_b", np.zeros(3, np.float32))

    def features(self, y: Tensor) -> Tensor:
        """Embedding of a degraded batch (B,1,h,w) -> (B, embed_dim)."""
        h = ad.gelu(ad.conv2d(y, self.c1, bias=self.b1, padding=1))
        h = ad.gelu(ad.conv2d(h, self.c2, bias=self.b2, stride=2, padding=1))
        h = ad.gelu(ad.conv2d(h, self.c3, bias=self.b3, padding=1))
        # first and second moments: noise/blockiness levels live in the spread
        m1 = ad.reduce_mean(h, axis=(2, 3))
        m2 = ad.reduce_mean(ad.mul(h, h), axis=(2, 3))
        pooled = ad.concat([m1, m2], axis=1)
        return ad.gelu(ad.add(ad.matmul(pooled, self.f1), self.g1))

    def predict(self, y: Tensor) -> Tensor:
        """Normalized (sigma, delta, q) predictions, (B,3)."""
        return ad.add(ad.matmul(self.features(y), self.f2), self.g2)


def estimate_embedding(y, estimator: DegradationEstimator) -> np.ndarray:
    """Degradation embedding of one degraded image (1,h,w) -> (embed_dim,)."""
    if not estimator.trained:
        raise RuntimeError("degradation estimator has not been trained")
    arr = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    with ad.no_grad():
        feats = estimator.features(Tensor(arr))
    out = feats.data[0]
    if not np.isfinite(out).all():
        raise FloatingPointError("estimator produced non-finite embedding")
    return out


def train_estimator(
    ys: np.ndarray,
    targets: np.ndarray,
    estimator: DegradationEstimator | None = None,
    steps: int = 400,
    batch_size: int = 16,
    lr: float = 1e-3,
    holdout: float = 0.1,
    seed: int = 0,
    log=None,
) -> tuple[DegradationEstimator, dict]:
    """Fit the regressor on (y, normalized params) pairs.

    Returns the trained estimator and {"init_loss", "final_loss"} measured on
    a held-out split; final must undercut half the initial value.
    """
    if len(ys) == 0:
        raise ValueError("train_estimator: empty dataset")
    est = estimator or DegradationEstimator(seed=seed)
    rng = np.random.default_rng(seed)
    n_hold = max(1, int(len(ys) * holdout)) if len(ys) > 1 else 0
    hold_y, hold_t = ys[:n_hold], targets[:n_hold]
    tr_y, tr_t = ys[n_hold:], targets[n_hold:]
    if len(tr_y) == 0:
        tr_y, tr_t = ys, targets

    def holdout_loss() -> float:
        if n_hold == 0:
            hy, ht = tr_y, tr_t
        else:
            hy, ht = hold_y, hold_t
        with ad.no_grad():
            pred = est.predict(Tensor(hy))
        return float(((pred.data - ht) ** 2).mean())

    init_loss = holdout_loss()
    opt = Adam(est.params(), lr=lr)
    for step in range(steps):
        idx = rng.integers(0, len(tr_y), size=min(batch_size, len(tr_y)))
        yb, tb = Tensor(tr_y[idx]), Tensor(tr_t[idx])
        with ad.Tape():
            pred = est.predict(yb)
            loss = ad.smul(ad.sumsq(ad.sub(pred, tb)), 1.0 / (len(idx) * 3))
            grads = ad.backward(loss)
        opt.step(grads)
        if log is not None and step % 50 == 0:
            log({"step": step, "loss": float(loss.data)})
    est.trained = True
    return est, {"init_loss": init_loss, "final_loss": holdout_loss()}
