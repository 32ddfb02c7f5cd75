"""Convolutional autoencoder bridging images and the diffusion latent space.

Deterministic encoder/decoder pair (no stochastic sampling, MSE objective):
the decoder output is clamped to [0,1] and both directions are differentiable.
Latent statistics recorded at training time standardize latents to roughly
unit scale for diffusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Adam, ParamModule, conv_init

__all__ = ["CodecConfig", "LatentStats", "Codec", "reencode_regularize", "train_codec"]


@dataclass(frozen=True)
class CodecConfig:
    down_factor: int = 4
    latent_channels: int = 4
    width: int = 32


@dataclass
class LatentStats:
    mean: np.ndarray   # (c_z,)
    std: np.ndarray    # (c_z,)

    def to_std(self, z: np.ndarray) -> np.ndarray:
        return ((z - self.mean[:, None, None]) / self.std[:, None, None]).astype(np.float32)

    def from_std(self, z: np.ndarray) -> np.ndarray:
        return (z * self.std[:, None, None] + self.mean[:, None, None]).astype(np.float32)

    def from_std_t(self, z: Tensor) -> Tensor:
        s = Tensor(self.std.reshape(1, -1, 1, 1))
        m = Tensor(self.mean.reshape(1, -1, 1, 1))
        return ad.add(ad.mul(z, s), m)


class Codec(ParamModule):
    """Encoder E (image -> latent at 1/f resolution) and mirrored decoder D."""

    def __init__(self, cfg: CodecConfig = CodecConfig(), seed: int = 0):
        super().__init__()
        if cfg.down_factor != 4:
            raise ValueError("codec is built for down_factor 4")
        self.cfg = cfg
        self.trained = False
        self.stats: LatentStats | None = None
        rng = np.random.default_rng(seed)
        w, cz = cfg.width, cfg.latent_channels
        p = self.add_param
        self.e1 = p("enc1_w", conv_init(rng, w // 2, 1, 3)); self.eb1 = p("enc1_b", np.zeros(w // 2, np.float32))
        self.e2 = p("enc2_w", conv_init(rng, w, w // 2, 3)); self.eb2 = p("enc2_b", np.zeros(w, np.float32))
        self.e3 = p("enc3_w", conv_init(rng, w, w, 3)); self.eb3 = p("enc3_b", np.zeros(w, np.float32))
        self.e4 = p("enc4_w", conv_init(rng, cz, w, 3)); self.eb4 = p("enc4_b", np.zeros(cz, np.float32))
        self.d1 = p("dec1_w", conv_init(rng, w, cz, 3)); self.db1 = p("dec1_b", np.zeros(w, np.float32))
        self.d2 = p("dec2_w", (conv_init(rng, w, w, 4).transpose(1, 0, 2, 3)).copy()); self.db2 = p("dec2_b", np.zeros(w, np.float32))
        self.d3 = p("dec3_w", (conv_init(rng, w // 2, w, 4).transpose(1, 0, 2, 3)).copy()); self.db3 = p("dec3_b", np.zeros(w // 2, np.float32))
        self.d4 = p("dec4_w", conv_init(rng, 1, w // 2, 3)); self.db4 = p("dec4_b", np.zeros(1, np.float32))

    def _check_extents(self, x: Tensor) -> None:
        f = self.cfg.down_factor
        if x.shape[2] % f or x.shape[3] % f:
            raise ValueError(f"codec: extents {x.shape[2:]} not divisible by factor {f}")

    def encode(self, x: Tensor) -> Tensor:
        """(B,1,H,W) -> (B,c_z,H/f,W/f)."""
        self._check_extents(x)
        h = ad.gelu(ad.conv2d(x, self.e1, bias=self.eb1, stride=2, padding=1, pad_mode="zero"))
        h = ad.gelu(ad.conv2d(h, self.e2, bias=self.eb2, stride=2, padding=1, pad_mode="zero"))
        h = ad.gelu(ad.conv2d(h, self.e3, bias=self.eb3, padding=1))
        return ad.conv2d(h, self.e4, bias=self.eb4, padding=1)

    def decode_raw(self, z: Tensor) -> Tensor:
        h = ad.gelu(ad.conv2d(z, self.d1, bias=self.db1, padding=1))
        h = ad.gelu(ad.conv_transpose2d(h, self.d2, bias=self.db2, stride=2, padding=1))
        h = ad.gelu(ad.conv_transpose2d(h, self.d3, bias=self.db3, stride=2, padding=1))
        return ad.conv2d(h, self.d4, bias=self.db4, padding=1)

    def decode(self, z: Tensor) -> Tensor:
        """(B,c_z,h,w) -> (B,1,f*h,f*w), clamped to [0,1]."""
        return ad.clamp01(self.decode_raw(z))

    def copy(self) -> "Codec":
        dup = Codec(self.cfg, seed=0)
        dup.load_arrays(self.arrays())
        dup.trained = self.trained
        dup.stats = self.stats
        return dup


def reencode_regularize(codec: Codec, z: Tensor) -> Tensor:
    """Re-encode the decoded latent: an approximate projection toward the
    codec's latent manifold."""
    return codec.encode(codec.decode(z))


def train_codec(
    clean: np.ndarray,
    codec: Codec | None = None,
    steps: int = 1200,
    batch_size: int = 8,
    lr: float = 2e-3,
    holdout: float = 0.1,
    seed: int = 0,
    log=None,
) -> tuple[Codec, dict]:
    """MSE-train the autoencoder on clean images (N,1,H,W); records latent
    statistics on the training set. Returns (codec, {"init_mse","final_mse"})."""
    if len(clean) == 0:
        raise ValueError("train_codec: empty dataset")
    cod = codec or Codec(seed=seed)
    rng = np.random.default_rng(seed)
    n_hold = max(1, int(len(clean) * holdout)) if len(clean) > 1 else 0
    hold = clean[:n_hold] if n_hold else clean
    train = clean[n_hold:] if n_hold and len(clean) > n_hold else clean

    def holdout_mse() -> float:
        with ad.no_grad():
            rec = cod.decode(cod.encode(Tensor(hold)))
        return float(((rec.data - hold) ** 2).mean())

    init_mse = holdout_mse()
    opt = Adam(cod.params(), lr=lr)
    for step in range(steps):
        idx = rng.integers(0, len(train), size=min(batch_size, len(train)))
        xb = Tensor(train[idx])
        with ad.Tape():
            rec = cod.decode_raw(cod.encode(xb))
            loss = ad.smul(ad.sumsq(ad.sub(rec, xb)), 1.0 / rec.size)
            grads = ad.backward(loss)
        opt.step(grads)
        if log is not None and step % 100 == 0:
            log({"step": step, "mse": float(loss.data)})
    with ad.no_grad():
        zs = []
        for i in range(0, len(train), 16):
            zs.append(cod.encode(Tensor(train[i:i + 16])).data)
        z = np.concatenate(zs)
    cod.stats = LatentStats(mean=z.mean(axis=(0, 2, 3)).astype(np.float32),
                            std=(z.std(axis=(0, 2, 3)) + 1e-6).astype(np.float32))
    cod.trained = True
    return cod, {"init_mse": init_mse, "final_mse": holdout_mse()}
