"""Denoising-diffusion machinery: schedule tables, the noising/denoising
algebra shared by all samplers, and a small conv denoiser.

Schedule tables are computed in float64 and indexed 1..T (index 0 is the
clean boundary, alpha_bar[0] = 1, so sigma[1] = 0 and the final reverse
step is deterministic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Adam, ParamModule, conv_init, fc_init

__all__ = [
    "NoiseSchedule",
    "build_schedule",
    "strided_schedule",
    "q_sample",
    "predict_z0",
    "reverse_step",
    "reverse_step_eps",
    "Denoiser",
    "train_denoiser",
]


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray        # (T+1,), beta[0] unused
    alpha: np.ndarray
    alpha_bar: np.ndarray   # alpha_bar[0] == 1
    sigma: np.ndarray       # sigma[t]^2 = (1-abar[t-1])/(1-abar[t]) * beta[t]
    parent_t: np.ndarray    # timestep fed to the denoiser embedding, (T+1,)

    @property
    def T(self) -> int:
        return len(self.beta) - 1


def _tables(alpha_bar: np.ndarray, parent_t: np.ndarray) -> NoiseSchedule:
    alpha = np.empty_like(alpha_bar)
    alpha[0] = 1.0
    alpha[1:] = alpha_bar[1:] / alpha_bar[:-1]
    beta = 1.0 - alpha
    sigma = np.zeros_like(alpha_bar)
    sigma[1:] = np.sqrt((1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:])
    return NoiseSchedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar,
                         sigma=sigma, parent_t=parent_t)


def build_schedule(T: int = 1000, kind: str = "linear",
                   beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    if T < 2:
        raise ValueError(f"schedule needs T >= 2, got {T}")
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    beta = np.zeros(T + 1, dtype=np.float64)
    beta[1:] = np.linspace(beta_start, beta_end, T)
    if not ((beta[1:] > 0).all() and (beta[1:] < 1).all()):
        raise ValueError("betas must lie in (0, 1)")
    alpha_bar = np.ones(T + 1, dtype=np.float64)
    alpha_bar[1:] = np.cumprod(1.0 - beta[1:])
    if not (np.diff(alpha_bar) < 0).all():
        raise ValueError("alpha_bar must be strictly decreasing")
    if alpha_bar[T] >= 1e-2:
        raise ValueError(f"alpha_bar[T] = {alpha_bar[T]:.3e} too large; extend T or betas")
    return _tables(alpha_bar, parent_t=np.arange(T + 1))


def strided_schedule(parent: NoiseSchedule, steps: int) -> NoiseSchedule:
    """Evenly strided sub-schedule with `steps` reverse steps."""
    if not 2 <= steps <= parent.T:
        raise ValueError(f"steps {steps} outside [2, {parent.T}]")
    stride = parent.T // steps
    ts = np.arange(1, steps + 1) * stride
    alpha_bar = np.ones(steps + 1, dtype=np.float64)
    alpha_bar[1:] = parent.alpha_bar[ts]
    parent_t = np.zeros(steps + 1, dtype=np.int64)
    parent_t[1:] = ts
    return _tables(alpha_bar, parent_t=parent_t)


def _check_t(sched: NoiseSchedule, t: int) -> None:
    if not 1 <= t <= sched.T:
        raise ValueError(f"step index {t} outside [1, {sched.T}]")


def q_sample(z0, t: int, eps, sched: NoiseSchedule):
    """Closed-form noising: sqrt(abar_t) z0 + sqrt(1-abar_t) eps."""
    _check_t(sched, t)
    a = float(np.sqrt(sched.alpha_bar[t]))
    b = float(np.sqrt(1.0 - sched.alpha_bar[t]))
    if isinstance(z0, Tensor):
        return ad.add(ad.smul(z0, a), ad.smul(eps, b))
    return (a * z0 + b * eps).astype(np.float32)


def predict_z0(z_t, t: int, eps_hat, sched: NoiseSchedule):
    """One-step clean estimate from the noisy state and predicted noise."""
    _check_t(sched, t)
    a = float(np.sqrt(sched.alpha_bar[t]))
    b = float(np.sqrt(1.0 - sched.alpha_bar[t]))
    if isinstance(z_t, Tensor):
        return ad.smul(ad.sub(z_t, ad.smul(eps_hat, b)), 1.0 / a)
    return ((z_t - b * eps_hat) / a).astype(np.float32)


def reverse_step(z_t, z0_hat, t: int, sched: NoiseSchedule, noise):
    """Posterior-mean reverse step from the clean estimate; noise dropped at t=1."""
    _check_t(sched, t)
    abar_t = sched.alpha_bar[t]
    abar_p = sched.alpha_bar[t - 1]
    ca = float(np.sqrt(abar_p) * sched.beta[t] / (1.0 - abar_t))
    cb = float(np.sqrt(sched.alpha[t]) * (1.0 - abar_p) / (1.0 - abar_t))
    out = ca * np.asarray(z0_hat, dtype=np.float32) + cb * np.asarray(z_t, dtype=np.float32)
    if t > 1 and noise is not None:
        out = out + float(sched.sigma[t]) * np.asarray(noise, dtype=np.float32)
    return out.astype(np.float32)


def reverse_step_eps(z_t, eps_hat, t: int, sched: NoiseSchedule, noise):
    """Equivalent reverse step written directly in terms of predicted noise."""
    _check_t(sched, t)
    a = float(sched.alpha[t])
    abar_t = float(sched.alpha_bar[t])
    out = (z_t - (1.0 - a) / math.sqrt(1.0 - abar_t) * eps_hat) / math.sqrt(a)
    if t > 1 and noise is not None:
        out = out + float(sched.sigma[t]) * noise
    return out.astype(np.float32)


# ---------------------------------------------------------------------------
# denoiser


def timestep_embedding(t: int, dim: int = 32) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)]).astype(np.float32)


class Denoiser(ParamModule):
    """Small U-shaped conv net predicting the noise in a latent state."""

    TEMB = 32

    def __init__(self, latent_channels: int = 4, width: int = 24, seed: int = 0):
        super().__init__()
        self.latent_channels = latent_channels
        self.width = width
        self.trained = False
        rng = np.random.default_rng(seed)
        w, cz = width, latent_channels
        p = self.add_param
        self.cin = p("in_w", conv_init(rng, w, cz, 3)); self.bin = p("in_b", np.zeros(w, np.float32))
        self.t1s = p("temb1_s", fc_init(rng, self.TEMB, w)); self.t1b = p("temb1_b_w", fc_init(rng, self.TEMB, w))
        self.cd = p("down_w", conv_init(rng, 2 * w, w, 3)); self.bd = p("down_b", np.zeros(2 * w, np.float32))
        self.m1 = p("mid1_w", conv_init(rng, 2 * w, 2 * w, 3)); self.bm1 = p("mid1_b", np.zeros(2 * w, np.float32))
        self.t2s = p("temb2_s", fc_init(rng, self.TEMB, 2 * w)); self.t2b = p("temb2_b_w", fc_init(rng, self.TEMB, 2 * w))
        self.m2 = p("mid2_w", conv_init(rng, 2 * w, 2 * w, 3)); self.bm2 = p("mid2_b", np.zeros(2 * w, np.float32))
        self.cu = p("up_w", (conv_init(rng, w, 2 * w, 4).transpose(1, 0, 2, 3)).copy()); self.bu = p("up_b", np.zeros(w, np.float32))
        self.cs = p("skip_w", conv_init(rng, w, 2 * w, 3)); self.bs = p("skip_b", np.zeros(w, np.float32))
        self.cout = p("out_w", conv_init(rng, cz, w, 3)); self.bout = p("out_b", np.zeros(cz, np.float32))

    def _film(self, h: Tensor, emb: Tensor, ws: Tensor, wb: Tensor) -> Tensor:
        # scale-and-shift conditioning; plain bias cannot modulate gain with t
        scale = ad.reshape(ad.add(ad.matmul(emb, ws), Tensor(np.float32(1.0))), (1, -1, 1, 1))
        shift = ad.reshape(ad.matmul(emb, wb), (1, -1, 1, 1))
        return ad.add(ad.mul(h, scale), shift)

    def __call__(self, z: Tensor, t: int) -> Tensor:
        if z.shape[1] != self.latent_channels:
            raise ValueError(f"denoiser: latent channels {z.shape[1]} != {self.latent_channels}")
        if z.shape[2] % 2 or z.shape[3] % 2:
            raise ValueError(f"denoiser: extents {z.shape[2:]} must be even")
        emb = Tensor(timestep_embedding(int(t), self.TEMB)[None])
        h1 = ad.gelu(self._film(ad.conv2d(z, self.cin, bias=self.bin, padding=1),
                                emb, self.t1s, self.t1b))
        h = ad.gelu(ad.conv2d(h1, self.cd, bias=self.bd, stride=2, padding=1, pad_mode="zero"))
        h = ad.gelu(self._film(ad.conv2d(h, self.m1, bias=self.bm1, padding=1),
                               emb, self.t2s, self.t2b))
        h = ad.gelu(ad.conv2d(h, self.m2, bias=self.bm2, padding=1))
        h = ad.gelu(ad.conv_transpose2d(h, self.cu, bias=self.bu, stride=2, padding=1))
        h = ad.gelu(ad.conv2d(ad.concat([h, h1], axis=1), self.cs, bias=self.bs, padding=1))
        return ad.conv2d(h, self.cout, bias=self.bout, padding=1)

    def copy(self) -> "Denoiser":
        dup = Denoiser(self.latent_channels, self.width, seed=0)
        dup.load_arrays(self.arrays())
        dup.trained = self.trained
        return dup


def train_denoiser(
    latents: np.ndarray,
    sched: NoiseSchedule,
    denoiser: Denoiser | None = None,
    steps: int = 1500,
    batch_size: int = 16,
    lr: float = 2e-3,
    holdout: float = 0.1,
    seed: int = 0,
    log=None,
) -> tuple[Denoiser, dict]:
    """epsilon-prediction training on standardized latents (N,c_z,h,w).

    The returned stats hold the held-out epsilon-MSE per element; the trivial
    zero predictor scores 1.0 on unit-variance noise.
    """
    if len(latents) == 0:
        raise ValueError("train_denoiser: empty dataset")
    den = denoiser or Denoiser(latent_channels=latents.shape[1], seed=seed)
    rng = np.random.default_rng(seed)
    n_hold = max(1, int(len(latents) * holdout)) if len(latents) > 1 else 0
    hold = latents[:n_hold] if n_hold else latents
    train = latents[n_hold:] if n_hold and len(latents) > n_hold else latents

    probe_rng = np.random.default_rng(seed + 1)
    probe_t = probe_rng.integers(1, sched.T + 1, size=len(hold))
    probe_eps = probe_rng.standard_normal(hold.shape).astype(np.float32)

    def holdout_mse() -> float:
        tot = 0.0
        with ad.no_grad():
            for i in range(len(hold)):
                zt = q_sample(hold[i:i + 1], int(probe_t[i]), probe_eps[i:i + 1], sched)
                pred = den(Tensor(zt), int(sched.parent_t[probe_t[i]]))
                tot += float(((pred.data - probe_eps[i:i + 1]) ** 2).mean())
        return tot / len(hold)

    init_mse = holdout_mse()
    opt = Adam(den.params(), lr=lr)
    for step in range(steps):
        idx = rng.integers(0, len(train), size=min(batch_size, len(train)))
        t = int(rng.integers(1, sched.T + 1))
        eps = rng.standard_normal((len(idx),) + train.shape[1:]).astype(np.float32)
        zt = q_sample(train[idx], t, eps, sched)
        with ad.Tape():
            pred = den(Tensor(zt), int(sched.parent_t[t]))
            loss = ad.smul(ad.sumsq(ad.sub(pred, Tensor(eps))), 1.0 / pred.size)
            grads = ad.backward(loss)
        opt.step(grads)
        if log is not None and step % 100 == 0:
            log({"step": step, "eps_mse": float(loss.data)})
    den.trained = True
    return den, {"init_mse": init_mse, "final_mse": holdout_mse()}
