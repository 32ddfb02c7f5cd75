"""Guided latent-diffusion sampling for blind restoration.

One shared reverse-diffusion loop hosts six guidance modes:

* ``unguided``   plain ancestral sampling,
* ``pixelinn``   gradient guidance through the pixel-domain lifting network
                 (data-consistency + perceptual-feature losses), with
                 re-encoding regularization and on-the-fly refinement,
* ``latentinn``  interpolation guidance entirely in latent space,
* ``ldps`` / ``pgdiff`` / ``hgs``  comparator gradient rules (latent
                 data-consistency, MSE-restorer target, Sobel high-pass).

Tiled sampling (arbitrary resolution) denoises overlapping latent tiles and
merges the clean estimates under a Gaussian mask before full-latent guidance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .codec import Codec, reencode_regularize
from .degrade import DegradationEstimator, estimate_embedding
from .diffusion import (Denoiser, NoiseSchedule, predict_z0, reverse_step,
                        strided_schedule)
from .images import bicubic_resize
from .inn import LiftingNetwork
from .nn import ParamModule, conv_init

__all__ = [
    "SamplerConfig",
    "ModelBundle",
    "PerceptualProxy",
    "proxy_distance",
    "sobel_features",
    "Restorer",
    "refine",
    "gaussian_mask",
    "tile_layout",
    "merge_tiles",
    "restore",
    "MODES",
]

MODES = ("unguided", "pixelinn", "latentinn", "ldps", "pgdiff", "hgs")
INN_MODES = ("pixelinn", "latentinn")


@dataclass
class SamplerConfig:
    mode: str = "unguided"
    steps: int = 50
    zeta: float = 0.0
    alpha_forw: float = 0.1
    alpha_inv: float = 1.0
    alpha: float = 0.08
    regularize_steps: int = 15
    refine_until: int | None = None      # refine while step index > this; None -> steps//2
    refine_lr: float = 0.0
    upscale: int = 4
    tile: tuple[int, int] | None = None  # latent-space tile extents
    tile_stride: tuple[int, int] | None = None
    reverse_uses_regularized: bool | None = None  # None -> untiled True, tiled False
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sampler mode {self.mode!r}; choose from {MODES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if self.zeta < 0:
            raise ValueError(f"zeta {self.zeta} must be >= 0")
        if self.regularize_steps > self.steps:
            raise ValueError(f"regularize_steps {self.regularize_steps} > steps {self.steps}")


@dataclass
class ModelBundle:
    codec: Codec
    denoiser: Denoiser
    schedule: NoiseSchedule
    estimator: DegradationEstimator
    pixel_inn: LiftingNetwork | None = None
    latent_inn: LiftingNetwork | None = None
    restorer: "Restorer | None" = None


# ---------------------------------------------------------------------------
# perceptual proxy, Sobel features, comparator restorer

PROXY_SEED = 2177  # repo-fixed; the proxy must be identical across runs


class PerceptualProxy:
    """Frozen multi-scale random conv features for structure comparison."""

    def __init__(self, channels: int = 32, scales: int = 3, seed: int = PROXY_SEED):
        rng = np.random.default_rng(seed)
        self.weights = [Tensor(conv_init(rng, channels, 1, 3) * 3.0)
                        for _ in range(scales)]

    def features(self, x: Tensor) -> list[Tensor]:
        feats = []
        h, w = x.shape[2], x.shape[3]
        for s, wt in enumerate(self.weights):
            cur = x if s == 0 else ad.resize_bilinear(x, (max(h >> s, 4), max(w >> s, 4)))
            feats.append(ad.tanh(ad.conv2d(cur, wt, padding=1, pad_mode="reflect")))
        return feats

    def distance(self, a: Tensor, b: Tensor) -> Tensor:
        total = None
        for fa, fb in zip(self.features(a), self.features(b)):
            term = ad.smul(ad.sumsq(ad.sub(fa, fb)), 1.0 / fa.size)
            total = term if total is None else ad.add(total, term)
        return total


_PROXY_SINGLETON: PerceptualProxy | None = None


def _proxy() -> PerceptualProxy:
    global _PROXY_SINGLETON
    if _PROXY_SINGLETON is None:
        _PROXY_SINGLETON = PerceptualProxy()
    return _PROXY_SINGLETON


def proxy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Scalar perceptual-proxy distance between two (C,H,W) images in [0,1]."""
    with ad.no_grad():
        d = _proxy().distance(Tensor(a[None]), Tensor(b[None]))
    return float(d.data)


_SX = np.array([[1, 0, -1], [2, 0, -2], [1, 0, -1]], dtype=np.float32) / 4.0
_SOBEL = Tensor(np.stack([_SX, _SX.T])[:, None])


def sobel_features(x: Tensor) -> Tensor:
    """Horizontal/vertical Sobel responses stacked on channels."""
    return ad.conv2d(x, _SOBEL, padding=1, pad_mode="reflect")


class Restorer(ParamModule):
    """Small MSE restoration net (upsampled degraded -> clean estimate);
    the guidance target used by the pgdiff comparator."""

    def __init__(self, width: int = 24, seed: int = 0):
        super().__init__()
        self.width = width
        self.trained = False
        rng = np.random.default_rng(seed)
        p = self.add_param
        self.c1 = p("c1_w", conv_init(rng, width, 1, 3)); self.b1 = p("c1_b", np.zeros(width, np.float32))
        self.c2 = p("c2_w", conv_init(rng, width, width, 3)); self.b2 = p("c2_b", np.zeros(width, np.float32))
        self.c3 = p("c3_w", conv_init(rng, width, width, 3)); self.b3 = p("c3_b", np.zeros(width, np.float32))
        self.c4 = p("c4_w", conv_init(rng, 1, width, 3)); self.b4 = p("c4_b", np.zeros(1, np.float32))

    def __call__(self, y_up: Tensor) -> Tensor:
        h = ad.gelu(ad.conv2d(y_up, self.c1, bias=self.b1, padding=1))
        h = ad.gelu(ad.conv2d(h, self.c2, bias=self.b2, padding=1))
        h = ad.gelu(ad.conv2d(h, self.c3, bias=self.b3, padding=1))
        return ad.add(y_up, ad.conv2d(h, self.c4, bias=self.b4, padding=1))


def refine(params: dict[str, Tensor], grads, lr: float) -> None:
    """One plain gradient step on a run-private parameter set."""
    if lr == 0.0:
        return
    for p in params.values():
        g = grads.get(p)
        if g is not None:
            p.data = p.data - np.float32(lr) * g


# ---------------------------------------------------------------------------
# tiling


def tile_layout(extent: int, tile: int, stride: int) -> list[int]:
    """Start offsets covering [0, extent) with the last tile clamped flush."""
    if tile > extent:
        raise ValueError(f"tile extent {tile} exceeds latent extent {extent}")
    if stride < 1:
        raise ValueError("tile stride must be >= 1")
    starts = list(range(0, extent - tile + 1, stride))
    if starts[-1] + tile < extent:
        starts.append(extent - tile)
    return starts


def gaussian_mask(th: int, tw: int, floor: float = 1e-3) -> np.ndarray:
    """Isotropic Gaussian tile weights, peak 1 at the center, floored."""
    sigma = min(th, tw) / 4.0
    iy = np.arange(th) - (th - 1) / 2.0
    ix = np.arange(tw) - (tw - 1) / 2.0
    g = np.exp(-(iy[:, None] ** 2 + ix[None, :] ** 2) / (2.0 * sigma ** 2))
    return np.maximum(g, floor).astype(np.float32)[None, None]


def merge_tiles(tiles, positions, mask: np.ndarray, shape) -> np.ndarray:
    """Mask-weighted average of overlapping tiles into one (B,C,H,W) array."""
    num = np.zeros(shape, dtype=np.float32)
    den = np.zeros(shape, dtype=np.float32)
    for tile, (r, c) in zip(tiles, positions):
        th, tw = tile.shape[2], tile.shape[3]
        num[:, :, r:r + th, c:c + tw] += tile * mask
        den[:, :, r:r + th, c:c + tw] += mask
    if (den <= 0).any():
        raise ValueError("tile layout does not cover the latent")
    return num / den


# ---------------------------------------------------------------------------
# the sampler


@dataclass
class StepRecord:
    step: int
    parent_t: int
    l_forw: float | None = None
    l_inv: float | None = None
    residual: float | None = None

    def to_dict(self) -> dict:
        return {"step": self.step, "parent_t": self.parent_t, "l_forw": self.l_forw,
                "l_inv": self.l_inv, "residual": self.residual}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise RuntimeError(msg)


def restore(y: np.ndarray, models: ModelBundle, cfg: SamplerConfig):
    """Run one guided sampling trajectory; returns (image (1,H,W), trace).

    ``y`` is the degraded observation at its native resolution (1, H/r, W/r);
    the restored output has extents r times larger.
    """
    mode = cfg.mode
    codec, den, est = models.codec, models.denoiser, models.estimator
    _require(codec.trained and codec.stats is not None, "codec is not trained")
    _require(den.trained, "denoiser is not trained")
    _require(est.trained, "degradation estimator is not trained")
    if y.ndim != 3 or y.shape[0] != 1:
        raise ValueError(f"restore: expected grayscale (1,h,w) observation, got {y.shape}")

    r = cfg.upscale
    hy, wy = y.shape[1], y.shape[2]
    H, W = hy * r, wy * r
    f = codec.cfg.down_factor
    if H % f or W % f:
        raise ValueError(f"restore: output extents {(H, W)} not divisible by codec factor {f}")
    lh, lw = H // f, W // f
    cz = codec.cfg.latent_channels
    stats = codec.stats

    pixel_inn = latent_inn = None
    if mode in ("pixelinn", "ldps"):
        _require(models.pixel_inn is not None, f"mode {mode!r} needs a pixel lifting network")
        pixel_inn = models.pixel_inn
        if r != 2 ** pixel_inn.cfg.levels:
            raise ValueError(
                f"restore: upscale {r} != 2^levels of the pixel lifting network")
    if mode == "latentinn":
        _require(models.latent_inn is not None, "mode 'latentinn' needs a latent lifting network")
        latent_inn = models.latent_inn
    if mode == "pgdiff":
        _require(models.restorer is not None and models.restorer.trained,
                 "mode 'pgdiff' needs a trained restorer")
    if cfg.tile is not None and mode != "latentinn":
        raise ValueError("tiled sampling is defined for mode 'latentinn'")

    refine_until = cfg.steps // 2 if cfg.refine_until is None else cfg.refine_until
    refining_run = cfg.refine_lr > 0 and mode in INN_MODES
    if refining_run and mode == "pixelinn":
        pixel_inn = pixel_inn.copy()  # the shared checkpoint is never mutated
    if refining_run and mode == "latentinn":
        latent_inn = latent_inn.copy()

    gamma = Tensor(estimate_embedding(y, est)[None])
    y_t = Tensor(y[None])
    y_up = bicubic_resize(y, (H, W))
    y_up_t = Tensor(np.clip(y_up, 0.0, 1.0)[None])

    zy_raw = None
    if mode == "latentinn":
        with ad.no_grad():
            zy_raw = codec.encode(y_up_t).detach()
    fir_target = None
    if mode == "pgdiff":
        with ad.no_grad():
            fir_target = models.restorer(y_up_t).detach()
    sobel_y = None
    if mode == "hgs":
        with ad.no_grad():
            sobel_y = sobel_features(y_up_t).detach()

    sub = strided_schedule(models.schedule, cfg.steps)
    rng = np.random.default_rng(cfg.seed)
    z = rng.standard_normal((1, cz, lh, lw)).astype(np.float32)

    tiling = None
    if cfg.tile is not None:
        th, tw = cfg.tile
        if th % 2 or tw % 2:
            raise ValueError(f"tile extents {cfg.tile} must be even for the denoiser")
        sh, sw = cfg.tile_stride or (max(th // 2, 1), max(tw // 2, 1))
        rows = tile_layout(lh, th, sh)
        cols = tile_layout(lw, tw, sw)
        positions = [(rr, cc) for rr in rows for cc in cols]
        tiling = (positions, gaussian_mask(th, tw), (th, tw))

    use_reg_basis = cfg.reverse_uses_regularized
    if use_reg_basis is None:
        use_reg_basis = tiling is None

    trace: list[StepRecord] = []
    for i in range(cfg.steps, 0, -1):
        t_parent = int(sub.parent_t[i])
        if tiling is None:
            with ad.no_grad():
                eps = den(Tensor(z), t_parent).data
            z0 = predict_z0(z, i, eps, sub)
        else:
            positions, mask, (th, tw) = tiling
            if len(positions) == 1 and (th, tw) == (lh, lw):
                with ad.no_grad():
                    eps = den(Tensor(z), t_parent).data
                z0 = predict_z0(z, i, eps, sub)
            else:
                tiles = []
                for (rr, cc) in positions:
                    crop = z[:, :, rr:rr + th, cc:cc + tw]
                    with ad.no_grad():
                        eps_p = den(Tensor(np.ascontiguousarray(crop)), t_parent).data
                    tiles.append(predict_z0(crop, i, eps_p, sub))
                z0 = merge_tiles(tiles, positions, mask, z.shape)

        refining_now = refining_run and i > refine_until
        rec = StepRecord(step=i, parent_t=t_parent)
        z_tilde = _guide(mode, z0, cfg, codec, stats, pixel_inn, latent_inn,
                         gamma, y_t, y_up_t, zy_raw, fir_target, sobel_y,
                         refining_now, rec)

        regularize = mode != "unguided" and i > cfg.steps - cfg.regularize_steps
        if regularize and use_reg_basis:
            with ad.no_grad():
                raw = Tensor(stats.from_std(z_tilde[0])[None])
                basis = stats.to_std(reencode_regularize(codec, raw).data[0])[None]
        else:
            basis = z_tilde

        noise = rng.standard_normal(z.shape).astype(np.float32) if i > 1 else None
        z = reverse_step(z, basis, i, sub, noise)
        trace.append(rec)

    with ad.no_grad():
        out = codec.decode(Tensor(stats.from_std(z[0])[None])).data[0]
    return out, [t.to_dict() for t in trace]


def _guide(mode, z0, cfg, codec, stats, pixel_inn, latent_inn, gamma,
           y_t, y_up_t, zy_raw, fir_target, sobel_y, refining_now, rec):
    """One guidance update: z0 (standardized ndarray) -> z-tilde."""
    if mode == "unguided":
        return z0

    if mode == "latentinn":
        z0_raw = Tensor(stats.from_std(z0[0])[None])
        if refining_now:
            with ad.Tape():
                zc, zds = latent_inn.forward(z0_raw, gamma)
                lf = ad.sumsq(ad.sub(zc, zy_raw))
                with ad.no_grad():
                    zinv = latent_inn.inverse(zy_raw, zds, gamma)
                grads = ad.backward(lf, wrt=list(latent_inn.params().values()))
            refine(latent_inn.params(), grads, cfg.refine_lr)
        else:
            with ad.no_grad():
                zc, zds = latent_inn.forward(z0_raw, gamma)
                lf = ad.sumsq(ad.sub(zc, zy_raw))
                zinv = latent_inn.inverse(zy_raw, zds, gamma)
        zinv_std = stats.to_std(zinv.data[0])[None]
        rec.residual = float(lf.data)
        rec.l_forw = float(lf.data)
        return ((1.0 - cfg.alpha) * z0 + cfg.alpha * zinv_std).astype(np.float32)

    # gradient modes share the decode-through-latent graph
    with ad.Tape():
        z0t = Tensor(z0, requires_grad=True)
        x0 = codec.decode(stats.from_std_t(z0t))
        if mode in ("pixelinn", "ldps"):
            xc, xds = pixel_inn.forward(x0, gamma)
            lf = ad.sumsq(ad.sub(xc, y_t))
            rec.l_forw = rec.residual = float(lf.data)
            if mode == "pixelinn":
                xinv = pixel_inn.inverse(y_t, xds, gamma)
                li = _proxy().distance(xinv, x0)
                rec.l_inv = float(li.data)
                loss = ad.add(ad.smul(lf, cfg.alpha_forw), ad.smul(li, cfg.alpha_inv))
            else:
                loss = lf
        elif mode == "pgdiff":
            loss = ad.sumsq(ad.sub(x0, fir_target))
            rec.residual = float(loss.data)
        else:  # hgs
            loss = ad.sumsq(ad.sub(sobel_y, sobel_features(x0)))
            rec.residual = float(loss.data)
        gz = ad.backward(loss, retain_graph=refining_now and mode == "pixelinn", wrt=[z0t])
        if refining_now and mode == "pixelinn":
            gp = ad.backward(lf, wrt=list(pixel_inn.params().values()))
            refine(pixel_inn.params(), gp, cfg.refine_lr)
    return (z0 - cfg.zeta * gz[z0t]).astype(np.float32)
