"""Training drivers for the lifting networks and the comparator restorer.

Both lifting networks minimize a forward data-consistency term plus a
weighted inverse-reconstruction term; training asserts structural
invertibility periodically, and checkpoints can carry optimizer moments and
the RNG state so resumed runs continue the loss curve exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .codec import Codec
from .config import TrainConfig
from .data import PairedDataset
from .guide import Restorer
from .inn import LiftingNetwork, latent_inn_config, pixel_inn_config
from .nn import Adam

__all__ = ["train_pixelinn", "train_latentinn", "train_restorer", "TrainState"]

_ROUNDTRIP_EVERY = 100


@dataclass
class TrainState:
    """Optimizer and RNG snapshot enabling exact resume."""
    opt: Adam
    rng: np.random.Generator
    step: int = 0

    def arrays(self) -> dict[str, np.ndarray]:
        out = self.opt.state_arrays()
        out["_state.step"] = np.array([self.step], dtype=np.int64)
        return out

    def rng_state(self) -> dict:
        return self.rng.bit_generator.state

    def load(self, arrays: dict[str, np.ndarray], rng_state: dict | None) -> None:
        self.opt.load_state(arrays)
        self.step = int(arrays["_state.step"][0])
        if rng_state is not None:
            self.rng.bit_generator.state = rng_state


def _check_roundtrip(net: LiftingNetwork, x: np.ndarray, gamma: np.ndarray) -> None:
    with ad.no_grad():
        c, ds = net.forward(Tensor(x), Tensor(gamma))
        rec = net.inverse(c, ds, Tensor(gamma))
    err = float(np.abs(rec.data - x).max())
    if err > 1e-4:
        raise AssertionError(f"structural invertibility broken during training: {err:.2e}")


def _holdout_split(n: int, frac: float = 0.1) -> int:
    return max(1, int(n * frac)) if n > 1 else 0


def train_pixelinn(
    dataset: PairedDataset,
    cfg: TrainConfig = TrainConfig(),
    net: LiftingNetwork | None = None,
    steps: int | None = None,
    profile: str = "desk",
    seed: int = 0,
    state: TrainState | None = None,
    log=None,
) -> tuple[LiftingNetwork, dict, TrainState]:
    """Fit the pixel-domain lifting network on (clean, degraded, embedding)
    triples; the degraded target sits at the coarse output's resolution."""
    if len(dataset) == 0:
        raise ValueError("train_pixelinn: empty dataset")
    if dataset.embeddings is None:
        raise ValueError("train_pixelinn: dataset has no degradation embeddings")
    net = net or LiftingNetwork(pixel_inn_config(profile), seed=seed)
    div = 2 ** net.cfg.levels
    hx, hy = dataset.clean.shape[2], dataset.degraded.shape[2]
    if hx != hy * div:
        raise ValueError(
            f"train_pixelinn: clean extent {hx} != degraded extent {hy} * 2^levels {div}")
    steps = cfg.steps_pixelinn if steps is None else steps

    n_hold = _holdout_split(len(dataset))
    hold = dataset.subset(np.arange(n_hold)) if n_hold else dataset
    train = dataset.subset(np.arange(n_hold, len(dataset))) if n_hold else dataset

    def losses(ds: PairedDataset) -> tuple[float, float]:
        lf = li = 0.0
        with ad.no_grad():
            for k in range(0, len(ds), 8):
                x = Tensor(ds.clean[k:k + 8])
                y = Tensor(ds.degraded[k:k + 8])
                g = Tensor(ds.embeddings[k:k + 8])
                xc, xds = net.forward(x, g)
                xinv = net.inverse(y, xds, g)
                lf += float(((xc.data - y.data) ** 2).sum(axis=(1, 2, 3)).sum())
                li += float(((xinv.data - x.data) ** 2).sum(axis=(1, 2, 3)).sum())
        return lf / len(ds), li / len(ds)

    init_forw, init_inv = losses(hold)
    if state is None:
        state = TrainState(opt=Adam(net.params(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2),
                           rng=np.random.default_rng(seed))
    lam = cfg.lambda_inv
    for _ in range(steps):
        idx = state.rng.integers(0, len(train), size=min(cfg.batch_size, len(train)))
        x = Tensor(train.clean[idx])
        y = Tensor(train.degraded[idx])
        g = Tensor(train.embeddings[idx])
        with ad.Tape():
            xc, xds = net.forward(x, g)
            l_forw = ad.smul(ad.sumsq(ad.sub(xc, y)), 1.0 / len(idx))
            xinv = net.inverse(y, xds, g)
            l_inv = ad.smul(ad.sumsq(ad.sub(xinv, x)), 1.0 / len(idx))
            loss = ad.add(l_forw, ad.smul(l_inv, lam)) if lam else l_forw
            grads = ad.backward(loss)
        state.opt.step(grads)
        state.step += 1
        if log is not None and state.step % 25 == 0:
            log({"step": state.step, "l_forw": float(l_forw.data), "l_inv": float(l_inv.data)})
        if state.step % _ROUNDTRIP_EVERY == 0:
            _check_roundtrip(net, train.clean[idx[:1]], train.embeddings[idx[:1]])
    final_forw, final_inv = losses(hold)
    stats = {"init_forw": init_forw, "init_inv": init_inv,
             "final_forw": final_forw, "final_inv": final_inv}
    return net, stats, state


def train_latentinn(
    dataset: PairedDataset,
    codec: Codec,
    cfg: TrainConfig = TrainConfig(),
    net: LiftingNetwork | None = None,
    steps: int | None = None,
    profile: str = "desk",
    seed: int = 0,
    state: TrainState | None = None,
    log=None,
) -> tuple[LiftingNetwork, dict, TrainState]:
    """Fit the latent-domain lifting network: the coarse latent chases the
    encoded measurement, the decoded inverse chases the clean image."""
    if len(dataset) == 0:
        raise ValueError("train_latentinn: empty dataset")
    if dataset.embeddings is None:
        raise ValueError("train_latentinn: dataset has no degradation embeddings")
    if not codec.trained:
        raise ValueError("train_latentinn: codec is not trained")
    net = net or LiftingNetwork(latent_inn_config(profile), seed=seed)
    steps = cfg.steps_latentinn if steps is None else steps

    with ad.no_grad():
        zx = np.concatenate([codec.encode(Tensor(dataset.clean[k:k + 16])).data
                             for k in range(0, len(dataset), 16)])
        zy = np.concatenate([codec.encode(Tensor(dataset.upsampled[k:k + 16])).data
                             for k in range(0, len(dataset), 16)])

    n_hold = _holdout_split(len(dataset))
    sl_h, sl_t = np.arange(n_hold), np.arange(n_hold, len(dataset))
    if n_hold == 0:
        sl_h = sl_t = np.arange(len(dataset))

    def losses(idx) -> tuple[float, float]:
        lf = li = 0.0
        with ad.no_grad():
            for k in range(0, len(idx), 8):
                sel = idx[k:k + 8]
                g = Tensor(dataset.embeddings[sel])
                zc, zds = net.forward(Tensor(zx[sel]), g)
                zinv = net.inverse(Tensor(zy[sel]), zds, g)
                dec = codec.decode(zinv)
                lf += float(((zc.data - zy[sel]) ** 2).sum())
                li += float(((dec.data - dataset.clean[sel]) ** 2).sum())
        return lf / len(idx), li / len(idx)

    init_forw, init_inv = losses(sl_h)
    if state is None:
        state = TrainState(opt=Adam(net.params(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2),
                           rng=np.random.default_rng(seed))
    lam, tvw = cfg.lambda_inv, cfg.tv_weight
    for _ in range(steps):
        idx = sl_t[state.rng.integers(0, len(sl_t), size=min(cfg.batch_size, len(sl_t)))]
        g = Tensor(dataset.embeddings[idx])
        zyb = Tensor(zy[idx])
        with ad.Tape():
            zc, zds = net.forward(Tensor(zx[idx]), g)
            l_forw = ad.smul(ad.sumsq(ad.sub(zc, zyb)), 1.0 / len(idx))
            loss = l_forw
            l_inv = None
            dec = None
            if lam or tvw:
                zinv = net.inverse(zyb, zds, g)
                dec = codec.decode_raw(zinv)
            if lam:
                l_inv = ad.smul(ad.sumsq(ad.sub(dec, Tensor(dataset.clean[idx]))), 1.0 / len(idx))
                loss = ad.add(loss, ad.smul(l_inv, lam))
            if tvw:
                loss = ad.add(loss, ad.smul(_tv(dec), tvw / len(idx)))
            grads = ad.backward(loss, wrt=list(net.params().values()))
        state.opt.step(grads)
        state.step += 1
        if log is not None and state.step % 25 == 0:
            log({"step": state.step, "l_forw": float(l_forw.data),
                 "l_inv": None if l_inv is None else float(l_inv.data)})
        if state.step % _ROUNDTRIP_EVERY == 0:
            _check_roundtrip(net, zx[idx[:1]], dataset.embeddings[idx[:1]])
    final_forw, final_inv = losses(sl_h)
    stats = {"init_forw": init_forw, "init_inv": init_inv,
             "final_forw": final_forw, "final_inv": final_inv}
    return net, stats, state


_DX = Tensor(np.array([[[[1.0, -1.0]]]], dtype=np.float32))
_DY = Tensor(np.array([[[[1.0], [-1.0]]]], dtype=np.float32))


def _tv(img: Tensor) -> Tensor:
    """Anisotropic total variation via |d/dx| + |d/dy| (abs as paired relu)."""
    def abssum(d):
        return ad.reduce_sum(ad.add(ad.relu(d), ad.relu(ad.smul(d, -1.0))))
    return ad.add(abssum(ad.conv2d(img, _DX)), abssum(ad.conv2d(img, _DY)))


def train_restorer(
    dataset: PairedDataset,
    cfg: TrainConfig = TrainConfig(),
    net: Restorer | None = None,
    steps: int | None = None,
    lr: float = 1e-3,
    seed: int = 0,
    log=None,
) -> tuple[Restorer, dict]:
    """MSE-fit the comparator restoration net on (upsampled degraded, clean)."""
    if len(dataset) == 0:
        raise ValueError("train_restorer: empty dataset")
    net = net or Restorer(seed=seed)
    steps = cfg.steps_restorer if steps is None else steps
    rng = np.random.default_rng(seed)
    n_hold = _holdout_split(len(dataset))
    hi = np.arange(n_hold) if n_hold else np.arange(len(dataset))
    ti = np.arange(n_hold, len(dataset)) if n_hold else np.arange(len(dataset))

    def holdout_mse() -> float:
        with ad.no_grad():
            out = net(Tensor(dataset.upsampled[hi]))
        return float(((out.data - dataset.clean[hi]) ** 2).mean())

    init = holdout_mse()
    opt = Adam(net.params(), lr=lr, beta1=cfg.beta1, beta2=cfg.beta2)
    for step in range(steps):
        idx = ti[rng.integers(0, len(ti), size=min(cfg.batch_size, len(ti)))]
        with ad.Tape():
            out = net(Tensor(dataset.upsampled[idx]))
            loss = ad.smul(ad.sumsq(ad.sub(out, Tensor(dataset.clean[idx]))), 1.0 / out.size)
            grads = ad.backward(loss)
        opt.step(grads)
        if log is not None and step % 50 == 0:
            log({"step": step, "mse": float(loss.data)})
    net.trained = True
    return net, {"init_mse": init, "final_mse": holdout_mse()}
