"""Builds (and caches) the shared desk-scale model suite used by the slow
tests and the acceptance module. Training is deterministic, so cached
checkpoints are equivalent to a fresh run; set LIFTDIFF_TEST_REBUILD=1 to
force a rebuild."""

import json
import os
import time
from pathlib import Path

import numpy as np

from liftdiff import autodiff as ad
from liftdiff.autodiff import Tensor
from liftdiff.checkpoint import load_model, save_model
from liftdiff.codec import train_codec
from liftdiff.config import TrainConfig
from liftdiff.data import build_pairs, estimator_pairs
from liftdiff.degrade import train_estimator
from liftdiff.diffusion import build_schedule, train_denoiser
from liftdiff.guide import ModelBundle
from liftdiff.synth import synth_batch
from liftdiff.train import train_latentinn, train_pixelinn, train_restorer

CACHE = Path(__file__).parent / ".suite_cache"
DESK = TrainConfig(lr=1e-3)  # desk-budget learning rate; other fields default
SEED_CLEAN = 100
SIZE = 64

_PIECES = ("estimator", "codec", "denoiser", "pixelinn", "latentinn", "restorer")


def _complete() -> bool:
    return all((CACHE / f"{p}.ckpt").exists() for p in _PIECES) and (CACHE / "meta.json").exists()


def build_suite(force: bool = False) -> dict:
    force = force or os.environ.get("LIFTDIFF_TEST_REBUILD") == "1"
    CACHE.mkdir(exist_ok=True)
    if _complete() and not force:
        return load_suite()

    meta: dict = {"durations": {}, "stats": {}}
    clean = synth_batch(SEED_CLEAN, DESK.dataset_size, size=SIZE)

    t0 = time.time()
    ys, targets = estimator_pairs(seed=21, count=DESK.estimator_pairs, size=SIZE)
    est, st = train_estimator(ys, targets, steps=DESK.steps_estimator, lr=2e-3,
                              batch_size=32, seed=0)
    meta["durations"]["estimator"] = time.time() - t0
    meta["stats"]["estimator"] = st
    save_model(CACHE / "estimator.ckpt", est)

    t0 = time.time()
    codec, st = train_codec(clean, steps=DESK.steps_codec, lr=2e-3, seed=0)
    meta["durations"]["codec"] = time.time() - t0
    meta["stats"]["codec"] = st
    save_model(CACHE / "codec.ckpt", codec)

    t0 = time.time()
    with ad.no_grad():
        lat = np.concatenate([codec.encode(Tensor(clean[k:k + 16])).data
                              for k in range(0, len(clean), 16)])
    lat_std = np.stack([codec.stats.to_std(z) for z in lat])
    sched = build_schedule()
    den, st = train_denoiser(lat_std, sched, steps=DESK.steps_denoiser, lr=2e-3, seed=0)
    meta["durations"]["denoiser"] = time.time() - t0
    meta["stats"]["denoiser"] = st
    save_model(CACHE / "denoiser.ckpt", den)

    pairs = build_pairs(clean, seed=7)
    pairs.embed_with(est)

    t0 = time.time()
    pix, st, _ = train_pixelinn(pairs, DESK, seed=0)
    meta["durations"]["pixelinn"] = time.time() - t0
    meta["stats"]["pixelinn"] = st
    save_model(CACHE / "pixelinn.ckpt", pix)

    t0 = time.time()
    latn, st, _ = train_latentinn(pairs, codec, DESK, seed=0)
    meta["durations"]["latentinn"] = time.time() - t0
    meta["stats"]["latentinn"] = st
    save_model(CACHE / "latentinn.ckpt", latn)

    t0 = time.time()
    rest, st = train_restorer(pairs, DESK, seed=0)
    meta["durations"]["restorer"] = time.time() - t0
    meta["stats"]["restorer"] = st
    save_model(CACHE / "restorer.ckpt", rest)

    (CACHE / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    return load_suite()


def load_suite() -> dict:
    est, _, _ = load_model(CACHE / "estimator.ckpt")
    codec, _, _ = load_model(CACHE / "codec.ckpt")
    den, _, _ = load_model(CACHE / "denoiser.ckpt")
    pix, _, _ = load_model(CACHE / "pixelinn.ckpt")
    latn, _, _ = load_model(CACHE / "latentinn.ckpt")
    rest, _, _ = load_model(CACHE / "restorer.ckpt")
    meta = json.loads((CACHE / "meta.json").read_text())
    bundle = ModelBundle(codec=codec, denoiser=den, schedule=build_schedule(),
                         estimator=est, pixel_inn=pix, latent_inn=latn, restorer=rest)
    return {"bundle": bundle, "meta": meta}


if __name__ == "__main__":
    import sys
    suite = build_suite(force="--force" in sys.argv)
    print(json.dumps(suite["meta"], indent=1, sort_keys=True))
