"""In-memory dataset assembly for training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .degrade import DegradationEstimator, DegradationParams, degrade, estimate_embedding
from .images import bicubic_resize
from .synth import synth_batch

__all__ = ["sample_params", "PairedDataset", "build_pairs", "estimator_pairs"]

# intervals used when degrading lifting-network training data
TRAIN_RANGES = dict(sigma=(3.0, 9.0), delta=(5.0, 50.0), q=(30, 80))
# wider intervals for the embedding regressor so probes near the range
# edges (q=100, delta=0) stay in-support
ESTIMATOR_RANGES = dict(sigma=(0.0, 10.0), delta=(0.0, 60.0), q=(20, 100))


def sample_params(rng: np.random.Generator, r: int = 4, ranges=None) -> DegradationParams:
    ranges = ranges or TRAIN_RANGES
    return DegradationParams(
        sigma=float(rng.uniform(*ranges["sigma"])),
        delta=float(rng.uniform(*ranges["delta"])),
        q=int(rng.integers(ranges["q"][0], ranges["q"][1] + 1)),
        r=r,
    )


@dataclass
class PairedDataset:
    clean: np.ndarray        # (N,1,H,W)
    degraded: np.ndarray     # (N,1,H/r,W/r)
    upsampled: np.ndarray    # (N,1,H,W), degraded resized back to clean extents
    params: list[DegradationParams]
    embeddings: np.ndarray | None = None   # (N, embed_dim) once an estimator ran

    def __len__(self) -> int:
        return len(self.clean)

    def embed_with(self, estimator: DegradationEstimator) -> None:
        self.embeddings = np.stack(
            [estimate_embedding(y, estimator) for y in self.degraded])

    def subset(self, idx) -> "PairedDataset":
        emb = self.embeddings[idx] if self.embeddings is not None else None
        return PairedDataset(self.clean[idx], self.degraded[idx], self.upsampled[idx],
                             [self.params[i] for i in idx], emb)


def build_pairs(
    clean: np.ndarray,
    seed: int,
    params: DegradationParams | None = None,
    r: int = 4,
    ranges=None,
) -> PairedDataset:
    """Degrade every clean image; fixed params if given, else sampled per image."""
    rng = np.random.default_rng(seed)
    h, w = clean.shape[2:]
    ys, ups, plist = [], [], []
    for i, img in enumerate(clean):
        p = params or sample_params(rng, r=r, ranges=ranges)
        y = degrade(img, p, seed=int(rng.integers(0, 2**31)))
        ys.append(y)
        ups.append(bicubic_resize(y, (h, w)))
        plist.append(p)
    return PairedDataset(clean.astype(np.float32), np.stack(ys), np.stack(ups), plist)


def estimator_pairs(seed: int, count: int, size: int = 64, r: int = 4):
    """(degraded images, normalized param targets) for regressor training."""
    clean = synth_batch(seed, count, size=size)
    ds = build_pairs(clean, seed=seed + 1, r=r, ranges=ESTIMATOR_RANGES)
    targets = np.stack([p.normalized() for p in ds.params])
    return ds.degraded, targets
