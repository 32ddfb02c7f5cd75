"""Run configuration: defaults, JSON loading with strict key checking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

__all__ = ["TrainConfig", "DiffusionConfig", "SamplerDefaults", "RunConfig",
           "default_config", "load_config"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5              # published optimizer settings
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 8
    lambda_inv: float = 1.0
    tv_weight: float = 0.0        # optional total-variation term, off by default
    steps_pixelinn: int = 350
    steps_latentinn: int = 300
    steps_codec: int = 1200
    steps_denoiser: int = 1500
    steps_estimator: int = 1200
    steps_restorer: int = 500
    dataset_size: int = 240
    estimator_pairs: int = 1500
    image_size: int = 64


@dataclass(frozen=True)
class DiffusionConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    steps: int = 50               # inference steps (evenly strided)


@dataclass(frozen=True)
class SamplerDefaults:
    alpha_forw: float = 0.1       # loss weights at their published defaults
    alpha_inv: float = 1.0
    alpha: float = 0.08           # latent interpolation strength
    zeta_pixelinn: float = 0.15   # gradient step sizes from the one-time sweep
    zeta_ldps: float = 0.3
    zeta_pgdiff: float = 1.0
    zeta_hgs: float = 1.0
    regularize_steps: int = 15
    refine_lr: float = 2e-4
    upscale: int = 4


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    inn_profile: str = "desk"
    train: TrainConfig = field(default_factory=TrainConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    sampler: SamplerDefaults = field(default_factory=SamplerDefaults)

    def to_dict(self) -> dict:
        return asdict(self)


def default_config() -> RunConfig:
    return RunConfig()


def _merge(section_cls, defaults, overrides: dict, path: str):
    known = {f for f in defaults.__dataclass_fields__}
    unknown = set(overrides) - known
    if unknown:
        raise KeyError(f"unknown config key(s) under {path!r}: {sorted(unknown)}")
    return replace(defaults, **overrides)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, overlaid by a JSON file and/or a dict; unknown keys are errors."""
    cfg = default_config()
    raw: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
    if overrides:
        for k, v in overrides.items():
            if isinstance(v, dict) and isinstance(raw.get(k), dict):
                raw[k].update(v)
            else:
                raw[k] = v
    known_top = {"seed", "inn_profile", "train", "diffusion", "sampler"}
    unknown = set(raw) - known_top
    if unknown:
        raise KeyError(f"unknown config key(s): {sorted(unknown)}")
    if "train" in raw:
        cfg = replace(cfg, train=_merge(TrainConfig, cfg.train, raw["train"], "train"))
    if "diffusion" in raw:
        cfg = replace(cfg, diffusion=_merge(DiffusionConfig, cfg.diffusion,
                                            raw["diffusion"], "diffusion"))
    if "sampler" in raw:
        cfg = replace(cfg, sampler=_merge(SamplerDefaults, cfg.sampler,
                                          raw["sampler"], "sampler"))
    if "seed" in raw:
        cfg = replace(cfg, seed=int(raw["seed"]))
    if "inn_profile" in raw:
        cfg = replace(cfg, inn_profile=str(raw["inn_profile"]))
    return cfg
