"""Binary checkpoint format and model (de)serialization.

Layout (all little-endian):

    bytes 0-3   magic "LDGO"
    u16         format version (currently 1)
    u16         kind length, then kind bytes (utf-8)
    u32         metadata length, then canonical JSON metadata
    u32         directory length, then canonical JSON directory:
                [{"name","dtype","shape","offset","nbytes"}, ...] sorted by name
    payload     raw tensor bytes at the listed offsets

Offsets are relative to the payload start, ascending and non-overlapping;
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["save_checkpoint", "load_checkpoint", "save_model", "load_model"]

MAGIC = b"LDGO"
VERSION = 1


def _canon(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    directory = []
    payload = bytearray()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype not in (np.float32, np.int64):
            raise ValueError(f"checkpoint tensor {name!r}: unsupported dtype {arr.dtype}")
        dtype = "<f4" if arr.dtype == np.float32 else "<i8"
        raw = arr.astype(dtype).tobytes()
        directory.append({"name": name, "dtype": dtype, "shape": list(arr.shape),
                          "offset": len(payload), "nbytes": len(raw)})
        payload.extend(raw)
    kind_b = kind.encode()
    meta_b = _canon(meta)
    dir_b = _canon(directory)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    blob += struct.pack("<H", len(kind_b)) + kind_b
    blob += struct.pack("<I", len(meta_b)) + meta_b
    blob += struct.pack("<I", len(dir_b)) + dir_b
    blob += payload
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 6
    (klen,) = struct.unpack_from("<H", raw, off); off += 2
    kind = raw[off:off + klen].decode(); off += klen
    (mlen,) = struct.unpack_from("<I", raw, off); off += 4
    meta = json.loads(raw[off:off + mlen]); off += mlen
    (dlen,) = struct.unpack_from("<I", raw, off); off += 4
    directory = json.loads(raw[off:off + dlen]); off += dlen
    payload_start = off
    arrays = {}
    prev_end = 0
    for ent in directory:
        start = payload_start + ent["offset"]
        end = start + ent["nbytes"]
        if ent["offset"] < prev_end or end > len(raw):
            raise ValueError(f"{path}: tensor {ent['name']!r} offsets overlap or exceed file")
        prev_end = ent["offset"] + ent["nbytes"]
        arr = np.frombuffer(raw, dtype=ent["dtype"], count=int(np.prod(ent["shape"], dtype=np.int64)) if ent["shape"] else 1, offset=start)
        arrays[ent["name"]] = arr.reshape(ent["shape"]).copy()
    return kind, meta, arrays


# ---------------------------------------------------------------------------
# model-level save/load


def save_model(path, model, meta: dict | None = None,
               opt_state: dict[str, np.ndarray] | None = None) -> None:
    """Serialize any of the package's models with enough metadata to rebuild it."""
    from .codec import Codec
    from .degrade import DegradationEstimator
    from .diffusion import Denoiser
    from .guide import Restorer
    from .inn import LiftingNetwork

    meta = dict(meta or {})
    arrays = dict(model.arrays())
    if isinstance(model, LiftingNetwork):
        kind = "pixelinn" if model.cfg.domain == "pixel" else "latentinn"
        meta["inn_config"] = model.cfg.__dict__.copy()
    elif isinstance(model, Codec):
        kind = "codec"
        meta["codec_config"] = model.cfg.__dict__.copy()
        meta["trained"] = model.trained
        if model.stats is not None:
            arrays["_stats.mean"] = model.stats.mean
            arrays["_stats.std"] = model.stats.std
    elif isinstance(model, Denoiser):
        kind = "denoiser"
        meta["denoiser_config"] = {"latent_channels": model.latent_channels,
                                   "width": model.width}
        meta["trained"] = model.trained
    elif isinstance(model, DegradationEstimator):
        kind = "estimator"
        meta["estimator_config"] = {"embed_dim": model.embed_dim}
        meta["trained"] = model.trained
    elif isinstance(model, Restorer):
        kind = "restorer"
        meta["restorer_config"] = {"width": model.width}
        meta["trained"] = model.trained
    else:
        raise TypeError(f"cannot checkpoint object of type {type(model).__name__}")
    if opt_state:
        arrays.update({f"_opt.{k}": v for k, v in opt_state.items()})
    save_checkpoint(path, kind, meta, arrays)


def load_model(path):
    """Rebuild a model from a checkpoint; returns (model, meta, opt_state)."""
    from .codec import Codec, CodecConfig, LatentStats
    from .degrade import DegradationEstimator
    from .diffusion import Denoiser
    from .guide import Restorer
    from .inn import InnConfig, LiftingNetwork

    kind, meta, arrays = load_checkpoint(path)
    opt_state = {k[len("_opt."):]: v for k, v in arrays.items() if k.startswith("_opt.")}
    params = {k: v for k, v in arrays.items()
              if not k.startswith("_opt.") and not k.startswith("_stats.")}
    if kind in ("pixelinn", "latentinn"):
        model = LiftingNetwork(InnConfig(**meta["inn_config"]), seed=0)
    elif kind == "codec":
        model = Codec(CodecConfig(**meta["codec_config"]), seed=0)
        model.trained = bool(meta.get("trained", False))
        if "_stats.mean" in arrays:
            model.stats = LatentStats(mean=arrays["_stats.mean"], std=arrays["_stats.std"])
    elif kind == "denoiser":
        model = Denoiser(**meta["denoiser_config"], seed=0)
        model.trained = bool(meta.get("trained", False))
    elif kind == "estimator":
        model = DegradationEstimator(**meta["estimator_config"], seed=0)
        model.trained = bool(meta.get("trained", False))
    elif kind == "restorer":
        model = Restorer(**meta["restorer_config"], seed=0)
        model.trained = bool(meta.get("trained", False))
    else:
        raise ValueError(f"{path}: unknown checkpoint kind {kind!r}")
    model.load_arrays(params)
    return model, meta, opt_state
