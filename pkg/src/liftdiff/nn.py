"""Parameter containers, initializers and the Adam optimizer."""

from __future__ import annotations

import numpy as np

from .autodiff import Gradients, Tensor

__all__ = ["ParamModule", "Adam", "conv_init", "fc_init"]


def conv_init(rng: np.random.Generator, co: int, ci: int, k: int) -> np.ndarray:
    std = (1.0 / (ci * k * k)) ** 0.5
    return (rng.standard_normal((co, ci, k, k)) * std).astype(np.float32)


def fc_init(rng: np.random.Generator, fi: int, fo: int) -> np.ndarray:
    std = (1.0 / fi) ** 0.5
    return (rng.standard_normal((fi, fo)) * std).astype(np.float32)


class ParamModule:
    """Base for models: named float32 parameter leaves plus (de)serialization."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add_param(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(array, dtype=np.float32), requires_grad=True)
        self._params[name] = t
        return t

    def params(self) -> dict[str, Tensor]:
        return dict(self._params)

    def param_count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise ValueError(f"parameter set mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, t in self._params.items():
            a = np.asarray(arrays[k], dtype=np.float32)
            if a.shape != t.data.shape:
                raise ValueError(f"parameter {k!r}: shape {a.shape} != expected {t.data.shape}")
            t.data = a.copy()

    def zero_all(self) -> None:
        for t in self._params.values():
            t.data = np.zeros_like(t.data)


class Adam:
    """Adaptive-moment gradient descent over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 5e-5,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: Gradients) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = grads.get(p)
            if g is None:
                continue
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / c1
            vhat = self.v[k] / c2
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.t": np.array([self.t], dtype=np.float32)}
        for k in self.params:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays["adam.t"][0])
        for k in self.params:
            self.m[k] = np.asarray(arrays[f"adam.m.{k}"], dtype=np.float32).copy()
            self.v[k] = np.asarray(arrays[f"adam.v.{k}"], dtype=np.float32).copy()
