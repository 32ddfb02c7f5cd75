"""Dense float32 tensors with reverse-mode automatic differentiation.

Everything differentiable in this package is built from the primitives in
this module: elementwise arithmetic, matmul, 2-d convolutions (direct and
transposed), resizing, channel concat/slice, pointwise nonlinearities,
channel layer-norm, softmax, reductions and squared-L2.

Recording model: ops record onto the innermost active :class:`Tape` when at
least one input is tracked (a ``requires_grad`` leaf, or an output already on
that tape). Outside any tape, ops run as plain numpy and produce constants.
``backward(loss)`` replays the tape once, in reverse, and returns a gradient
map over the ``requires_grad`` leaves. A tape is single-use unless
``retain_graph=True`` is passed.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "Tape",
    "Gradients",
    "no_grad",
    "backward",
    "add",
    "sub",
    "mul",
    "smul",
    "matmul",
    "reshape",
    "transpose",
    "concat",
    "narrow",
    "split",
    "tanh",
    "relu",
    "gelu",
    "clamp01",
    "layer_norm",
    "softmax",
    "reduce_sum",
    "reduce_mean",
    "sumsq",
    "pad2d",
    "conv2d",
    "conv_transpose2d",
    "resize_nearest",
    "resize_bilinear",
]


class Tensor:
    """A dense float32 array, optionally tracked for differentiation."""

    __slots__ = ("data", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float32)
        self.requires_grad = bool(requires_grad)
        self.node: tuple[Tape, int] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # operator sugar; scalars fold into smul / constant adds
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return smul(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return smul(self, 1.0 / float(other))
        raise TypeError("tensor / tensor is not a primitive; divide by scalars")

    def __neg__(self):
        return smul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


class _Node:
    __slots__ = ("op", "inputs", "out", "vjp")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], out: Tensor, vjp: Callable):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.vjp = vjp  # (gout: ndarray) -> sequence of ndarray|None aligned with inputs


class Tape:
    """Ordered record of primitive ops; context manager activates recording."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        assert _TAPES and _TAPES[-1] is self
        _TAPES.pop()


_TAPES: list[Tape] = []
_GRAD_DISABLED = 0


class no_grad:
    """Temporarily disable recording even inside an active tape."""

    def __enter__(self):
        global _GRAD_DISABLED
        _GRAD_DISABLED += 1

    def __exit__(self, *exc):
        global _GRAD_DISABLED
        _GRAD_DISABLED -= 1


def _active_tape() -> Tape | None:
    if _GRAD_DISABLED or not _TAPES:
        return None
    return _TAPES[-1]


def _tracked(t: Tensor, tape: Tape) -> bool:
    if t.node is not None:
        return t.node[0] is tape
    return t.requires_grad


def _emit(op: str, out_data: np.ndarray, inputs: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None and any(_tracked(t, tape) for t in inputs):
        tape.nodes.append(_Node(op, inputs, out, vjp))
        out.node = (tape, len(tape.nodes) - 1)
        out.requires_grad = True
    return out


class Gradients:
    """Gradient map returned by :func:`backward`, keyed by tensor identity."""

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads

    def __getitem__(self, t: Tensor) -> np.ndarray:
        try:
            return self._grads[id(t)]
        except KeyError:
            raise KeyError(
                "no gradient recorded for this tensor (not a requires_grad "
                "leaf reachable from the loss)"
            ) from None

    def get(self, t: Tensor, default=None):
        return self._grads.get(id(t), default)


def backward(
    loss: Tensor,
    retain_graph: bool = False,
    wrt: Iterable[Tensor] | None = None,
) -> Gradients:
    """Reverse sweep from a scalar loss; returns grads for requires_grad leaves.

    ``wrt`` optionally restricts propagation to paths reaching the given
    leaves, skipping vector-Jacobian products that cannot influence them.
    A tape is consumed by the sweep; call again only with ``retain_graph=True``
    on the first call, otherwise re-record the computation.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if loss.node is None:
        if loss.requires_grad:
            return Gradients({id(loss): np.ones_like(loss.data)})
        raise RuntimeError(
            "loss is detached from any active tape; record the computation "
            "inside a Tape and use requires_grad leaves"
        )
    tape, last = loss.node
    if tape.consumed:
        raise RuntimeError("tape already consumed by backward; re-record the computation")

    reach: dict[int, bool] | None = None
    if wrt is not None:
        wrt_ids = {id(t) for t in wrt}
        reach = {}
        for node in tape.nodes[: last + 1]:
            hit = False
            for t in node.inputs:
                if id(t) in wrt_ids or reach.get(id(t), False):
                    hit = True
                    break
            reach[id(node.out)] = hit

        def _needs(t: Tensor) -> bool:
            return id(t) in wrt_ids or reach.get(id(t), False)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaf_grads: dict[int, np.ndarray] = {}
    for i in range(last, -1, -1):
        node = tape.nodes[i]
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        parts = node.vjp(g)
        for t, gi in zip(node.inputs, parts):
            if gi is None or not _tracked(t, tape):
                continue
            if wrt is not None and not _needs(t):
                continue
            gi = gi.astype(np.float32, copy=False)
            if t.node is None:
                acc = leaf_grads.get(id(t))
                leaf_grads[id(t)] = gi if acc is None else acc + gi
            else:
                acc = grads.get(id(t))
                grads[id(t)] = gi if acc is None else acc + gi
    if not retain_graph:
        tape.consumed = True
    return Gradients(leaf_grads)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.data.shape} and {b.data.shape} do not broadcast") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)
    out = a.data + b.data
    return _emit("add", out, (a, b), lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)
    out = a.data - b.data
    return _emit("sub", out, (a, b), lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a, b)
    out = a.data * b.data
    return _emit("mul", out, (a, b), lambda g: (
        _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)))


def smul(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _emit("smul", a.data * np.float32(s), (a,), lambda g: (g * np.float32(s),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; stacks of matrices broadcast over leading axes."""
    if a.data.ndim < 2 or b.data.ndim < 2 or a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = a.data @ b.data

    def vjp(g):
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))

    return _emit("matmul", out, (a, b), vjp)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    out = a.data.reshape(shape)
    return _emit("reshape", out, (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))
    return _emit("transpose", out, (a,), lambda g: (g.transpose(inv),))


# ---------------------------------------------------------------------------
# channel concat / slice


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    shapes = [t.data.shape for t in tensors]
    base = list(shapes[0])
    for s in shapes[1:]:
        trial = list(s)
        trial[axis] = base[axis]
        if trial != base:
            raise ValueError(f"concat: incompatible shapes {shapes}")
    sizes = [s[axis] for s in shapes]
    offsets = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def vjp(g):
        sl = [slice(None)] * g.ndim
        parts = []
        for i in range(len(sizes)):
            sl[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            parts.append(g[tuple(sl)])
        return parts

    return _emit("concat", out, tuple(tensors), vjp)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    if start < 0 or start + length > a.data.shape[axis]:
        raise ValueError(
            f"narrow: slice [{start}:{start + length}) exceeds axis {axis} "
            f"of shape {a.data.shape}")
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    out = a.data[sl]

    def vjp(g):
        gx = np.zeros_like(a.data)
        gx[sl] = g
        return (gx,)

    return _emit("narrow", out, (a,), vjp)


def split(a: Tensor, sizes: Sequence[int], axis: int = 1) -> tuple[Tensor, ...]:
    if sum(sizes) != a.data.shape[axis]:
        raise ValueError(f"split: sizes {tuple(sizes)} do not sum to axis {axis} of {a.data.shape}")
    outs, start = [], 0
    for n in sizes:
        outs.append(narrow(a, axis, start, n))
        start += n
    return tuple(outs)


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _emit("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    return _emit("relu", y, (a,), lambda g: (g * (a.data > 0),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    x = a.data
    u = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(u)
    y = 0.5 * x * (1.0 + t)

    def vjp(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du),)

    return _emit("gelu", y, (a,), vjp)


def clamp01(a: Tensor) -> Tensor:
    """Clamp to [0,1] as relu(x) - relu(x-1); pass-through gradient inside."""
    return sub(relu(a), relu(sub(a, Tensor(np.float32(1.0)))))


# ---------------------------------------------------------------------------
# normalization / softmax / reductions


def layer_norm(a: Tensor, axis: int = 1, eps: float = 1e-5) -> Tensor:
    x = a.data
    mu = x.mean(axis=axis, keepdims=True)
    var = x.var(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x - mu) * inv

    def vjp(g):
        gy = g - g.mean(axis=axis, keepdims=True) - y * (g * y).mean(axis=axis, keepdims=True)
        return (gy * inv,)

    return _emit("layer_norm", y.astype(np.float32), (a,), vjp)


def softmax(a: Tensor, axis: int) -> Tensor:
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", y.astype(np.float32), (a,), vjp)


def _axes_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis,)
    return tuple(axis)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axes_tuple(axis, a.data.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _emit("sum", out, (a,), vjp)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axes_tuple(axis, a.data.ndim)
    count = int(np.prod([a.data.shape[i] for i in axes]))
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape).copy() / np.float32(count),)

    return _emit("mean", out, (a,), vjp)


def sumsq(a: Tensor) -> Tensor:
    out = np.asarray((a.data.astype(np.float32) ** 2).sum(), dtype=np.float32)
    return _emit("sumsq", out, (a,), lambda g: (2.0 * g * a.data,))


# ---------------------------------------------------------------------------
# 2-d padding, convolution, transposed convolution, resize

_PAD_MODES = ("zero", "reflect", "wrap")


def _pad_index(n: int, lo: int, hi: int, mode: str) -> np.ndarray:
    base = np.arange(n)
    if mode == "zero":
        return np.pad(base, (lo, hi), mode="constant", constant_values=-1)
    np_mode = {"reflect": "reflect", "wrap": "wrap"}[mode]
    return np.pad(base, (lo, hi), mode=np_mode)


def pad2d(a: Tensor, pad: tuple[int, int, int, int], mode: str = "zero") -> Tensor:
    """Spatial pad of a (B,C,H,W) tensor; pad = (top, bottom, left, right)."""
    if mode not in _PAD_MODES:
        raise ValueError(f"pad2d: unknown mode {mode!r}")
    pt, pb, pl, pr = pad
    B, C, H, W = a.data.shape
    ri = _pad_index(H, pt, pb, mode)
    ci = _pad_index(W, pl, pr, mode)
    if mode == "zero":
        out = np.zeros((B, C, H + pt + pb, W + pl + pr), dtype=np.float32)
        out[:, :, pt:pt + H, pl:pl + W] = a.data

        def vjp(g):
            return (g[:, :, pt:pt + H, pl:pl + W].copy(),)
    else:
        out = a.data[:, :, ri[:, None], ci[None, :]]

        def vjp(g):
            rows = np.zeros((B, C, H, W + pl + pr), dtype=np.float32)
            np.add.at(rows.transpose(2, 0, 1, 3), ri, g.transpose(2, 0, 1, 3))
            gx = np.zeros((B, C, H, W), dtype=np.float32)
            np.add.at(gx.transpose(3, 0, 1, 2), ci, rows.transpose(3, 0, 1, 2))
            return (gx,)

    return _emit("pad2d", out, (a,), vjp)


def _conv_fwd(x: np.ndarray, w: np.ndarray, sh: int, sw: int) -> np.ndarray:
    B, Ci, H, W = x.shape
    Co, _, kh, kw = w.shape
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    Ho, Wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, Ci * kh * kw)
    out = cols @ w.reshape(Co, -1).T
    return np.ascontiguousarray(out.reshape(B, Ho, Wo, Co).transpose(0, 3, 1, 2))


def _conv_dx(g: np.ndarray, w: np.ndarray, sh: int, sw: int, xshape) -> np.ndarray:
    B, Ci, H, W = xshape
    Co, _, kh, kw = w.shape
    _, _, Ho, Wo = g.shape
    gcols = g.transpose(0, 2, 3, 1).reshape(-1, Co) @ w.reshape(Co, -1)
    gc = gcols.reshape(B, Ho, Wo, Ci, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    gx = np.zeros((B, Ci, H, W), dtype=np.float32)
    for k in range(kh):
        for l in range(kw):
            gx[:, :, k:k + sh * Ho:sh, l:l + sw * Wo:sw] += gc[:, :, :, :, k, l]
    return gx


def _conv_dw(x: np.ndarray, g: np.ndarray, sh: int, sw: int, wshape) -> np.ndarray:
    Co, Ci, kh, kw = wshape
    B = x.shape[0]
    _, _, Ho, Wo = g.shape
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, Ci * kh * kw)
    gw = cols.T @ g.transpose(0, 2, 3, 1).reshape(-1, Co)
    return np.ascontiguousarray(gw.T.reshape(Co, Ci, kh, kw))


def conv2d(
    x: Tensor,
    w: Tensor,
    bias: Tensor | None = None,
    stride: int | tuple[int, int] = 1,
    padding: int | tuple[int, int] = 0,
    pad_mode: str = "reflect",
) -> Tensor:
    """Cross-correlation of (B,Ci,H,W) with (Co,Ci,kh,kw); reflect pad default."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError(f"conv2d: need 4-d input/weight, got {x.data.shape} and {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(
            f"conv2d: input channels {x.data.shape[1]} != weight channels "
            f"{w.data.shape[1]} (input {x.data.shape}, weight {w.data.shape})")
    sh, sw = (stride, stride) if isinstance(stride, int) else stride
    ph, pw = (padding, padding) if isinstance(padding, int) else padding
    if ph or pw:
        x = pad2d(x, (ph, ph, pw, pw), mode=pad_mode)
    kh, kw = w.data.shape[2:]
    if x.data.shape[2] < kh or x.data.shape[3] < kw:
        raise ValueError(f"conv2d: input {x.data.shape} smaller than kernel {w.data.shape}")

    xd, wd = x.data, w.data
    out = _conv_fwd(xd, wd, sh, sw)

    def vjp(g):
        return (_conv_dx(g, wd, sh, sw, xd.shape), _conv_dw(xd, g, sh, sw, wd.shape))

    y = _emit("conv2d", out, (x, w), vjp)
    if bias is not None:
        if bias.data.shape != (w.data.shape[0],):
            raise ValueError(f"conv2d: bias shape {bias.data.shape} != ({w.data.shape[0]},)")
        y = add(y, reshape(bias, (1, -1, 1, 1)))
    return y


def _convt_fwd(x: np.ndarray, w: np.ndarray, sh: int, sw: int, ph: int, pw: int) -> np.ndarray:
    B, Ci, H, W = x.shape
    _, Co, kh, kw = w.shape
    Hf, Wf = sh * (H - 1) + kh, sw * (W - 1) + kw
    prod = np.tensordot(x, w, axes=([1], [0]))          # (B,H,W,Co,kh,kw)
    prod = prod.transpose(0, 3, 1, 2, 4, 5)             # (B,Co,H,W,kh,kw)
    out = np.zeros((B, Co, Hf, Wf), dtype=np.float32)
    for k in range(kh):
        for l in range(kw):
            out[:, :, k:k + sh * (H - 1) + 1:sh, l:l + sw * (W - 1) + 1:sw] += prod[:, :, :, :, k, l]
    if ph or pw:
        out = out[:, :, ph:Hf - ph, pw:Wf - pw].copy()
    return out


def conv_transpose2d(
    x: Tensor,
    w: Tensor,
    bias: Tensor | None = None,
    stride: int | tuple[int, int] = 1,
    padding: int | tuple[int, int] = 0,
) -> Tensor:
    """Transposed convolution: (B,Ci,H,W) x (Ci,Co,kh,kw) -> (B,Co,s(H-1)+kh-2p,...)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError(
            f"conv_transpose2d: need 4-d input/weight, got {x.data.shape} and {w.data.shape}")
    if x.data.shape[1] != w.data.shape[0]:
        raise ValueError(
            f"conv_transpose2d: input channels {x.data.shape[1]} != weight "
            f"in-channels {w.data.shape[0]} (weight {w.data.shape})")
    sh, sw = (stride, stride) if isinstance(stride, int) else stride
    ph, pw = (padding, padding) if isinstance(padding, int) else padding
    xd, wd = x.data, w.data
    kh, kw = wd.shape[2:]
    out = _convt_fwd(xd, wd, sh, sw, ph, pw)

    def vjp(g):
        if ph or pw:
            gp = np.pad(g, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        else:
            gp = g
        # d/dx: correlate padded g with w; w's in-channel axis acts as output
        gx = _conv_fwd(gp, wd, sh, sw)
        win = sliding_window_view(gp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        gw = np.tensordot(xd, win, axes=([0, 2, 3], [0, 2, 3]))  # (Ci,Co,kh,kw)
        return (gx, np.ascontiguousarray(gw))

    y = _emit("conv_transpose2d", out, (x, w), vjp)
    if bias is not None:
        if bias.data.shape != (w.data.shape[1],):
            raise ValueError(
                f"conv_transpose2d: bias shape {bias.data.shape} != ({w.data.shape[1]},)")
        y = add(y, reshape(bias, (1, -1, 1, 1)))
    return y


def _resize_axis_indices(n_in: int, n_out: int):
    # half-pixel centers, clamped
    centers = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    i0 = np.floor(centers).astype(np.int64)
    frac = (centers - i0).astype(np.float32)
    i0c = np.clip(i0, 0, n_in - 1)
    i1c = np.clip(i0 + 1, 0, n_in - 1)
    return i0c, i1c, frac


def resize_nearest(x: Tensor, out_hw: tuple[int, int]) -> Tensor:
    B, C, H, W = x.data.shape
    Ho, Wo = out_hw
    ri = np.clip(np.floor((np.arange(Ho) + 0.5) * (H / Ho)).astype(np.int64), 0, H - 1)
    ci = np.clip(np.floor((np.arange(Wo) + 0.5) * (W / Wo)).astype(np.int64), 0, W - 1)
    out = x.data[:, :, ri[:, None], ci[None, :]]

    def vjp(g):
        rows = np.zeros((B, C, H, Wo), dtype=np.float32)
        np.add.at(rows.transpose(2, 0, 1, 3), ri, g.transpose(2, 0, 1, 3))
        gx = np.zeros((B, C, H, W), dtype=np.float32)
        np.add.at(gx.transpose(3, 0, 1, 2), ci, rows.transpose(3, 0, 1, 2))
        return (gx,)

    return _emit("resize_nearest", out, (x,), vjp)


def resize_bilinear(x: Tensor, out_hw: tuple[int, int]) -> Tensor:
    B, C, H, W = x.data.shape
    Ho, Wo = out_hw
    r0, r1, rf = _resize_axis_indices(H, Ho)
    c0, c1, cf = _resize_axis_indices(W, Wo)
    rf4 = rf[None, None, :, None]
    cf4 = cf[None, None, None, :]

    rows = x.data[:, :, r0, :] * (1.0 - rf4) + x.data[:, :, r1, :] * rf4
    out = rows[:, :, :, c0] * (1.0 - cf4) + rows[:, :, :, c1] * cf4

    def vjp(g):
        grows = np.zeros((B, C, Ho, W), dtype=np.float32)
        np.add.at(grows.transpose(3, 0, 1, 2), c0, (g * (1.0 - cf4)).transpose(3, 0, 1, 2))
        np.add.at(grows.transpose(3, 0, 1, 2), c1, (g * cf4).transpose(3, 0, 1, 2))
        gx = np.zeros((B, C, H, W), dtype=np.float32)
        np.add.at(gx.transpose(2, 0, 1, 3), r0, (grows * (1.0 - rf4)).transpose(2, 0, 1, 3))
        np.add.at(gx.transpose(2, 0, 1, 3), r1, (grows * rf4).transpose(2, 0, 1, 3))
        return (gx,)

    return _emit("resize_bilinear", out.astype(np.float32), (x,), vjp)
