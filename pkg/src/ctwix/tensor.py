"""Small dense tensors with tape-based reverse-mode differentiation.

Operations record themselves on the active :class:`Tape` when at least one
input requires a gradient.  Outside a tape nothing is recorded, so inference
runs as plain numpy.  Typical use::

    with Tape() as tape:
        loss = (w @ x).sum()
    tape.backward(loss)
    w.grad

Broadcasting follows numpy; gradients are summed back to each input's shape.
Ops that can turn finite inputs into inf/NaN (exp, log, power, products,
matmul, sums) check their output and raise :class:`NumericError`.
"""

from __future__ import annotations

import math
import threading

import numpy as np

MASK_VALUE = -1e9


class NumericError(FloatingPointError):
    pass


class ShapeError(ValueError):
    pass


_state = threading.local()


def _active_tape():
    return getattr(_state, "tape", None)


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._prev = None

    def __enter__(self):
        self._prev = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev
        return False

    def backward(self, loss: "Tensor") -> None:
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise ValueError("loss does not depend on any tensor requiring grad")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
                node.grad = None
        loss.grad = np.ones_like(loss.data)
        self.nodes.clear()


def backward(loss: "Tensor") -> None:
    tape = _active_tape()
    if tape is None:
        raise RuntimeError("backward() called without an active tape")
    tape.backward(loss)


def _check(data: np.ndarray, op: str) -> np.ndarray:
    s = data.sum() if data.size else 0.0
    if not math.isfinite(float(s)) and not np.isfinite(data).all():
        raise NumericError(f"{op} produced non-finite values")
    return data


def _accum(t: "Tensor", g: np.ndarray, fresh: bool = False) -> None:
    """Add ``g`` into ``t.grad``.

    ``fresh`` marks arrays (or views) that no one else will touch, which can be
    adopted without a copy.  This relies on the tape dropping each node's
    gradient once it has been propagated.
    """
    if not t.requires_grad:
        return
    if t.grad is None:
        if fresh and g.shape == t.data.shape and g.dtype == t.data.dtype:
            t.grad = g
        else:
            t.grad = np.array(np.broadcast_to(g, t.data.shape), dtype=t.data.dtype)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype != np.float64 and arr.dtype != np.float32:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(self, o)
    def __neg__(self): return mul(self, -1.0)

    def __truediv__(self, o):
        if isinstance(o, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul(self, 1.0 / o)

    def __matmul__(self, o): return matmul(self, o)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims=False): return reduce_sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return reduce_mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)
    def transpose(self, *axes): return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data: np.ndarray, op: str, parents, backward_fn, check: bool = False) -> Tensor:
    out = Tensor(_check(data, op) if check else data)
    tape = _active_tape()
    if tape is not None:
        for p in parents:
            if p.requires_grad:
                out.requires_grad = True
                out._backward = backward_fn
                out.name = op
                tape.nodes.append(out)
                break
    return out


# -- elementwise --------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga, gb = _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
        _accum(a, ga, fresh=True)
        _accum(b, gb, fresh=gb is not g or not a.requires_grad)
    return _make(a.data + b.data, "add", (a, b), bw, check=True)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape), fresh=True)
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.shape), fresh=True)
    return _make(a.data - b.data, "sub", (a, b), bw, check=True)


def mul(a, b) -> Tensor:
    """Elementwise product; ``b`` may be a python scalar."""
    a = as_tensor(a)
    if not isinstance(b, Tensor) and np.ndim(b) == 0:
        c = float(b)
        return _make(a.data * c, "scale", (a,), lambda g: _accum(a, g * c, fresh=True), check=True)
    b = as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape), fresh=True)
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape), fresh=True)
    return _make(a.data * b.data, "mul", (a, b), bw, check=True)


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.data)
    return _make(y, "exp", (x,), lambda g: _accum(x, g * y, fresh=True), check=True)


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise NumericError("log of non-positive value")
    return _make(np.log(x.data), "log", (x,), lambda g: _accum(x, g / x.data, fresh=True), check=True)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _make(y, "tanh", (x,), lambda g: _accum(x, g * (1.0 - y * y), fresh=True))


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return _make(x.data * pos, "relu", (x,), lambda g: _accum(x, g * pos, fresh=True))


def softplus(x) -> Tensor:
    """``log(1 + exp(x))`` without overflow."""
    x = as_tensor(x)
    y = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, "softplus", (x,), lambda g: _accum(x, g * sig, fresh=True))


def clip(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _make(np.clip(x.data, lo, hi), "clip", (x,), lambda g: _accum(x, g * inside, fresh=True))


def power(x, p: float) -> Tensor:
    x = as_tensor(x)
    if p == 0:
        return _make(np.ones_like(x.data), "power", (x,), lambda g: None)
    y = x.data ** p
    return _make(y, "power", (x,), lambda g: _accum(x, g * p * x.data ** (p - 1), fresh=True),
                 check=True)


def masked_fill(x, mask, value: float = MASK_VALUE) -> Tensor:
    """Replace entries where ``mask`` is true; ``mask`` broadcasts against ``x``."""
    x = as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    keep = ~mask
    return _make(np.where(mask, value, x.data), "masked_fill", (x,),
                 lambda g: _accum(x, _unbroadcast(g * keep, x.shape), fresh=True))


# -- linear algebra and shape -----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """``a @ b`` over the last two axes.

    ``b`` is either 2-D (shared across ``a``'s leading axes) or has the same
    leading axes as ``a``.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or (
            b.ndim > 2 and a.shape[:-2] != b.shape[:-2]):
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            _accum(a, g @ np.swapaxes(b.data, -1, -2), fresh=True)
        if b.requires_grad:
            if b.ndim == 2:
                k = a.shape[-1]
                _accum(b, a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1]), fresh=True)
            else:
                _accum(b, np.swapaxes(a.data, -1, -2) @ g, fresh=True)
    with np.errstate(over="ignore", invalid="ignore"):
        y = a.data @ b.data
    return _make(y, "matmul", (a, b), bw, check=True)


def linear(x, w, b=None) -> Tensor:
    """``x @ w + b`` with a trailing-axis bias."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0] or w.ndim != 2:
        raise ShapeError(f"linear shape mismatch: {x.shape} @ {w.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        y = x.data @ w.data
        if b is not None:
            b = as_tensor(b)
            if b.shape != (w.shape[1],):
                raise ShapeError(f"bias shape {b.shape} does not fit weight {w.shape}")
            y += b.data
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        if x.requires_grad:
            _accum(x, g @ w.data.T, fresh=True)
        g2 = g.reshape(-1, g.shape[-1])
        if w.requires_grad:
            _accum(w, x.data.reshape(-1, w.shape[0]).T @ g2, fresh=True)
        if b is not None and b.requires_grad:
            _accum(b, g2.sum(axis=0), fresh=True)
    return _make(y, "linear", parents, bw, check=True)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}") from None
    return _make(y, "reshape", (x,), lambda g: _accum(x, g.reshape(x.shape), fresh=True))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), "transpose", (x,),
                 lambda g: _accum(x, np.transpose(g, inv), fresh=True))


def swapaxes(x, a1: int, a2: int) -> Tensor:
    x = as_tensor(x)
    return _make(np.swapaxes(x.data, a1, a2), "swapaxes", (x,),
                 lambda g: _accum(x, np.swapaxes(g, a1, a2), fresh=True))


def _is_basic(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)


def getitem(x, idx) -> Tensor:
    """Basic slicing, or integer-array indexing (a gather)."""
    x = as_tensor(x)
    basic = _is_basic(idx)

    def bw(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        _accum(x, full, fresh=True)
    return _make(x.data[idx], "getitem", (x,), bw)


def take(x, indices, axis: int = 0) -> Tensor:
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(np.moveaxis(full, axis, 0), indices, np.moveaxis(g, axis, 0))
        _accum(x, full, fresh=True)
    return _make(np.take(x.data, indices, axis=axis), "take", (x,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        y = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat shape mismatch: {[t.shape for t in ts]}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            _accum(t, piece, fresh=True)
    return _make(y, "concat", ts, bw)


def reduce_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape))
    return _make(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), "sum", (x,), bw, check=True)


def reduce_mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(reduce_sum(x, axis, keepdims), 1.0 / float(n))


# -- normalizations and fused blocks --------------------------------------------------------

def _rowsum(x: np.ndarray) -> np.ndarray:
    # a matmul is much faster than ufunc.reduce over a short last axis
    return x @ np.ones((x.shape[-1], 1), dtype=x.dtype)


def _softmax_last(s: np.ndarray) -> np.ndarray:
    """Softmax over the last axis.

    Shifts by the global maximum (cheap); rows that would underflow entirely
    are recomputed with a per-row shift.
    """
    e = np.exp(s - s.max())
    tot = _rowsum(e)
    if tot.min() < 1e-250:
        e = np.exp(s - s.max(axis=-1, keepdims=True))
        tot = _rowsum(e)
    e /= tot
    return e


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    moved = np.moveaxis(x.data, axis, -1)
    y = np.moveaxis(_softmax_last(moved), -1, axis)

    def bw(g):
        gm = np.moveaxis(g, axis, -1)
        ym = np.moveaxis(y, axis, -1)
        gy = gm * ym
        gy -= ym * _rowsum(gy)
        _accum(x, np.moveaxis(gy, -1, axis), fresh=True)
    return _make(y, "softmax", (x,), bw)


def logsumexp(x, axis: int = -1, where=None) -> Tensor:
    """Log-sum-exp over ``axis``, optionally restricted to entries selected by ``where``.

    Slices with no selected entry are an error.
    """
    x = as_tensor(x)
    sel = np.ones(x.shape, dtype=bool) if where is None else np.broadcast_to(where, x.shape)
    if not sel.any(axis=axis).all():
        raise NumericError("logsumexp over an empty selection")
    masked = np.where(sel, x.data, -np.inf)
    m = masked.max(axis=axis, keepdims=True)
    e = np.where(sel, np.exp(masked - m), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    y = (np.log(s) + m).squeeze(axis)
    w = e / s

    def bw(g):
        _accum(x, np.expand_dims(g, axis) * w, fresh=True)
    return _make(y, "logsumexp", (x,), bw, check=True)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm params {gamma.shape}, {beta.shape} do not fit input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    y = xhat * gamma.data + beta.data

    def bw(g):
        if gamma.requires_grad:
            _accum(gamma, (g * xhat).reshape(-1, d).sum(axis=0), fresh=True)
        if beta.requires_grad:
            _accum(beta, g.reshape(-1, d).sum(axis=0), fresh=True)
        if x.requires_grad:
            gh = g * gamma.data
            gx = gh - gh.mean(axis=-1, keepdims=True)
            gx -= xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            gx *= rstd
            _accum(x, gx, fresh=True)
    return _make(y, "layer_norm", (x, gamma, beta), bw)


def attention_core(q, k, v, key_mask=None) -> Tensor:
    """``softmax(q k^T / sqrt(d) + mask) v`` over ``(..., L, d)`` inputs.

    ``key_mask`` is boolean, true for keys to hide, broadcastable to the score
    shape ``(..., Lq, L)``.  Equivalent to composing matmul, masked_fill and
    softmax; fused to keep the tape short.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[:-1] != v.shape[:-1]:
        raise ShapeError(f"attention shape mismatch: q {q.shape}, k {k.shape}, v {v.shape}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    s = q.data @ np.swapaxes(k.data, -1, -2)
    s *= scale
    if key_mask is not None:
        s = np.where(key_mask, MASK_VALUE, s)
    a = _softmax_last(s)
    out = a @ v.data

    def bw(g):
        if v.requires_grad:
            _accum(v, np.swapaxes(a, -1, -2) @ g, fresh=True)
        gs = g @ np.swapaxes(v.data, -1, -2)
        gs *= a
        gs -= a * _rowsum(gs)
        gs *= scale
        if q.requires_grad:
            _accum(q, gs @ k.data, fresh=True)
        if k.requires_grad:
            _accum(k, np.swapaxes(gs, -1, -2) @ q.data, fresh=True)
    return _make(out, "attention", (q, k, v), bw, check=True)


# -- optimizer -------------------------------------------------------------------------------

def adam_step(params, grads, state: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> dict:
    """One Adam update with bias correction, in place on the ``params`` arrays.

    ``state`` holds the step count and both moment lists; pass ``{}`` on the
    first call and keep the returned dict.  A ``None`` gradient skips that
    parameter.
    """
    if not state:
        state = {"t": 0, "m": [np.zeros_like(p) for p in params], "v": [np.zeros_like(p) for p in params]}
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} does not match param {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


class Adam:
    def __init__(self, params: list[Tensor], lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state: dict = {}

    def step(self) -> None:
        self.state = adam_step([p.data for p in self.params], [p.grad for p in self.params],
                               self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
