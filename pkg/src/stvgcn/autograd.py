"""Small dense reverse-mode autodiff on top of numpy (float64).

Each op builds a new :class:`Tensor` that remembers its parents and a closure
that pushes the output gradient back to them. ``backward`` walks the graph in
reverse topological order, visiting every node once.

Broadcasting is deliberately narrow: elementwise binary ops accept equal
shapes or a scalar on either side. ``matmul`` follows numpy batched semantics
with either equal leading axes or a 2-D right operand (a weight matrix).
"""
from __future__ import annotations

import struct
from typing import Iterable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised on incompatible operand shapes."""

    def __init__(self, op, expected, actual):
        self.op = op
        self.expected = expected
        self.actual = actual
        super().__init__(f"{op}: expected shape {expected}, got {actual}")


class ConfigError(ValueError):
    """Invalid hyperparameter or configuration value."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    tracked = tuple(p for p in parents if p.requires_grad)
    out.requires_grad = bool(tracked)
    out.grad = None
    if tracked:
        out._parents = tracked
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _binary_shapes(op, a: Tensor, b: Tensor):
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(op, a.shape, b.shape)


def _reduce_to(g, shape):
    # undo scalar broadcast
    if g.shape == shape:
        return g
    return np.array(g.sum(), dtype=DTYPE).reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("add", a, b)

    def bw(g):
        _accum(a, _reduce_to(g, a.shape))
        _accum(b, _reduce_to(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("sub", a, b)

    def bw(g):
        _accum(a, _reduce_to(g, a.shape))
        _accum(b, _reduce_to(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("mul", a, b)

    def bw(g):
        _accum(a, _reduce_to(g * b.data, a.shape))
        _accum(b, _reduce_to(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes("div", a, b)

    def bw(g):
        _accum(a, _reduce_to(g / b.data, a.shape))
        _accum(b, _reduce_to(-g * a.data / b.data**2, b.shape))

    return _make(a.data / b.data, (a, b), bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0  # gradient at exactly 0 is 0

    def bw(g):
        _accum(x, g * pos)

    return _make(np.where(pos, x.data, 0.0), (x,), bw)


def log(x) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        _accum(x, g / x.data)

    return _make(np.log(x.data), (x,), bw)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def bw(g):
        _accum(x, g * out)

    return _make(out, (x,), bw)


def abs_(x) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        _accum(x, g * np.sign(x.data))

    return _make(np.abs(x.data), (x,), bw)


def mul_const(x, m) -> Tensor:
    """Multiply by an untracked array of the same shape, or of shape
    ``x.shape[:-1]`` (broadcast over the trailing channel axis)."""
    x = as_tensor(x)
    m = np.asarray(m, dtype=DTYPE)
    if m.shape != x.shape:
        if m.shape == x.shape[:-1]:
            m = m[..., None]
        else:
            raise ShapeError("mul_const", x.shape, m.shape)

    def bw(g):
        _accum(x, _sum_broadcast(g * m, x.shape))

    return _make(x.data * m, (x,), bw)


mask = mul_const


def _sum_broadcast(g, shape):
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True)


def add_bias(x, b) -> Tensor:
    """x[..., C] + b[C]: the only trailing-axis broadcast allowed."""
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError("add_bias", (x.shape[-1],), b.shape)

    def bw(g):
        _accum(x, g)
        _accum(b, g.reshape(-1, b.shape[0]).sum(axis=0))

    return _make(x.data + b.data, (x, b), bw)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", (..., a.shape[-1] if a.ndim else None, "k"), b.shape)
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError("matmul", a.shape[:-2], b.shape[:-2])
    if b.ndim == 2 and a.ndim > 2:

        def bw(g):
            _accum(a, g @ b.data.T)
            if b.requires_grad:
                k, n = b.shape
                _accum(b, a.data.reshape(-1, k).T @ g.reshape(-1, n))

    else:
        if a.ndim != b.ndim:
            raise ShapeError("matmul", a.shape, b.shape)

        def bw(g):
            _accum(a, g @ np.swapaxes(b.data, -1, -2))
            _accum(b, np.swapaxes(a.data, -1, -2) @ g)

    return _make(a.data @ b.data, (a, b), bw)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None

    def bw(g):
        _accum(x, g.reshape(x.shape))

    return _make(out, (x,), bw)


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError("transpose", tuple(range(x.ndim)), axes)
    inv = np.argsort(axes)

    def bw(g):
        _accum(x, np.transpose(g, inv))

    return _make(np.transpose(x.data, axes), (x,), bw)


def concat(tensors: Sequence, axis=-1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat", "at least one tensor", 0)
    ax = axis % ts[0].ndim
    ref = list(ts[0].shape)
    for t in ts[1:]:
        s = list(t.shape)
        if len(s) != len(ref) or s[:ax] + s[ax + 1:] != ref[:ax] + ref[ax + 1:]:
            raise ShapeError("concat", tuple(ref), t.shape)
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[ax] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(np.concatenate([t.data for t in ts], axis=ax), ts, bw)


def slice_(x, idx) -> Tensor:
    x = as_tensor(x)
    out = x.data[idx]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        _accum(x, full)

    return _make(np.array(out, dtype=DTYPE), (x,), bw)


# ---------------------------------------------------------------- reductions

def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape))

    return _make(np.asarray(out, dtype=DTYPE), (x,), bw)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis, keepdims), 1.0 / n)


def softmax(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        _accum(x, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return _make(p, (x,), bw)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    m = x.data.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(x.data - m).sum(axis=-1, keepdims=True))
    out = x.data - lse
    p = np.exp(out)

    def bw(g):
        _accum(x, g - p * g.sum(axis=-1, keepdims=True))

    return _make(out, (x,), bw)


def take_along_last(x, index) -> Tensor:
    """out[n] = x[n, index[n]] for 2-D ``x``."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    rows = np.arange(x.shape[0])

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, index), g)
        _accum(x, full)

    return _make(x.data[rows, index].copy(), (x,), bw)


# ---------------------------------------------------------------- convolution

def masked_temporal_conv(x, kernel, stride=1, valid=None) -> Tensor:
    """1-D convolution along time for every slot independently.

    x: (N, T, V, C_in); kernel: (K, C_in, C_out) with K odd; valid: boolean
    (N, T) per-frame or (N, T, V) per-slot mask. Invalid inputs are zeroed
    before the convolution, so they neither contribute to outputs nor receive
    gradient; outputs at invalid (subsampled) positions are zeroed as well.
    Zero padding of (K-1)/2 frames on both ends.

    Returns (out, out_valid) where out is (N, ceil(T/stride), V, C_out).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if x.ndim != 4:
        raise ShapeError("masked_temporal_conv", "(N, T, V, C)", x.shape)
    K, cin, cout = kernel.shape
    if K % 2 != 1:
        raise ConfigError(f"temporal kernel must be odd, got {K}")
    if x.shape[-1] != cin:
        raise ShapeError("masked_temporal_conv", (..., cin), x.shape)
    N, T, V, _ = x.shape
    if valid is None:
        valid = np.ones((N, T, V), dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape == (N, T):
        valid = np.broadcast_to(valid[:, :, None], (N, T, V))
    if valid.shape != (N, T, V):
        raise ShapeError("masked_temporal_conv", (N, T, V), valid.shape)
    m_in = valid[..., None].astype(DTYPE)
    pad = (K - 1) // 2
    xp = np.zeros((N, T + 2 * pad, V, cin), dtype=DTYPE)
    xp[:, pad:pad + T] = x.data * m_in
    t_out = (T + stride - 1) // stride
    starts = np.arange(t_out) * stride
    out_valid = valid[:, starts]
    m_out = out_valid[..., None].astype(DTYPE)
    w = kernel.data
    # im2col: cols[..., k*cin:(k+1)*cin] = padded frames starts + k
    cols = np.concatenate([xp[:, starts + k] for k in range(K)], axis=-1)
    w2 = w.reshape(K * cin, cout)
    out = (cols @ w2) * m_out

    def bw(g):
        g = g * m_out
        if kernel.requires_grad:
            gk = cols.reshape(-1, K * cin).T @ g.reshape(-1, cout)
            _accum(kernel, gk.reshape(K, cin, cout))
        if x.requires_grad:
            gcols = g @ w2.T
            gxp = np.zeros_like(xp)
            for k in range(K):
                # starts + k has no repeats for fixed k
                gxp[:, starts + k] += gcols[..., k * cin:(k + 1) * cin]
            _accum(x, gxp[:, pad:pad + T] * m_in)

    return _make(out, (x, kernel), bw), out_valid


# ---------------------------------------------------------------- backward

def backward(loss: Tensor):
    if loss.data.size != 1 or loss.ndim > 1:
        raise ShapeError("backward", (), loss.shape)
    if not loss.requires_grad:
        return
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------- optimisation

def cosine_lr(epoch, total_epochs, base_lr):
    if base_lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {base_lr}")
    if total_epochs <= 0:
        raise ConfigError("total_epochs must be positive")
    return base_lr * (1.0 + np.cos(np.pi * epoch / total_epochs)) / 2.0


class SGD:
    """Momentum SGD with L2 weight decay folded into the gradient."""

    def __init__(self, params: Iterable[Tensor], lr, momentum=0.9, weight_decay=5e-4):
        if lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p, v in zip(self.params, self.velocity):
            sgd_step(p, p.grad, self.lr, self.momentum, self.weight_decay, v)


def sgd_step(param: Tensor, grad, lr, momentum=0.0, weight_decay=0.0, velocity=None):
    """In-place update; ``velocity`` is the momentum buffer (updated in place)."""
    if lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}")
    grad = np.asarray(grad, dtype=DTYPE)
    if grad.shape != param.shape:
        raise ShapeError("sgd_step", param.shape, grad.shape)
    d = grad + weight_decay * param.data
    if velocity is not None and momentum:
        velocity *= momentum
        velocity += d
        d = velocity
    param.data -= lr * d
    return param


# ---------------------------------------------------------------- checkpoints

MAGIC = b"VGCKPT1"


def save_checkpoint(path, params: dict):
    """Flat little-endian binary: magic, count, then per parameter
    name length, name, rank, extents (u64), values (f64)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(params)))
        for name, arr in params.items():
            arr = np.ascontiguousarray(arr.data if isinstance(arr, Tensor) else arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<Q", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a VGCKPT1 checkpoint")
    pos = len(MAGIC)

    def u64():
        nonlocal pos
        (v,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        return v

    out = {}
    for _ in range(u64()):
        n = u64()
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        rank = u64()
        shape = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        count = int(np.prod(shape)) if rank else 1
        out[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape).astype(DTYPE)
        pos += 8 * count
    return out
