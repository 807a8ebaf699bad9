"""Minimal reverse-mode autodiff over numpy arrays.

Tensors wrap an ndarray plus the bookkeeping needed to backpropagate a
scalar loss.  The op set is exactly what the encoders and losses need; every
backward pass accumulates in a fixed topological order, so gradients are
bit-reproducible run to run.

Works in float32 (training default) or float64 (gradient checks).
"""

import numpy as np

from ..errors import ContractError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.grad is not None})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from a scalar."""
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to the parent's shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _wrap(b, a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def mul(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _wrap(b, a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _wrap(b, a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(a.data / b.data, (a, b), backward)


def matmul(a: Tensor, b: Tensor):
    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def transpose(a: Tensor):
    def backward(g):
        if a.requires_grad:
            a._accumulate(g.T)

    return _make(a.data.T, (a,), backward)


def reshape(a: Tensor, shape):
    old = a.shape

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward)


def relu(a: Tensor):
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _make(a.data * mask, (a,), backward)


def exp(a: Tensor):
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return _make(out_data, (a,), backward)


def log(a: Tensor):
    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def sqrt(a: Tensor):
    out_data = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * 0.5 / out_data)

    return _make(out_data, (a,), backward)


def tsum(a: Tensor, axis=None, keepdims=False):
    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy() if np.ndim(g) == 0
                          else np.full(a.shape, g.reshape(())[()], dtype=a.dtype))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.shape).astype(a.dtype, copy=True))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims=False):
    n = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def maximum_const(a: Tensor, c: float):
    """Elementwise max(a, c); gradient passes where a >= c."""
    mask = a.data >= c

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    return _make(np.maximum(a.data, c), (a,), backward)


def logsumexp(a: Tensor, axis: int):
    """Numerically stable log(sum(exp(a))) along `axis` (dropped in output)."""
    m = a.data.max(axis=axis, keepdims=True)
    shifted = np.exp(a.data - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out_data = (m + np.log(total)).squeeze(axis)
    softmax = shifted / total

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.expand_dims(g, axis) * softmax)

    return _make(out_data, (a,), backward)


def gather_rows(a: Tensor, idx: np.ndarray):
    """out[i] = a[i, idx[i]] for a 2-D tensor."""
    idx = np.asarray(idx)
    rows = np.arange(a.shape[0])

    def backward(g):
        if a.requires_grad:
            da = np.zeros_like(a.data)
            np.add.at(da, (rows, idx), g)
            a._accumulate(da)

    return _make(a.data[rows, idx], (a,), backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor):
    """2-D convolution, NCHW layout, stride 1, zero 'same' padding.

    x: [N, C, H, W], w: [F, C, kh, kw] (odd kernel), b: [F].
    """
    n, c, h, wd = x.shape
    f, c2, kh, kw = w.shape
    if c2 != c:
        raise ContractError(f"conv weight expects {c2} input channels, got {c}")
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((n, c, kh, kw, h, wd), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + h, j:j + wd]
    cols2 = cols.reshape(n, c * kh * kw, h * wd)
    w2 = w.data.reshape(f, c * kh * kw)
    out = np.matmul(w2, cols2).reshape(n, f, h, wd) + b.data[None, :, None, None]

    def backward(g):
        gl = g.reshape(n, f, h * wd)
        if b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if w.requires_grad:
            dw = np.matmul(gl, cols2.transpose(0, 2, 1)).sum(axis=0)
            w._accumulate(dw.reshape(w.shape))
        if x.requires_grad:
            dcols = np.matmul(w2.T, gl).reshape(n, c, kh, kw, h, wd)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + h, j:j + wd] += dcols[:, :, i, j]
            x._accumulate(dxp[:, :, ph:ph + h, pw:pw + wd])

    return _make(out, (x, w, b), backward)


def avg_pool2d(x: Tensor):
    """2x2 mean pooling; spatial dims must be even."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ContractError(f"avg_pool2d needs even spatial dims, got {h}x{w}")
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g):
        if x.requires_grad:
            up = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
            x._accumulate(up * 0.25)

    return _make(out, (x,), backward)


def spatial_mean(x: Tensor):
    """Global average pool: [N, C, H, W] -> [N, C]."""
    n, c, h, w = x.shape
    scale = 1.0 / (h * w)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.broadcast_to(g[:, :, None, None] * scale, x.shape).astype(x.dtype, copy=True))

    return _make(x.data.mean(axis=(2, 3)), (x,), backward)


def l2_normalize_rows(x: Tensor) -> Tensor:
    """Rows scaled to unit Euclidean norm; rejects zero rows."""
    norms_sq = tsum(mul(x, x), axis=1, keepdims=True)
    if np.any(norms_sq.data <= 0):
        raise ContractError("cannot normalize a zero embedding")
    return div(x, sqrt(norms_sq))
