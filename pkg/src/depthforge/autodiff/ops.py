"""Differentiable operations over :class:`Tensor`.

Every op builds its output eagerly with numpy and registers an analytic
backward closure on the active tape. Binary elementwise ops broadcast like
numpy; their backwards sum the broadcast axes away again. ``abs`` uses the
subgradient 0 at 0.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ShapeError
from .tensor import Tensor, as_tensor, record


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out = Tensor(a.data + b.data)
    return record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    out = Tensor(a.data - b.data)
    return record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    out = Tensor(a.data * b.data)
    return record(
        out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = Tensor(a.data / b.data)
    return record(
        out, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)
    return record(out, (a,), lambda g: (-g,))


def pow_const(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data ** p)
    return record(out, (a,), lambda g: (g * p * a.data ** (p - 1),))


def square(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * a.data)
    return record(out, (a,), lambda g: (g * 2.0 * a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.sqrt(a.data))
    return record(out, (a,), lambda g: (g * 0.5 / out.data,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.data))
    return record(out, (a,), lambda g: (g * out.data,))


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data))
    return record(out, (a,), lambda g: (g / a.data,))


def sin(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.sin(a.data))
    return record(out, (a,), lambda g: (g * np.cos(a.data),))


def cos(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.cos(a.data))
    return record(out, (a,), lambda g: (-g * np.sin(a.data),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # Split by sign so neither branch exponentiates a large positive value.
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(out_data)
    return record(out, (a,), lambda g: (g * out.data * (1.0 - out.data),))


def abs_(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.abs(a.data))
    return record(out, (a,), lambda g: (g * np.sign(a.data),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))
    return record(out, (a,), lambda g: (g * (a.data > 0),))


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    neg_part = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = Tensor(np.where(a.data > 0, a.data, neg_part))
    return record(out, (a,), lambda g: (g * np.where(a.data > 0, 1.0, neg_part + alpha),))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.clip(a.data, lo, hi))
    inside = (a.data > lo) & (a.data < hi)
    return record(out, (a,), lambda g: (g * inside,))


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "maximum")
    take_a = a.data >= b.data
    out = Tensor(np.where(take_a, a.data, b.data))
    return record(
        out, (a, b),
        lambda g: (_unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)),
    )


def minimum(a, b) -> Tensor:
    """Elementwise min; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "minimum")
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data))
    return record(
        out, (a, b),
        lambda g: (_unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)),
    )


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return record(out, (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    n = a.size / max(out.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape) / n,)

    return record(out, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    return record(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.transpose(axes))
    inv = None if axes is None else np.argsort(axes)
    return record(out, (a,), lambda g: (g.transpose(inv),))


def index(a, idx) -> Tensor:
    """Basic (slice/int/ellipsis) indexing; backward scatters into zeros."""
    a = as_tensor(a)
    out = Tensor(a.data[idx])

    def backward(g):
        full = np.zeros(a.shape)
        full[idx] += g
        return (full,)

    return record(out, (a,), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return record(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)
    return record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = Tensor(e / e.sum(axis=axis, keepdims=True))

    def backward(g):
        y = out.data
        return ((g - (g * y).sum(axis=axis, keepdims=True)) * y,)

    return record(out, (a,), backward)


# ---------------------------------------------------------------------------
# spatial ops on (N, C, H, W)
# ---------------------------------------------------------------------------

def _require_nchw(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op} expects a (N, C, H, W) tensor, got shape {x.shape}")


def conv2d(x, w, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (N, Cin, H, W) with (Cout, Cin, kh, kw)."""
    x, w = as_tensor(x), as_tensor(w)
    _require_nchw(x, "conv2d")
    if w.ndim != 4 or w.shape[1] != x.shape[1]:
        raise ShapeError(f"conv2d: kernel {w.shape} does not match input {x.shape}")
    if stride < 1:
        raise ConfigError(f"conv2d: stride must be >= 1, got {stride}")
    n, c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ConfigError(f"conv2d: kernel {kh}x{kw} does not fit padded input {h}x{wd} (pad {padding})")
    if (h + 2 * padding - kh) % stride or (wd + 2 * padding - kw) % stride:
        raise ConfigError(
            f"conv2d: output extent is not an integer for input {h}x{wd}, "
            f"kernel {kh}x{kw}, stride {stride}, padding {padding}")
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (wd + 2 * padding - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out_data = np.einsum("nchwij,ocij->nohw", win, w.data, optimize=True)
    if bias is not None:
        bias = as_tensor(bias)
        out_data = out_data + bias.data[None, :, None, None]
    out = Tensor(out_data)

    def backward(g):
        dw = np.einsum("nohw,nchwij->ocij", g, win, optimize=True)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                patch = np.einsum("nohw,oc->nchw", g, w.data[:, :, i, j], optimize=True)
                dxp[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += patch
        dx = dxp[:, :, padding:padding + h, padding:padding + wd]
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2, 3))

    inputs = (x, w) if bias is None else (x, w, bias)
    return record(out, inputs, backward)


def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch norm over (N, H, W); running stats updated in train mode.

    ``running_mean``/``running_var`` are plain arrays owned by the layer and
    mutated in place; they are state, not graph nodes.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _require_nchw(x, "batch_norm")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batch_norm: affine shapes {gamma.shape}/{beta.shape} do not match {c} channels")
    axes = (0, 2, 3)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = Tensor(xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None])

    def backward(g):
        gview = gamma.data[None, :, None, None]
        dbeta = g.sum(axis=axes)
        dgamma = (g * xhat).sum(axis=axes)
        if training:
            m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
            gx = g * gview
            dx = (gx - gx.mean(axis=axes, keepdims=True)
                  - xhat * (gx * xhat).sum(axis=axes, keepdims=True) / m)
            dx *= inv_std[None, :, None, None]
        else:
            dx = g * gview * inv_std[None, :, None, None]
        return dx, dgamma, dbeta

    return record(out, (x, gamma, beta), backward)


def global_avg_pool(x) -> Tensor:
    """(N, C, H, W) -> (N, C) spatial mean."""
    x = as_tensor(x)
    _require_nchw(x, "global_avg_pool")
    n, c, h, w = x.shape
    out = Tensor(x.data.mean(axis=(2, 3)))
    return record(
        out, (x,),
        lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape),),
    )


def nearest_upsample(x, factor: int = 2) -> Tensor:
    """Replicate each pixel ``factor`` times along both spatial axes."""
    x = as_tensor(x)
    _require_nchw(x, "nearest_upsample")
    if factor < 1 or int(factor) != factor:
        raise ConfigError(f"nearest_upsample: factor must be a positive integer, got {factor}")
    factor = int(factor)
    n, c, h, w = x.shape
    out = Tensor(np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3))
    return record(
        out, (x,),
        lambda g: (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),),
    )


def avg_pool3x3_reflect(x) -> Tensor:
    """3x3 box filter with reflect padding, same output size. Needs H, W >= 2."""
    x = as_tensor(x)
    _require_nchw(x, "avg_pool3x3_reflect")
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"avg_pool3x3_reflect: spatial extent must be >= 2, got {h}x{w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="reflect")
    out_data = np.zeros_like(x.data)
    for i in range(3):
        for j in range(3):
            out_data += xp[:, :, i:i + h, j:j + w]
    out = Tensor(out_data / 9.0)

    def backward(g):
        gp = np.zeros_like(xp)
        gs = g / 9.0
        for i in range(3):
            for j in range(3):
                gp[:, :, i:i + h, j:j + w] += gs
        # adjoint of reflect padding: fold the border rows/cols back inside
        rows = gp[:, :, 1:-1, :].copy()
        rows[:, :, 1, :] += gp[:, :, 0, :]
        rows[:, :, -2, :] += gp[:, :, -1, :]
        cols = rows[:, :, :, 1:-1].copy()
        cols[:, :, :, 1] += rows[:, :, :, 0]
        cols[:, :, :, -2] += rows[:, :, :, -1]
        return (cols,)

    return record(out, (x,), backward)


# operator sugar -------------------------------------------------------------

Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.__pow__ = pow_const
Tensor.__getitem__ = index
