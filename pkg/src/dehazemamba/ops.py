"""Differentiable primitives over Tensor values.

Each function computes its forward pass in plain numpy, then registers one
tape node whose closure implements the analytic adjoint. Broadcasting in
binary pointwise ops is deliberately restricted to identical shapes or
scalar-vs-tensor; richer alignment needs (channel scales, normalization,
state products) get dedicated primitives with exact adjoints instead of
silent numpy broadcasting.

Backward closures return one gradient per input, aligned positionally;
``None`` marks an input that needs no gradient.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError
from .tensor import Tensor, active_tape, default_dtype


def _t(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=default_dtype()))


def primitive(op: str, out_data: np.ndarray, inputs, backward) -> Tensor:
    """Register one op application on the active tape (if any)."""
    tape = active_tape()
    if tape is None:
        return Tensor._wrap(out_data)
    return tape.record(op, out_data, inputs, backward)


def _pair(name: str, a, b) -> tuple[Tensor, Tensor]:
    a, b = _t(a), _t(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise ShapeError(
            f"{name}: shapes {a.shape} and {b.shape} only broadcast when "
            "identical or one side is a scalar")
    return a, b


def _shrink(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient back onto a (possibly scalar) operand shape."""
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


# ---------------------------------------------------------------------------
# pointwise

def add(a, b) -> Tensor:
    a, b = _pair("add", a, b)
    out = a.data + b.data

    def bw(g):
        return _shrink(g, a.shape), _shrink(g, b.shape)

    return primitive("add", out, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _pair("sub", a, b)
    out = a.data - b.data

    def bw(g):
        return _shrink(g, a.shape), _shrink(-g, b.shape)

    return primitive("sub", out, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _pair("mul", a, b)
    ad, bd = a.data, b.data
    out = ad * bd

    def bw(g):
        return _shrink(g * bd, a.shape), _shrink(g * ad, b.shape)

    return primitive("mul", out, (a, b), bw)


def absolute(a) -> Tensor:
    a = _t(a)
    ad = a.data
    out = np.abs(ad)

    def bw(g):
        return (g * np.sign(ad),)

    return primitive("abs", out, (a,), bw)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Stable in both tails: exp of a nonpositive argument only.
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def sigmoid(a) -> Tensor:
    a = _t(a)
    out = _sigmoid(a.data)

    def bw(g):
        return (g * out * (1.0 - out),)

    return primitive("sigmoid", out, (a,), bw)


def silu(a) -> Tensor:
    a = _t(a)
    s = _sigmoid(a.data)
    out = a.data * s

    def bw(g):
        return (g * s * (1.0 + a.data * (1.0 - s)),)

    return primitive("silu", out, (a,), bw)


def softplus(a) -> Tensor:
    a = _t(a)
    out = np.logaddexp(np.zeros((), dtype=a.data.dtype), a.data)

    def bw(g):
        return (g * _sigmoid(a.data),)

    return primitive("softplus", out, (a,), bw)


def exp(a) -> Tensor:
    a = _t(a)
    out = np.exp(a.data)

    def bw(g):
        return (g * out,)

    return primitive("exp", out, (a,), bw)


# ---------------------------------------------------------------------------
# reductions

def _norm_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(ax % ndim for ax in axes)


def reduce_sum(a, axes=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    axs = _norm_axes(axes, a.ndim)
    out = a.data.sum(axis=axs, keepdims=keepdims)
    kd_shape = tuple(1 if i in axs else s for i, s in enumerate(a.shape))

    def bw(g):
        return (np.broadcast_to(g.reshape(kd_shape), a.shape),)

    return primitive("sum", out, (a,), bw)


def reduce_mean(a, axes=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    axs = _norm_axes(axes, a.ndim)
    count = 1
    for ax in axs:
        count *= a.shape[ax]
    out = a.data.mean(axis=axs, keepdims=keepdims)
    kd_shape = tuple(1 if i in axs else s for i, s in enumerate(a.shape))

    def bw(g):
        return (np.broadcast_to(g.reshape(kd_shape) / count, a.shape),)

    return primitive("mean", out, (a,), bw)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(a, shape) -> Tensor:
    a = _t(a)
    shape = tuple(shape)
    out = a.data.reshape(shape)

    def bw(g):
        return (g.reshape(a.shape),)

    return primitive("reshape", out, (a,), bw)


def transpose(a, axes) -> Tensor:
    a = _t(a)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of rank {a.ndim}")
    inverse = np.argsort(axes)
    out = np.transpose(a.data, axes)

    def bw(g):
        return (np.transpose(g, inverse),)

    return primitive("transpose", out, (a,), bw)


def flip(a, axis: int) -> Tensor:
    a = _t(a)
    out = np.flip(a.data, axis)

    def bw(g):
        return (np.flip(g, axis),)

    return primitive("flip", out, (a,), bw)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_t(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(first) or any(
                i != axis and t.shape[i] != first[i] for i in range(t.ndim)):
            raise ShapeError(
                f"concat: shapes {first} and {t.shape} differ off axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        sl = [slice(None)] * g.ndim
        grads = []
        for lo, hi in zip(offsets[:-1], offsets[1:]):
            sl[axis] = slice(lo, hi)
            grads.append(g[tuple(sl)])
        return grads

    return primitive("concat", out, tensors, bw)


# ---------------------------------------------------------------------------
# structured linear algebra

def linear(x, w, b=None) -> Tensor:
    """y = x @ w (+ b) over the last axis of x. w is [in, out]."""
    x, w = _t(x), _t(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(
            f"linear: input features {x.shape} do not match weight {w.shape}")
    out = x.data @ w.data
    inputs = [x, w]
    if b is not None:
        b = _t(b)
        if b.shape != (w.shape[1],):
            raise ShapeError(
                f"linear: bias {b.shape} does not match weight {w.shape}")
        out = out + b.data
        inputs.append(b)

    def bw(g):
        gm = g.reshape(-1, g.shape[-1])
        xm = x.data.reshape(-1, x.shape[-1])
        gx = (g @ w.data.T).reshape(x.shape)
        gw = xm.T @ gm
        if b is None:
            return gx, gw
        return gx, gw, gm.sum(axis=0)

    return primitive("linear", out, inputs, bw)


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0,
           groups: int = 1) -> Tensor:
    """2-D cross-correlation on [B,C,H,W] with odd square kernels.

    w is [C_out, C_in/groups, k, k]. Output extents must divide evenly:
    (H + 2*padding - k) % stride == 0, likewise for W.
    """
    x, w = _t(x), _t(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: need 4-d operands, got {x.shape}, {w.shape}")
    bsz, cin, h, wd = x.shape
    cout, cin_g, kh, kw = w.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigError(f"conv2d: kernel must be square and odd, got {kh}x{kw}")
    k = kh
    if cin % groups or cout % groups or cin_g != cin // groups:
        raise ShapeError(
            f"conv2d: channels {cin}->{cout} incompatible with groups={groups} "
            f"and weight {w.shape}")
    if (h + 2 * padding - k) % stride or (wd + 2 * padding - k) % stride:
        raise ConfigError(
            f"conv2d: non-integer output extent for input {h}x{wd}, kernel {k}, "
            f"stride {stride}, padding {padding}")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (wd + 2 * padding - k) // stride + 1

    cg, cog = cin // groups, cout // groups
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # im2col: one contiguous [g, B*Ho*Wo, Cg*k*k] matrix so the heavy
    # contractions below run as plain (batched) matmuls
    win = win.reshape(bsz, groups, cg, ho, wo, k, k)
    cols = np.ascontiguousarray(win.transpose(1, 0, 3, 4, 2, 5, 6))
    cols = cols.reshape(groups, bsz * ho * wo, cg * k * k)
    wmat = w.data.reshape(groups, cog, cg * k * k)
    out = np.matmul(cols, wmat.transpose(0, 2, 1))  # [g, B*Ho*Wo, Cog]
    out = out.reshape(groups, bsz, ho, wo, cog)
    out = np.ascontiguousarray(out.transpose(1, 0, 4, 2, 3))
    out = out.reshape(bsz, cout, ho, wo)
    inputs = [x, w]
    if b is not None:
        b = _t(b)
        if b.shape != (cout,):
            raise ShapeError(f"conv2d: bias {b.shape} does not match {cout} channels")
        out = out + b.data[None, :, None, None]
        inputs.append(b)

    def bw(g):
        gg = g.reshape(bsz, groups, cog, ho, wo)
        gmat = np.ascontiguousarray(gg.transpose(1, 0, 3, 4, 2))
        gmat = gmat.reshape(groups, bsz * ho * wo, cog)
        gw = np.matmul(gmat.transpose(0, 2, 1), cols)  # [g, Cog, Cg*k*k]
        gw = gw.reshape(w.shape)
        gcols = np.matmul(gmat, wmat)  # [g, B*Ho*Wo, Cg*k*k]
        gwin = gcols.reshape(groups, bsz, ho, wo, cg, k, k)
        gwin = gwin.transpose(1, 0, 4, 2, 3, 5, 6)
        hp, wp = h + 2 * padding, wd + 2 * padding
        gxp = np.zeros((bsz, groups, cg, hp, wp), dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                gxp[:, :, :, i:i + stride * ho:stride,
                    j:j + stride * wo:stride] += gwin[..., i, j]
        gx = gxp.reshape(bsz, cin, hp, wp)
        if padding:
            gx = gx[:, :, padding:-padding, padding:-padding]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return primitive("conv2d", out, inputs, bw)


def layernorm_channels(x, gamma, beta, eps: float = 1e-6) -> Tensor:
    """Layer normalization over the channel axis of [B,C,H,W]."""
    x, gamma, beta = _t(x), _t(gamma), _t(beta)
    if x.ndim != 4:
        raise ShapeError(f"layernorm_channels: need [B,C,H,W], got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"layernorm_channels: scale/shift {gamma.shape}/{beta.shape} do not "
            f"match {c} channels")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def bw(g):
        ggamma = np.einsum("bchw,bchw->c", g, xhat, optimize=True)
        gbeta = g.sum(axis=(0, 2, 3))
        gh = g * gamma.data[None, :, None, None]
        gh_mean = gh.mean(axis=1, keepdims=True)
        ghx_mean = np.mean(gh * xhat, axis=1, keepdims=True)
        gx = inv * (gh - gh_mean - xhat * ghx_mean)
        return gx, ggamma, gbeta

    return primitive("layernorm", out, (x, gamma, beta), bw)


def scale_channels(x, s) -> Tensor:
    """Multiply [B,C,H,W] by a per-channel scale of shape [C] or [B,C]."""
    x, s = _t(x), _t(s)
    if x.ndim != 4:
        raise ShapeError(f"scale_channels: need [B,C,H,W], got {x.shape}")
    b, c = x.shape[0], x.shape[1]
    if s.shape == (c,):
        sh = s.data[None, :, None, None]
        red = (0, 2, 3)
    elif s.shape == (b, c):
        sh = s.data[:, :, None, None]
        red = (2, 3)
    else:
        raise ShapeError(
            f"scale_channels: scale {s.shape} matches neither [C] nor [B,C] "
            f"for input {x.shape}")
    out = x.data * sh

    def bw(g):
        gs = (g * x.data).sum(axis=red).reshape(s.shape)
        return g * sh, gs

    return primitive("scale_channels", out, (x, s), bw)


def upsample_nearest(x, factor: int = 2) -> Tensor:
    """Nearest-neighbor upsampling of [B,C,H,W] by an integer factor."""
    x = _t(x)
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest: need [B,C,H,W], got {x.shape}")
    if factor < 1:
        raise ConfigError(f"upsample_nearest: factor must be >= 1, got {factor}")
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)
    b, c, h, w = x.shape

    def bw(g):
        return (g.reshape(b, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return primitive("upsample_nearest", out, (x,), bw)


def pixel_shuffle(x, factor: int = 2) -> Tensor:
    """Rearrange [B, C*r^2, H, W] into [B, C, H*r, W*r]."""
    x = _t(x)
    if x.ndim != 4:
        raise ShapeError(f"pixel_shuffle: need [B,C,H,W], got {x.shape}")
    b, c, h, w = x.shape
    r = factor
    if c % (r * r):
        raise ShapeError(
            f"pixel_shuffle: {c} channels not divisible by factor^2 = {r * r}")
    c2 = c // (r * r)
    y = reshape(x, (b, c2, r, r, h, w))
    y = transpose(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (b, c2, h * r, w * r))


def fft2(x) -> Tensor:
    """Unnormalized forward 2-D DFT per channel of [B,C,H,W].

    Returns [B,C,H,W,2] with the real and imaginary planes stacked on the
    trailing axis. H and W must be powers of two. The backward pass is the
    adjoint transform (the DFT is linear).
    """
    x = _t(x)
    if x.ndim != 4:
        raise ShapeError(f"fft2: need [B,C,H,W], got {x.shape}")
    h, w = x.shape[2], x.shape[3]
    for name, n in (("H", h), ("W", w)):
        if n < 1 or n & (n - 1):
            raise ConfigError(f"fft2: {name}={n} is not a power of two")
    spec = np.fft.fft2(x.data, axes=(2, 3))
    out = np.stack([spec.real, spec.imag], axis=-1).astype(x.dtype, copy=False)

    def bw(g):
        gc = g[..., 0].astype(np.float64) + 1j * g[..., 1].astype(np.float64)
        gx = np.fft.ifft2(gc, axes=(2, 3)).real * (h * w)
        return (gx.astype(x.dtype, copy=False),)

    return primitive("fft2", out, (x,), bw)


# ---------------------------------------------------------------------------
# operator sugar

Tensor.__add__ = lambda self, other: add(self, other)
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = lambda self, other: sub(self, other)
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = lambda self, other: mul(self, other)
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__neg__ = lambda self: mul(self, -1.0)
