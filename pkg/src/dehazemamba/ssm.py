"""Selective state-space scan kernels and the cross-modal difference scan.

The recurrence is sequential in the token index by contract:

    a_bar[t] = exp(delta[t] * a)           (delta broadcast over the state axis)
    b_bar[t] = delta[t] * b_in[t]
    h[t]     = a_bar[t] * h[t-1] + b_bar[t] * x[t],   h[-1] = 0
    y[t]     = sum_N c_out[t] * h[t] + d_skip * x[t]

``selective_scan`` runs it as one fused tape primitive: the forward loop is a
thin numpy recurrence over t and the backward pass propagates an adjoint
state with the reverse recurrence gh[t] = c_out[t]*gy[t] + a_bar[t+1]*gh[t+1],
then recovers every input gradient with vectorized contractions. This keeps
the tape at one node per scan instead of O(L) nodes.

``css2d`` is the cross-modal variant: both modalities are scanned with the
shared output projection |c_rgb - c_sar| and the result is the absolute
difference of the two decoded sequences, so identical inputs with identical
parameters annihilate exactly.

``ss2d`` flattens an image in four scan orders. "Reversed" orders apply the
same flatten to the horizontally mirrored image, which makes the direction
set closed under horizontal flips: mirroring the input and swapping the
parameter pairs mirrors the output exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import ops
from .errors import AlignmentError, DomainError, ShapeError
from .tensor import Tensor

__all__ = [
    "SsmParams", "discretize", "selective_scan", "css2d", "ss2d",
    "SCAN_DIRECTIONS", "flatten_grid", "unflatten_grid",
]


@dataclass
class SsmParams:
    """Per-token scan parameters for one sequence.

    delta:  [B,L,D] nonnegative step sizes (softplus output upstream)
    a:      [D,N] continuous state matrix, strictly negative at init
    b_in:   [B,L,N] input projection
    c_out:  [B,L,N] output projection
    d_skip: [D] direct input passthrough
    """

    delta: Tensor
    a: Tensor
    b_in: Tensor
    c_out: Tensor
    d_skip: Tensor


def _check_scan(x: Tensor, p: SsmParams) -> None:
    if x.ndim != 3:
        raise ShapeError(f"selective_scan: x must be [B,L,D], got {x.shape}")
    b, l, d = x.shape
    if p.a.ndim != 2 or p.a.shape[0] != d:
        raise ShapeError(
            f"selective_scan: a {p.a.shape} does not match channels {d}")
    n = p.a.shape[1]
    if p.delta.shape != (b, l, d):
        raise ShapeError(
            f"selective_scan: delta {p.delta.shape} does not match x {x.shape}")
    if p.b_in.shape != (b, l, n) or p.c_out.shape != (b, l, n):
        raise ShapeError(
            f"selective_scan: b_in {p.b_in.shape} / c_out {p.c_out.shape} do "
            f"not match [B,L,N] = {(b, l, n)}")
    if p.d_skip.shape != (d,):
        raise ShapeError(
            f"selective_scan: d_skip {p.d_skip.shape} does not match channels {d}")


def discretize(delta: Tensor, a: Tensor, b_in: Tensor) -> tuple[Tensor, Tensor]:
    """Zero-order-hold style discretization of the continuous parameters.

    Returns (a_bar, b_bar) of shape [B,L,D,N]:
    a_bar = exp(delta * a), b_bar = delta * b_in, with delta broadcast over
    the state axis. delta must be nonnegative (it comes out of a softplus);
    a strictly negative delta raises DomainError.
    """
    delta, a, b_in = ops._t(delta), ops._t(a), ops._t(b_in)
    if np.any(delta.data < 0):
        raise DomainError(
            "discretize: negative delta; the step size must pass through "
            "softplus first")
    if delta.ndim != 3 or a.ndim != 2 or b_in.ndim != 3:
        raise ShapeError(
            f"discretize: need delta [B,L,D], a [D,N], b_in [B,L,N]; got "
            f"{delta.shape}, {a.shape}, {b_in.shape}")
    if delta.shape[-1] != a.shape[0] or b_in.shape[-1] != a.shape[1]:
        raise ShapeError(
            f"discretize: delta {delta.shape}, a {a.shape}, b_in {b_in.shape} "
            "disagree on D or N")

    dd, ad, bd = delta.data, a.data, b_in.data
    a_bar = np.exp(dd[..., None] * ad)

    def bw_a(g):
        t = g * a_bar
        gdelta = np.einsum("bldn,dn->bld", t, ad, optimize=True)
        ga = np.einsum("bldn,bld->dn", t, dd, optimize=True)
        return gdelta, ga

    a_bar_t = ops.primitive("discretize_a", a_bar, (delta, a), bw_a)

    b_bar = dd[..., None] * bd[:, :, None, :]

    def bw_b(g):
        gdelta = np.einsum("bldn,bln->bld", g, bd, optimize=True)
        gb = np.einsum("bldn,bld->bln", g, dd, optimize=True)
        return gdelta, gb

    b_bar_t = ops.primitive("discretize_b", b_bar, (delta, b_in), bw_b)
    return a_bar_t, b_bar_t


def _time_major(arr):
    return np.ascontiguousarray(arr.transpose(1, 0, 2))


def _scan_forward(x, delta, a, b_in, c_out, d_skip, groups: int = 1):
    """Tape-free scan. Returns y and the saved arrays backward needs.

    With groups > 1 the batch axis is interpreted as `groups` consecutive
    blocks, each with its own state matrix a[g] ([G,D,N]) and passthrough
    d_skip[g] ([G,D]); this lets independent scan heads share one loop.
    Internals run time-major ([L,B,...]) so every loop step touches one
    contiguous slab.
    """
    bsz, l, d = x.shape
    n = a.shape[-1]
    bg = bsz // groups
    xl, dl, bl, cl = (_time_major(v) for v in (x, delta, b_in, c_out))
    a_full = np.repeat(a.reshape(groups, d, n), bg, axis=0)
    d_full = np.repeat(d_skip.reshape(groups, d), bg, axis=0)
    a_bar = dl[..., None] * a_full
    np.exp(a_bar, out=a_bar)
    bx = (dl * xl)[..., None] * bl[:, :, None, :]
    hs = np.empty_like(a_bar)
    flat = bsz * d * n
    a2 = a_bar.reshape(l, flat)
    b2 = bx.reshape(l, flat)
    h2 = hs.reshape(l, flat)
    h = np.zeros(bsz * d * n, dtype=x.dtype)
    for t in range(l):
        ht = h2[t]
        np.multiply(a2[t], h, out=ht)
        ht += b2[t]
        h = ht
    y = np.einsum("lbn,lbdn->lbd", cl, hs, optimize=True)
    y += d_full * xl
    return _time_major(y), (a_bar, hs, a_full, d_full)


def _scan_backward(gy, x, delta, a, b_in, c_out, d_skip, saved,
                   groups: int = 1):
    """Adjoint of _scan_forward; returns gradients for all six inputs."""
    bsz, l, d = x.shape
    n = a.shape[-1]
    bg = bsz // groups
    a_bar, hs, a_full, d_full = saved
    gyl, xl, dl, bl = (_time_major(v) for v in (gy, x, delta, b_in))
    cl = _time_major(c_out)
    gyc = gyl[..., None] * cl[:, :, None, :]
    ghs = np.empty_like(gyc)
    flat = bsz * d * n
    g2 = ghs.reshape(l, flat)
    y2 = gyc.reshape(l, flat)
    a2 = a_bar.reshape(l, flat)
    carry = np.zeros(bsz * d * n, dtype=x.dtype)
    for t in range(l - 1, -1, -1):
        gt = g2[t]
        np.add(y2[t], carry, out=gt)
        if t:
            np.multiply(gt, a2[t], out=carry)
    t1 = np.empty_like(hs)
    if l:
        t1[0] = 0.0
        np.multiply(ghs[1:], hs[:-1], out=t1[1:])
    t1 *= a_bar
    sb = np.einsum("lbdn,lbn->lbd", ghs, bl, optimize=True)
    gdelta = np.einsum("lbdn,bdn->lbd", t1, a_full, optimize=True)
    gdelta += sb * xl
    ga = np.einsum("lbdn,lbd->bdn", t1, dl, optimize=True)
    ga = ga.reshape(groups, bg, d, n).sum(axis=1).reshape(a.shape)
    gb_in = np.einsum("lbdn,lbd->lbn", ghs, dl * xl, optimize=True)
    gc_out = np.einsum("lbd,lbdn->lbn", gyl, hs, optimize=True)
    gx = gyl * d_full + sb * dl
    gd_skip = np.einsum("lbd,lbd->bd", gyl, xl, optimize=True)
    gd_skip = gd_skip.reshape(groups, bg, d).sum(axis=1).reshape(d_skip.shape)
    return (_time_major(gx), _time_major(gdelta), ga, _time_major(gb_in),
            _time_major(gc_out), gd_skip)


def _record_scan(x, delta, a, b_in, c_out, d_skip, groups: int) -> Tensor:
    arrays = (x.data, delta.data, a.data, b_in.data, c_out.data, d_skip.data)
    y, saved = _scan_forward(*arrays, groups=groups)

    def bw(g):
        return _scan_backward(g, *arrays, saved, groups=groups)

    return ops.primitive("selective_scan", y,
                         (x, delta, a, b_in, c_out, d_skip), bw)


def selective_scan(x: Tensor, params: SsmParams) -> Tensor:
    """Run the selective recurrence over a [B,L,D] sequence.

    Linear in L; the loop carries a [B,D,N] state. An empty sequence
    (L == 0) returns an empty output.
    """
    x = ops._t(x)
    _check_scan(x, params)
    p = params
    return _record_scan(x, p.delta, p.a, p.b_in, p.c_out, p.d_skip, 1)


def _selective_scan_grouped(x: Tensor, delta: Tensor, a: Tensor,
                            b_in: Tensor, c_out: Tensor,
                            d_skip: Tensor) -> Tensor:
    """Several independent scan heads fused into one recurrence.

    The batch axis of x/delta/b_in/c_out holds G consecutive blocks of
    equal size; a is [G,D,N] and d_skip is [G,D]. Used by ss2d to run all
    four direction heads in a single loop over the sequence.
    """
    x = ops._t(x)
    if a.ndim != 3 or d_skip.ndim != 2:
        raise ShapeError(
            f"grouped scan: a must be [G,D,N] and d_skip [G,D], got "
            f"{a.shape} / {d_skip.shape}")
    g = a.shape[0]
    if g < 1 or x.shape[0] % g:
        raise ShapeError(
            f"grouped scan: batch {x.shape[0]} is not divisible into "
            f"{g} groups")
    return _record_scan(x, delta, a, b_in, c_out, d_skip, g)


def css2d(x_rgb: Tensor, x_sar: Tensor, p_rgb: SsmParams,
          p_sar: SsmParams) -> Tensor:
    """Cross-modal scan over co-registered [B,L,D] sequences.

    Both modalities are decoded through the shared projection
    |c_rgb - c_sar|; the output is |y_rgb - y_sar|, which is exactly zero
    whenever inputs and parameters coincide. Scans run in a single row-major
    direction; bidirectional context comes from ss2d elsewhere.
    """
    x_rgb, x_sar = ops._t(x_rgb), ops._t(x_sar)
    if x_rgb.shape != x_sar.shape:
        raise AlignmentError(
            f"css2d: modality shapes {x_rgb.shape} and {x_sar.shape} differ")
    if p_rgb.c_out.shape != p_sar.c_out.shape:
        raise AlignmentError(
            f"css2d: output projections {p_rgb.c_out.shape} and "
            f"{p_sar.c_out.shape} differ")
    c_shared = ops.absolute(ops.sub(p_rgb.c_out, p_sar.c_out))
    y_rgb = selective_scan(x_rgb, replace(p_rgb, c_out=c_shared))
    y_sar = selective_scan(x_sar, replace(p_sar, c_out=c_shared))
    return ops.absolute(ops.sub(y_rgb, y_sar))


# ---------------------------------------------------------------------------
# four-direction image scan

SCAN_DIRECTIONS = ("rows", "rows_mirror", "cols", "cols_mirror")


def flatten_grid(x: Tensor, direction: str) -> Tensor:
    """Flatten [B,C,H,W] into a [B,H*W,C] token sequence.

    rows: row-major raster. cols: column-major raster. The *_mirror
    variants apply the same raster to the horizontally flipped image.
    """
    if x.ndim != 4:
        raise ShapeError(f"flatten_grid: need [B,C,H,W], got {x.shape}")
    b, c, h, w = x.shape
    if direction not in SCAN_DIRECTIONS:
        raise ShapeError(f"flatten_grid: unknown direction {direction!r}")
    if direction.endswith("_mirror"):
        x = ops.flip(x, 3)
    if direction.startswith("cols"):
        x = ops.transpose(x, (0, 1, 3, 2))
    seq = ops.reshape(x, (b, c, h * w))
    return ops.transpose(seq, (0, 2, 1))


def unflatten_grid(seq: Tensor, direction: str, height: int, width: int) -> Tensor:
    """Inverse of flatten_grid for the same direction and extents."""
    b = seq.shape[0]
    c = seq.shape[2]
    x = ops.transpose(seq, (0, 2, 1))
    if direction.startswith("cols"):
        x = ops.reshape(x, (b, c, width, height))
        x = ops.transpose(x, (0, 1, 3, 2))
    else:
        x = ops.reshape(x, (b, c, height, width))
    if direction.endswith("_mirror"):
        x = ops.flip(x, 3)
    return x


def _flatten_np(x: np.ndarray, direction: str) -> np.ndarray:
    b, c = x.shape[:2]
    if direction.endswith("_mirror"):
        x = x[:, :, :, ::-1]
    if direction.startswith("cols"):
        x = x.transpose(0, 1, 3, 2)
    return x.reshape(b, c, -1).transpose(0, 2, 1)


def _unflatten_np(seq: np.ndarray, direction: str, height: int,
                  width: int) -> np.ndarray:
    b, _, c = seq.shape
    x = seq.transpose(0, 2, 1)
    if direction.startswith("cols"):
        x = x.reshape(b, c, width, height).transpose(0, 1, 3, 2)
    else:
        x = x.reshape(b, c, height, width)
    if direction.endswith("_mirror"):
        x = x[:, :, :, ::-1]
    return x


def _sum_unflatten(y: Tensor, height: int, width: int) -> Tensor:
    """Fold a 4-direction stacked sequence [4B,L,C] back to one image.

    Each block is unflattened in its own direction and the four images are
    summed. The adjoint re-flattens the incoming gradient into every
    direction layout and stacks the copies.
    """
    bsz = y.shape[0] // 4
    out = None
    for i, direction in enumerate(SCAN_DIRECTIONS):
        img = _unflatten_np(y.data[i * bsz:(i + 1) * bsz], direction,
                            height, width)
        out = img.copy() if out is None else out + img

    def bw(g):
        return (np.concatenate([_flatten_np(g, d) for d in SCAN_DIRECTIONS],
                               axis=0),)

    return ops.primitive("sum_unflatten", out, (y,), bw)


def ss2d(x: Tensor, heads) -> Tensor:
    """Four-direction 2-D selective scan over [B,C,H,W].

    ``heads`` is a sequence of four callables, one per direction in
    SCAN_DIRECTIONS order; each maps a [B,L,C] sequence to its SsmParams.
    The four direction outputs are summed. All four scans run as one
    grouped recurrence so the sequential loop is paid once.
    """
    if len(heads) != 4:
        raise ShapeError(f"ss2d: need 4 direction heads, got {len(heads)}")
    if x.ndim != 4:
        raise ShapeError(f"ss2d: need [B,C,H,W], got {x.shape}")
    h, w = x.shape[2], x.shape[3]
    seqs, params = [], []
    for direction, head in zip(SCAN_DIRECTIONS, heads):
        seq = flatten_grid(x, direction)
        seqs.append(seq)
        params.append(head(seq))
    d, n = params[0].a.shape
    xs = ops.concat(seqs, axis=0)
    delta = ops.concat([p.delta for p in params], axis=0)
    b_in = ops.concat([p.b_in for p in params], axis=0)
    c_out = ops.concat([p.c_out for p in params], axis=0)
    a = ops.concat([ops.reshape(p.a, (1, d, n)) for p in params], axis=0)
    d_skip = ops.concat([ops.reshape(p.d_skip, (1, d)) for p in params],
                        axis=0)
    y = _selective_scan_grouped(xs, delta, a, b_in, c_out, d_skip)
    return _sum_unflatten(y, h, w)
