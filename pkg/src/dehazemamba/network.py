"""SAR-guided dehazing network built on selective state-space scans.

Dual-branch encoder (optical + SAR) with three stages of DMBlocks, a
haze-perception fusion step (HPDM) and a progressive fusion step (PFM) per
stage injected into the optical stream, then a two-stage decoder with
pixel-shuffle upsampling and SK skip fusion. The network predicts a residual
added to the hazy input; the output head starts at zero so an untrained
model is an exact identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import AlignmentError, ConfigError, ShapeError
from .ssm import SsmParams, css2d, flatten_grid, ss2d, unflatten_grid
from .tensor import Tensor, default_dtype

__all__ = [
    "ModelConfig", "Module", "Conv2d", "Linear", "LayerNorm", "Extract",
    "SsmHead", "JointGate", "Hpdm", "Pfm", "Vss", "VssBlock", "MlpBlock",
    "DmBlock", "SkFusion", "DehazeMamba", "truncated_normal",
]

_PRESETS = {
    # depths per stage [enc1, enc2, enc3(bottleneck), dec1, dec2]
    "micro": {"depths": (1, 1, 1, 1, 1), "widths": (8, 16, 32, 16, 8),
              "state_size": 4},
    "T": {"depths": (2, 2, 2, 1, 1), "widths": (24, 48, 96, 48, 24),
          "state_size": 16},
    "B": {"depths": (4, 4, 4, 2, 2), "widths": (24, 48, 96, 48, 24),
          "state_size": 16},
    "L": {"depths": (8, 8, 8, 4, 4), "widths": (24, 48, 96, 48, 24),
          "state_size": 16},
}


@dataclass
class ModelConfig:
    """Architecture hyperparameters; see preset() for the named variants."""

    variant: str = "micro"
    depths: tuple[int, ...] = (1, 1, 1, 1, 1)
    widths: tuple[int, ...] = (8, 16, 32, 16, 8)
    state_size: int = 4
    expand: int = 2
    force_w1: float | None = None

    @classmethod
    def preset(cls, variant: str, **overrides) -> "ModelConfig":
        if variant not in _PRESETS:
            raise ConfigError(
                f"unknown model variant {variant!r}; choose from "
                f"{sorted(_PRESETS)}")
        kw = dict(_PRESETS[variant])
        kw.update(overrides)
        cfg = cls(variant=variant, **kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if len(self.depths) != 5 or len(self.widths) != 5:
            raise ConfigError(
                f"depths/widths must have 5 stages, got {self.depths} / "
                f"{self.widths}")
        if any(d < 1 for d in self.depths) or any(w < 1 for w in self.widths):
            raise ConfigError("depths and widths must be positive")
        if not (self.widths[0] < self.widths[1] < self.widths[2]):
            raise ConfigError(
                f"encoder widths must be strictly increasing, got "
                f"{self.widths[:3]}")
        if self.variant in _PRESETS:
            want = _PRESETS[self.variant]["depths"]
            if tuple(self.depths) != want:
                raise ConfigError(
                    f"variant {self.variant} fixes depths {want}, got "
                    f"{tuple(self.depths)}")
            if self.variant == "micro" and tuple(self.widths) != (8, 16, 32, 16, 8):
                raise ConfigError(
                    f"variant micro fixes widths (8, 16, 32, 16, 8), got "
                    f"{tuple(self.widths)}")
        else:
            raise ConfigError(
                f"unknown model variant {self.variant!r}; choose from "
                f"{sorted(_PRESETS)}")
        if self.state_size < 1:
            raise ConfigError(f"state_size must be positive, got {self.state_size}")
        if self.expand < 1:
            raise ConfigError(f"expand must be >= 1, got {self.expand}")
        if self.force_w1 is not None and not (0.0 <= self.force_w1 <= 1.0):
            raise ConfigError(
                f"force_w1 must lie in [0, 1], got {self.force_w1}")


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02
                     ) -> np.ndarray:
    """Normal(0, std) samples resampled until they fall within 2 std."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out.astype(default_dtype())


def _param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class Module:
    """Minimal parameter container; children are discovered from attributes."""

    def named_params(self, prefix: str = ""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield path, value
            elif isinstance(value, Module):
                yield from value.named_params(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_params(f"{path}.{i}.")

    def param_dict(self) -> dict[str, Tensor]:
        return dict(self.named_params())

    def param_count(self) -> int:
        return sum(p.size for _, p in self.named_params())


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng, stride: int = 1,
                 padding: int = 0, groups: int = 1, zero_init: bool = False):
        shape = (cout, cin // groups, kernel, kernel)
        if zero_init:
            w = np.zeros(shape, dtype=default_dtype())
        else:
            w = truncated_normal(rng, shape)
        self.w = _param(w)
        self.b = _param(np.zeros(cout, dtype=default_dtype()))
        self.stride = stride
        self.padding = padding
        self.groups = groups

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.w, self.b, stride=self.stride,
                          padding=self.padding, groups=self.groups)


class Linear(Module):
    def __init__(self, din: int, dout: int, rng):
        self.w = _param(truncated_normal(rng, (din, dout)))
        self.b = _param(np.zeros(dout, dtype=default_dtype()))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.w, self.b)


class LayerNorm(Module):
    """Channel-axis layer normalization for [B,C,H,W], eps 1e-6."""

    def __init__(self, channels: int):
        self.gamma = _param(np.ones(channels, dtype=default_dtype()))
        self.beta = _param(np.zeros(channels, dtype=default_dtype()))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layernorm_channels(x, self.gamma, self.beta)


class Extract(Module):
    """Shallow feature extraction: 1x1 conv, depthwise 3x3 conv, SiLU."""

    def __init__(self, channels: int, rng):
        self.pointwise = Conv2d(channels, channels, 1, rng)
        self.depthwise = Conv2d(channels, channels, 3, rng, padding=1,
                                groups=channels)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.silu(self.depthwise(self.pointwise(x)))


class SsmHead(Module):
    """Projects a [B,L,D] sequence to its per-token scan parameters.

    The step-size bias is initialized so softplus(bias) lands log-uniformly
    in [1e-3, 1e-1]; the state matrix starts at the negative integer ramp
    a[d, n] = -(n + 1); the passthrough starts at one.
    """

    def __init__(self, dim: int, state_size: int, rng):
        self.dt_proj = Linear(dim, dim, rng)
        dt0 = np.exp(rng.uniform(math.log(1e-3), math.log(1e-1), size=dim))
        self.dt_proj.b = _param(np.log(np.expm1(dt0)).astype(default_dtype()))
        self.b_proj = Linear(dim, state_size, rng)
        self.c_proj = Linear(dim, state_size, rng)
        ramp = -np.arange(1, state_size + 1, dtype=default_dtype())
        self.a = _param(np.broadcast_to(ramp, (dim, state_size)).copy())
        self.d = _param(np.ones(dim, dtype=default_dtype()))

    def __call__(self, seq: Tensor) -> SsmParams:
        delta = ops.softplus(self.dt_proj(seq))
        return SsmParams(delta=delta, a=self.a, b_in=self.b_proj(seq),
                         c_out=self.c_proj(seq), d_skip=self.d)


class JointGate(Module):
    """SiLU of the sum of per-modality 1x1 projections."""

    def __init__(self, channels: int, rng):
        self.proj_opt = Conv2d(channels, channels, 1, rng)
        self.proj_sar = Conv2d(channels, channels, 1, rng)

    def __call__(self, r: Tensor, s: Tensor) -> Tensor:
        return ops.silu(ops.add(self.proj_opt(r), self.proj_sar(s)))


class Hpdm(Module):
    """Haze-perception fusion of optical and SAR feature maps.

    Both branches pass through Extract, are scanned cross-modally in a
    single row-major direction, gated jointly, and projected to a sigmoid
    weight map w1. Output is the convex combination w1*sar + (1-w1)*optical
    together with the map itself. ``force_w1`` pins the map to a constant
    (ablation hook).
    """

    def __init__(self, channels: int, state_size: int, rng,
                 force_w1: float | None = None):
        self.extract_opt = Extract(channels, rng)
        self.extract_sar = Extract(channels, rng)
        self.head_opt = SsmHead(channels, state_size, rng)
        self.head_sar = SsmHead(channels, state_size, rng)
        self.gate = JointGate(channels, rng)
        self.weight_proj = Conv2d(channels, channels, 1, rng)
        self.force_w1 = force_w1

    def __call__(self, r: Tensor, s: Tensor) -> tuple[Tensor, Tensor]:
        if r.shape != s.shape:
            raise AlignmentError(
                f"hpdm: branch shapes {r.shape} and {s.shape} differ")
        h, w = r.shape[2], r.shape[3]
        seq_r = flatten_grid(self.extract_opt(r), "rows")
        seq_s = flatten_grid(self.extract_sar(s), "rows")
        diff = css2d(seq_r, seq_s, self.head_opt(seq_r), self.head_sar(seq_s))
        diff = unflatten_grid(diff, "rows", h, w)
        gated = ops.mul(self.gate(r, s), diff)
        if self.force_w1 is not None:
            w1 = Tensor(np.full(r.shape, self.force_w1, dtype=r.dtype))
        else:
            w1 = ops.sigmoid(self.weight_proj(gated))
        fused = ops.add(ops.mul(w1, s), ops.mul(ops.sub(1.0, w1), r))
        return fused, w1


class Vss(Module):
    """Gated selective-scan unit: project, depthwise conv, SiLU, ss2d,
    channel norm, gate, project back."""

    def __init__(self, channels: int, state_size: int, rng):
        self.proj_main = Conv2d(channels, channels, 1, rng)
        self.proj_gate = Conv2d(channels, channels, 1, rng)
        self.dwconv = Conv2d(channels, channels, 3, rng, padding=1,
                             groups=channels)
        self.heads = [SsmHead(channels, state_size, rng) for _ in range(4)]
        self.norm = LayerNorm(channels)
        self.proj_out = Conv2d(channels, channels, 1, rng)

    def __call__(self, x: Tensor) -> Tensor:
        main = ops.silu(self.dwconv(self.proj_main(x)))
        y = self.norm(ss2d(main, self.heads))
        y = ops.mul(y, ops.silu(self.proj_gate(x)))
        return self.proj_out(y)


class VssBlock(Module):
    """Residual scan block: x + alpha * Vss(LN(x)), alpha per channel."""

    def __init__(self, channels: int, state_size: int, rng):
        self.ln = LayerNorm(channels)
        self.vss = Vss(channels, state_size, rng)
        self.alpha = _param(np.ones(channels, dtype=default_dtype()))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(x, ops.scale_channels(self.vss(self.ln(x)), self.alpha))


class MlpBlock(Module):
    """Residual channel MLP: x + beta * W2 silu(W1 LN(x)), beta per channel."""

    def __init__(self, channels: int, expand: int, rng):
        hidden = channels * expand
        self.ln = LayerNorm(channels)
        self.fc1 = Conv2d(channels, hidden, 1, rng)
        self.fc2 = Conv2d(hidden, channels, 1, rng)
        self.beta = _param(np.ones(channels, dtype=default_dtype()))

    def __call__(self, x: Tensor) -> Tensor:
        y = self.fc2(ops.silu(self.fc1(self.ln(x))))
        return ops.add(x, ops.scale_channels(y, self.beta))


class DmBlock(Module):
    """Scan block followed by MLP block, both gated residuals."""

    def __init__(self, channels: int, state_size: int, expand: int, rng):
        self.scan = VssBlock(channels, state_size, rng)
        self.mlp = MlpBlock(channels, expand, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.mlp(self.scan(x))


class Pfm(Module):
    """Progressive fusion: coarse fusion conv, sigmoid weighting of both
    branches, then a gated scan block over the concatenated triple."""

    def __init__(self, channels: int, state_size: int, rng):
        self.coarse = Conv2d(2 * channels, channels, 3, rng, padding=1)
        self.refine = VssBlock(3 * channels, state_size, rng)
        self.out = Conv2d(3 * channels, channels, 3, rng, padding=1)

    def __call__(self, f_o: Tensor, f_s: Tensor) -> Tensor:
        if f_o.shape != f_s.shape:
            raise AlignmentError(
                f"pfm: branch shapes {f_o.shape} and {f_s.shape} differ")
        f_cf = self.coarse(ops.concat([f_o, f_s], axis=1))
        w2 = ops.sigmoid(f_cf)
        f_ao = ops.mul(w2, f_o)
        f_as = ops.mul(ops.sub(1.0, w2), f_s)
        return self.out(self.refine(ops.concat([f_ao, f_as, f_cf], axis=1)))


class SkFusion(Module):
    """Per-channel two-branch softmax attention over pooled descriptors.

    Both branches share the bottleneck; the attention pair sums to one per
    channel by construction (complement computed as 1 - a).
    """

    def __init__(self, channels: int, rng):
        hidden = max(4, channels // 4)
        self.fc1 = Linear(channels, hidden, rng)
        self.fc2 = Linear(hidden, channels, rng)

    def _logits(self, x: Tensor) -> Tensor:
        pooled = ops.reduce_mean(x, axes=(2, 3))
        return self.fc2(ops.silu(self.fc1(pooled)))

    def __call__(self, skip: Tensor, main: Tensor) -> Tensor:
        if skip.shape != main.shape:
            raise AlignmentError(
                f"sk_fusion: branch shapes {skip.shape} and {main.shape} differ")
        a = ops.sigmoid(ops.sub(self._logits(skip), self._logits(main)))
        return ops.add(ops.scale_channels(skip, a),
                       ops.scale_channels(main, ops.sub(1.0, a)))


class Downsample(Module):
    """Halve the spatial extent with a stride-2 3x3 convolution.

    A strided 3x3 window cannot tile an even extent exactly, so the input
    is first extended by one zero row and column at the bottom/right; the
    unpadded stride-2 convolution then lands on extent H/2 exactly.
    """

    def __init__(self, cin: int, cout: int, rng):
        self.conv = Conv2d(cin, cout, 3, rng, stride=2, padding=0)

    def __call__(self, x: Tensor) -> Tensor:
        b, c, h, w = x.shape
        row = ops._t(np.zeros((b, c, 1, w), dtype=x.dtype))
        x = ops.concat([x, row], axis=2)
        col = ops._t(np.zeros((b, c, h + 1, 1), dtype=x.dtype))
        x = ops.concat([x, col], axis=3)
        return self.conv(x)


class _FusionStage(Module):
    """Per-stage HPDM followed by PFM, producing the optical injection."""

    def __init__(self, channels: int, state_size: int, rng,
                 force_w1: float | None):
        self.hpdm = Hpdm(channels, state_size, rng, force_w1=force_w1)
        self.pfm = Pfm(channels, state_size, rng)

    def __call__(self, r: Tensor, s: Tensor) -> Tensor:
        fused, _ = self.hpdm(r, s)
        return self.pfm(fused, s)


class DehazeMamba(Module):
    """Full dual-branch restoration network.

    forward(hazy [B,3,H,W], sar [B,1,H,W]) -> [B,3,H,W] residual-added
    output. H and W must be divisible by 4 (two stride-2 stages); the
    frequency loss additionally wants powers of two, enforced by fft2.
    ``infer`` clamps to [0, 1]; training leaves the output unclamped.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        w = cfg.widths
        n = cfg.state_size
        e = cfg.expand

        def blocks(channels, count):
            return [DmBlock(channels, n, e, rng) for _ in range(count)]

        self.stem_opt = Conv2d(3, w[0], 3, rng, padding=1)
        self.stem_sar = Conv2d(1, w[0], 3, rng, padding=1)

        self.enc_opt1 = blocks(w[0], cfg.depths[0])
        self.enc_sar1 = blocks(w[0], cfg.depths[0])
        self.fusion1 = _FusionStage(w[0], n, rng, cfg.force_w1)
        self.down_opt1 = Downsample(w[0], w[1], rng)
        self.down_sar1 = Downsample(w[0], w[1], rng)

        self.enc_opt2 = blocks(w[1], cfg.depths[1])
        self.enc_sar2 = blocks(w[1], cfg.depths[1])
        self.fusion2 = _FusionStage(w[1], n, rng, cfg.force_w1)
        self.down_opt2 = Downsample(w[1], w[2], rng)
        self.down_sar2 = Downsample(w[1], w[2], rng)

        self.enc_opt3 = blocks(w[2], cfg.depths[2])
        self.enc_sar3 = blocks(w[2], cfg.depths[2])
        self.fusion3 = _FusionStage(w[2], n, rng, cfg.force_w1)

        self.up1 = Conv2d(w[2], 4 * w[3], 1, rng)
        self.sk1 = SkFusion(w[3], rng)
        self.dec1 = blocks(w[3], cfg.depths[3])
        self.up2 = Conv2d(w[3], 4 * w[4], 1, rng)
        self.sk2 = SkFusion(w[4], rng)
        self.dec2 = blocks(w[4], cfg.depths[4])
        self.head = Conv2d(w[4], 3, 3, rng, padding=1, zero_init=True)

    def _check_inputs(self, hazy: Tensor, sar: Tensor) -> None:
        if hazy.ndim != 4 or hazy.shape[1] != 3:
            raise ShapeError(f"forward: hazy must be [B,3,H,W], got {hazy.shape}")
        if sar.ndim != 4 or sar.shape[1] != 1:
            raise ShapeError(f"forward: sar must be [B,1,H,W], got {sar.shape}")
        if hazy.shape[0] != sar.shape[0] or hazy.shape[2:] != sar.shape[2:]:
            raise AlignmentError(
                f"forward: optical {hazy.shape} and SAR {sar.shape} are not "
                "co-registered")
        if hazy.shape[2] % 4 or hazy.shape[3] % 4:
            raise ConfigError(
                f"forward: H and W must be divisible by 4, got "
                f"{hazy.shape[2]}x{hazy.shape[3]}")

    def __call__(self, hazy: Tensor, sar: Tensor) -> Tensor:
        hazy, sar = ops._t(hazy), ops._t(sar)
        self._check_inputs(hazy, sar)
        w = self.cfg.widths

        r = self.stem_opt(hazy)
        s = self.stem_sar(sar)
        for blk in self.enc_opt1:
            r = blk(r)
        for blk in self.enc_sar1:
            s = blk(s)
        r1 = ops.add(r, self.fusion1(r, s))
        r = self.down_opt1(r1)
        s = self.down_sar1(s)

        for blk in self.enc_opt2:
            r = blk(r)
        for blk in self.enc_sar2:
            s = blk(s)
        r2 = ops.add(r, self.fusion2(r, s))
        r = self.down_opt2(r2)
        s = self.down_sar2(s)

        for blk in self.enc_opt3:
            r = blk(r)
        for blk in self.enc_sar3:
            s = blk(s)
        r3 = ops.add(r, self.fusion3(r, s))

        d = ops.pixel_shuffle(self.up1(r3), 2)
        d = self.sk1(r2, d)
        for blk in self.dec1:
            d = blk(d)
        d = ops.pixel_shuffle(self.up2(d), 2)
        d = self.sk2(r1, d)
        for blk in self.dec2:
            d = blk(d)
        return ops.add(hazy, self.head(d))

    def infer(self, hazy, sar) -> np.ndarray:
        """Tape-free forward pass with the output clamped to [0, 1]."""
        out = self(ops._t(hazy), ops._t(sar))
        return np.clip(out.data, 0.0, 1.0)
