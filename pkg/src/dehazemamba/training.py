"""Dual-domain loss, AdamW, cosine schedule, and the training loop.

The loss is mean L1 in the pixel domain plus a weighted mean L1 between the
real/imaginary DFT planes of prediction and target. Optimization is AdamW
with decoupled weight decay under a cosine-annealed learning rate.

Training is deterministic given the seed: the batch sampler derives its RNG
statelessly from (seed, step), so resuming from a checkpoint reproduces the
uninterrupted loss trace exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, NumericError
from .metrics import psnr
from .tensor import Tape, Tensor

__all__ = [
    "TrainConfig", "spatial_loss", "frequency_loss", "total_loss",
    "cosine_lr", "AdamW", "train",
]


@dataclass
class TrainConfig:
    lr_max: float = 2e-4
    lr_min: float = 1e-6
    batch_size: int = 6
    steps: int = 2000
    lambda_freq: float = 0.1
    crop_size: int = 32
    seed: int = 0
    log_interval: int = 50

    def validate(self) -> None:
        if not (0.0 <= self.lr_min < self.lr_max):
            raise ConfigError(
                f"need 0 <= lr_min < lr_max, got {self.lr_min} / {self.lr_max}")
        if self.lambda_freq < 0:
            raise ConfigError(f"lambda_freq must be >= 0, got {self.lambda_freq}")
        c = self.crop_size
        if c < 4 or c & (c - 1):
            raise ConfigError(
                f"crop_size must be a power of two >= 4, got {c}")
        if self.batch_size < 1 or self.steps < 0 or self.log_interval < 1:
            raise ConfigError(
                f"bad batch_size/steps/log_interval: {self.batch_size}/"
                f"{self.steps}/{self.log_interval}")


def spatial_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error in the pixel domain."""
    return ops.reduce_mean(ops.absolute(ops.sub(pred, target)))


def frequency_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error between DFT real/imaginary planes."""
    return ops.reduce_mean(
        ops.absolute(ops.sub(ops.fft2(pred), ops.fft2(target))))


def total_loss(pred: Tensor, target: Tensor, weight: float = 0.1) -> Tensor:
    """spatial + weight * frequency."""
    return ops.add(spatial_loss(pred, target),
                   ops.mul(frequency_loss(pred, target), weight))


def cosine_lr(step: int, cfg: TrainConfig) -> float:
    """Cosine annealing from lr_max at step 0 to lr_min at step cfg.steps."""
    if cfg.steps <= 0:
        return cfg.lr_min
    t = min(max(step, 0), cfg.steps)
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (
        1.0 + math.cos(math.pi * t / cfg.steps))


class AdamW:
    """AdamW with decoupled weight decay over a named parameter dict.

    Updates are independent per parameter, so results do not depend on the
    iteration order of the dict.
    """

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.beta1, self.beta2 = beta1, beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.step_count = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if self.weight_decay:
                p.data *= 1.0 - lr * self.weight_decay
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {f"adamw.m.{k}": v for k, v in self.m.items()}
        out.update({f"adamw.v.{k}": v for k, v in self.v.items()})
        out["adamw.step"] = np.asarray(float(self.step_count), dtype=np.float32)
        return out

    def load_state_tensors(self, moments: dict[str, np.ndarray],
                           step: int) -> None:
        for name in self.params:
            mk, vk = f"adamw.m.{name}", f"adamw.v.{name}"
            if mk not in moments or vk not in moments:
                raise DataError(f"checkpoint is missing optimizer state for {name}")
            self.m[name] = moments[mk].astype(self.m[name].dtype)
            self.v[name] = moments[vk].astype(self.v[name].dtype)
        self.step_count = step


def _batch_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, step)))


def sample_batch(pairs, cfg: TrainConfig, step: int):
    """Deterministic random crops + horizontal flips for one step.

    Returns (hazy, sar, clear) float32 stacks. The same flip and crop is
    applied to every plane of a pair.
    """
    rng = _batch_rng(cfg.seed, step)
    c = cfg.crop_size
    hazy_b, sar_b, clear_b = [], [], []
    for _ in range(cfg.batch_size):
        pair = pairs[int(rng.integers(0, len(pairs)))]
        h, w = pair.clear.shape[1], pair.clear.shape[2]
        if h < c or w < c:
            raise DataError(
                f"crop {c} exceeds image extent {h}x{w}")
        y0 = int(rng.integers(0, h - c + 1))
        x0 = int(rng.integers(0, w - c + 1))
        do_flip = bool(rng.random() < 0.5)

        def cut(plane):
            out = plane[:, y0:y0 + c, x0:x0 + c]
            if do_flip:
                out = out[:, :, ::-1]
            return np.ascontiguousarray(out)

        hazy_b.append(cut(pair.hazy))
        sar_b.append(cut(pair.sar))
        clear_b.append(cut(pair.clear))
    return (np.stack(hazy_b), np.stack(sar_b), np.stack(clear_b))


def _first_nonfinite(model, grads) -> str:
    for name, p in model.named_params():
        if not np.all(np.isfinite(p.data)):
            return name
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            return f"grad:{name}"
    return "<none>"


def format_log_line(step: int, lr: float, loss_sp: float, loss_fr: float,
                    value_psnr: float) -> str:
    return f"{step}\t{lr:.8e}\t{loss_sp:.6f}\t{loss_fr:.6f}\t{value_psnr:.4f}"


def train(model, cfg: TrainConfig, pairs, *, checkpoint_path=None,
          resume: bool = False, until_step: int | None = None,
          emit=None) -> list[str]:
    """Run the optimization loop; returns the metrics trace.

    One trace line per log interval: step, lr, spatial loss, frequency
    loss, batch PSNR (tab-separated). ``until_step`` stops early without
    shrinking the cosine horizon, for staged resume runs. A non-finite
    loss aborts with a NumericError naming the first offending parameter.
    """
    cfg.validate()
    if not pairs:
        raise DataError("training dataset is empty")
    optim = AdamW(dict(model.named_params()))
    start = 0
    if resume:
        if checkpoint_path is None:
            raise ConfigError("resume requested without a checkpoint path")
        start = load_checkpoint(checkpoint_path, model, optim)
    stop = cfg.steps if until_step is None else min(until_step, cfg.steps)
    trace: list[str] = []
    for step in range(start, stop):
        lr = cosine_lr(step, cfg)
        hazy_b, sar_b, clear_b = sample_batch(pairs, cfg, step)
        with Tape() as tape:
            pred = model(Tensor(hazy_b), Tensor(sar_b))
            target = Tensor(clear_b)
            l_sp = spatial_loss(pred, target)
            l_fr = frequency_loss(pred, target)
            loss = ops.add(l_sp, ops.mul(l_fr, cfg.lambda_freq))
            tape.backward(loss)
            grads = {name: tape.grad(p) for name, p in model.named_params()}
        if not math.isfinite(loss.item()):
            raise NumericError(
                f"non-finite loss at step {step}; first non-finite parameter: "
                f"{_first_nonfinite(model, grads)}")
        optim.step(grads, lr)
        if step % cfg.log_interval == 0 or step == stop - 1:
            batch_psnr = psnr(np.clip(pred.data, 0.0, 1.0), clear_b)
            line = format_log_line(step, lr, l_sp.item(), l_fr.item(),
                                   batch_psnr)
            trace.append(line)
            if emit is not None:
                emit(line)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model, optim)
    return trace
