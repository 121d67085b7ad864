"""Sequence-length scaling benchmark: selective scan vs. naive attention.

Times the raw forward kernels (no tape) over a range of sequence lengths,
fits a log-log slope to the medians, and reports it. The recurrent scan
should scale close to linearly (slope about 1); the quadratic attention
baseline should show a slope clearly above that. BLAS threading is pinned
to one thread during measurement so multi-core scheduling noise does not
flatten the attention curve.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError
from .ssm import _scan_forward

__all__ = ["BenchResult", "naive_attention", "run_bench", "format_bench"]

DEFAULT_LENGTHS = (256, 512, 1024, 2048, 4096)


@dataclass
class BenchResult:
    lengths: list[int]
    scan_times: list[float]
    attention_times: list[float]
    scan_slope: float
    attention_slope: float


def naive_attention(q: np.ndarray, k: np.ndarray,
                    v: np.ndarray) -> np.ndarray:
    """Quadratic-cost global mixing baseline: softmax(Q K^T / sqrt(d)) V."""
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(q.shape[-1])
    scores -= scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    return weights @ v


def _median_time(fn, warmup: int, repeats: int) -> float:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def _fit_slope(lengths, times) -> float:
    logs = np.log(np.asarray(lengths, dtype=np.float64))
    logt = np.log(np.asarray(times, dtype=np.float64))
    return float(np.polyfit(logs, logt, 1)[0])


def run_bench(lengths=DEFAULT_LENGTHS, channels: int = 16,
              state_size: int = 8, warmup: int = 2, repeats: int = 11,
              seed: int = 0) -> BenchResult:
    lengths = [int(x) for x in lengths]
    if len(lengths) < 3:
        raise ConfigError(
            f"benchmark needs at least 3 lengths to fit a slope, "
            f"got {lengths}")
    if any(x < 2 for x in lengths):
        raise ConfigError(f"benchmark lengths must be >= 2, got {lengths}")
    rng = np.random.default_rng(seed)
    scan_times, attn_times = [], []
    with threadpool_limits(limits=1):
        for length in sorted(lengths):
            x = rng.standard_normal((1, length, channels)).astype(np.float32)
            delta = rng.uniform(0.01, 0.1,
                                (1, length, channels)).astype(np.float32)
            a = -rng.uniform(0.5, 1.5,
                             (channels, state_size)).astype(np.float32)
            b = rng.standard_normal((1, length,
                                     state_size)).astype(np.float32)
            c = rng.standard_normal((1, length,
                                     state_size)).astype(np.float32)
            d = rng.standard_normal(channels).astype(np.float32)
            q = rng.standard_normal((1, length, channels)).astype(np.float32)
            k = rng.standard_normal((1, length, channels)).astype(np.float32)
            v = rng.standard_normal((1, length, channels)).astype(np.float32)
            scan_times.append(_median_time(
                lambda: _scan_forward(x, delta, a, b, c, d), warmup, repeats))
            attn_times.append(_median_time(
                lambda: naive_attention(q, k, v), warmup, repeats))
    lengths = sorted(lengths)
    return BenchResult(lengths, scan_times, attn_times,
                       _fit_slope(lengths, scan_times),
                       _fit_slope(lengths, attn_times))


def format_bench(result: BenchResult) -> str:
    lines = ["length\tscan_ms\tattention_ms"]
    for length, ts, ta in zip(result.lengths, result.scan_times,
                              result.attention_times):
        lines.append(f"{length}\t{ts * 1e3:.3f}\t{ta * 1e3:.3f}")
    lines.append(f"scan_slope\t{result.scan_slope:.3f}")
    lines.append(f"attention_slope\t{result.attention_slope:.3f}")
    return "\n".join(lines) + "\n"
