"""Command line entry point.

Subcommands:
  gen-data    synthesize a paired dataset and write its manifest
  train       optimize a model on a dataset, checkpointing at the end
  infer       dehaze one optical/SAR pair from image files
  eval        score a checkpoint against a dataset (PSNR / SSIM)
  bench-scan  sequence-length scaling benchmark of the scan kernel
  stats       recompute dataset statistics and verify the manifest

Every subcommand reads one INI config (--config); --seed overrides the
seeds in all sections, --dump-config prints the effective configuration
and exits. Errors map to exit codes: config 2, data 3, numeric 4,
anything else in this package 1.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .bench import format_bench, run_bench
from .checkpoint import load_checkpoint
from .config import RunConfig, dump_config, load_config
from .data import (dataset_report, generate_dataset, haze_stats,
                   load_dataset, load_manifest)
from .errors import ConfigError, DataError, DehazeError
from .metrics import psnr, ssim
from .network import DehazeMamba
from .ppm import read_image, write_ppm
from .training import train

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dehazemamba",
        description="SAR-guided optical dehazing toolkit")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("gen-data", "synthesize a paired dataset"),
            ("train", "train a model on a dataset"),
            ("infer", "dehaze one optical/SAR pair"),
            ("eval", "score a checkpoint against a dataset"),
            ("bench-scan", "scan vs attention scaling benchmark"),
            ("stats", "recompute and verify dataset statistics")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to the INI run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override every seed in the configuration")
        p.add_argument("--resume", action="store_true",
                       help="continue training from the checkpoint")
        p.add_argument("--dump-config", action="store_true",
                       help="print the effective configuration and exit")
    return parser


def _load(args) -> RunConfig:
    if args.config is None:
        if args.dump_config:
            cfg = RunConfig()
        else:
            raise ConfigError("missing --config (required unless "
                              "--dump-config is given)")
    else:
        cfg = load_config(args.config)
    if args.seed is not None:
        cfg.override_seed(args.seed)
    return cfg


def cmd_gen_data(cfg: RunConfig, args) -> int:
    d = cfg.data
    stats = generate_dataset(d.root, d.count, d.height, d.width, d.seed,
                             coverage_min=d.coverage_min,
                             coverage_max=d.coverage_max, density=d.density)
    print(f"wrote {len(stats)} pairs to {d.root}")
    print(dataset_report(stats), end="")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    pairs = load_dataset(cfg.data.root)
    model = DehazeMamba(cfg.model, seed=cfg.train.seed)
    trace = train(model, cfg.train, pairs,
                  checkpoint_path=cfg.paths.checkpoint,
                  resume=args.resume, emit=print)
    print(f"finished at step {cfg.train.steps}; "
          f"checkpoint saved to {cfg.paths.checkpoint}")
    return 0 if trace else 1


def cmd_infer(cfg: RunConfig, args) -> int:
    if not cfg.infer.hazy or not cfg.infer.sar:
        raise ConfigError("infer.hazy and infer.sar must both be set")
    hazy = read_image(cfg.infer.hazy)
    sar = read_image(cfg.infer.sar)
    if hazy.shape[0] != 3:
        raise DataError(f"{cfg.infer.hazy}: expected a color image")
    if sar.shape[0] != 1:
        raise DataError(f"{cfg.infer.sar}: expected a grayscale image")
    model = DehazeMamba(cfg.model, seed=cfg.train.seed)
    load_checkpoint(cfg.paths.checkpoint, model)
    out = model.infer(hazy[None], sar[None])[0]
    parent = os.path.dirname(cfg.infer.output)
    if parent:
        os.makedirs(parent, exist_ok=True)
    write_ppm(cfg.infer.output, out)
    print(f"wrote {cfg.infer.output}")
    return 0


def _region_psnr(pred, clear, region) -> float:
    if not region.any():
        return float("nan")
    diff = (pred[:, region] - clear[:, region]) * 255.0
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return 99.0
    return min(10.0 * np.log10(255.0 ** 2 / mse), 99.0)


def cmd_eval(cfg: RunConfig, args) -> int:
    pairs = load_dataset(cfg.data.root)
    model = DehazeMamba(cfg.model, seed=cfg.train.seed)
    load_checkpoint(cfg.paths.checkpoint, model)
    print("index\tpsnr_hazy\tpsnr\tssim\tpsnr_haze_region\tpsnr_clear_region")
    total_psnr, total_ssim = 0.0, 0.0
    for pair in pairs:
        pred = model.infer(pair.hazy[None], pair.sar[None])[0]
        region = pair.mask[0] > 0.05
        p_before = psnr(pair.hazy, pair.clear)
        p_after = psnr(pred, pair.clear)
        s_after = ssim(pred, pair.clear)
        p_in = _region_psnr(pred, pair.clear, region)
        p_out = _region_psnr(pred, pair.clear, ~region)
        total_psnr += p_after
        total_ssim += s_after
        print(f"{pair.index}\t{p_before:.4f}\t{p_after:.4f}\t{s_after:.4f}"
              f"\t{p_in:.4f}\t{p_out:.4f}")
    n = len(pairs)
    print(f"mean\t-\t{total_psnr / n:.4f}\t{total_ssim / n:.4f}\t-\t-")
    return 0


def cmd_bench_scan(cfg: RunConfig, args) -> int:
    b = cfg.bench
    result = run_bench(lengths=b.lengths, channels=b.channels,
                       state_size=b.state_size, warmup=b.warmup,
                       repeats=b.repeats, seed=b.seed)
    print(format_bench(result), end="")
    return 0


def cmd_stats(cfg: RunConfig, args) -> int:
    root = cfg.data.root
    manifest = load_manifest(root)
    pairs = load_dataset(root)
    stats = []
    for pair, (index, _seed, recorded) in zip(pairs, manifest):
        st = haze_stats(pair.hazy, pair.mask)
        stats.append(st)
        # the manifest stores 6 decimals, so compare at that resolution
        if f"{st.coverage:.6f}" != f"{recorded.coverage:.6f}":
            raise DataError(
                f"pair {index}: recomputed coverage {st.coverage:.6f} "
                f"disagrees with manifest {recorded.coverage:.6f}")
        a, b = st.density_value, recorded.density_value
        if (a is None) != (b is None) or (
                a is not None and abs(a - b) > 5e-4):
            raise DataError(
                f"pair {index}: recomputed density {a} disagrees with "
                f"manifest {b}")
        if st.density_class != recorded.density_class:
            raise DataError(
                f"pair {index}: recomputed class {st.density_class} "
                f"disagrees with manifest {recorded.density_class}")
    print(dataset_report(stats), end="")
    print(f"manifest verified for {len(pairs)} pairs")
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "bench-scan": cmd_bench_scan,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.dump_config:
            print(dump_config(cfg), end="")
            return 0
        return _COMMANDS[args.command](cfg, args)
    except DehazeError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
