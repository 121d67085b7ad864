"""INI run configuration: parsing, validation, and canonical dumping.

One file drives every subcommand. Sections map onto the dataclasses below;
every key is typed and spelled exactly, and anything unrecognized raises
ConfigError rather than being silently ignored. dump_config produces a
canonical rendering that parses back to an equal RunConfig.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .errors import ConfigError
from .network import ModelConfig
from .training import TrainConfig

__all__ = ["DataConfig", "PathsConfig", "BenchConfig", "InferConfig",
           "RunConfig", "parse_config", "load_config", "dump_config"]


@dataclass
class DataConfig:
    root: str = "data"
    count: int = 12
    height: int = 64
    width: int = 64
    seed: int = 0
    coverage_min: float = 0.15
    coverage_max: float = 0.90
    density: str = "mixed"

    def validate(self) -> None:
        if self.count < 1:
            raise ConfigError(f"data.count must be >= 1, got {self.count}")
        if self.height < 4 or self.width < 4:
            raise ConfigError(
                f"data.height/width must be >= 4, got "
                f"{self.height}x{self.width}")
        if not (0.0 <= self.coverage_min <= self.coverage_max <= 1.0):
            raise ConfigError(
                f"bad coverage range [{self.coverage_min}, "
                f"{self.coverage_max}]")
        if self.density not in ("mixed", "thin", "moderate", "dense"):
            raise ConfigError(f"unknown data.density {self.density!r}")


@dataclass
class PathsConfig:
    checkpoint: str = "checkpoint.dhmb"
    out_dir: str = "out"


@dataclass
class BenchConfig:
    lengths: tuple[int, ...] = (256, 512, 1024, 2048, 4096)
    channels: int = 16
    state_size: int = 8
    warmup: int = 2
    repeats: int = 11
    seed: int = 0

    def validate(self) -> None:
        if len(self.lengths) < 3:
            raise ConfigError(
                f"bench.lengths needs at least 3 entries, got "
                f"{list(self.lengths)}")
        if any(x < 2 for x in self.lengths):
            raise ConfigError(
                f"bench.lengths must all be >= 2, got {list(self.lengths)}")
        if self.repeats < 1 or self.warmup < 0:
            raise ConfigError("bench.repeats must be >= 1, warmup >= 0")


@dataclass
class InferConfig:
    hazy: str = ""
    sar: str = ""
    output: str = "dehazed.ppm"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=lambda: ModelConfig.preset("micro"))
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    infer: InferConfig = field(default_factory=InferConfig)

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        self.data.validate()
        self.bench.validate()

    def override_seed(self, seed: int) -> None:
        self.train.seed = seed
        self.data.seed = seed
        self.bench.seed = seed


# section name -> (config attribute, {key: parser})

def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_opt_float(raw: str) -> float | None:
    return None if raw.strip().lower() in ("", "none") else float(raw)


def _parse_int_list(raw: str) -> tuple[int, ...]:
    items = [tok for tok in raw.replace(",", " ").split() if tok]
    return tuple(int(tok) for tok in items)


_MODEL_KEYS = {"variant": str, "force_w1": _parse_opt_float}
_TRAIN_KEYS = {"lr_max": float, "lr_min": float, "batch_size": int,
               "steps": int, "lambda_freq": float, "crop_size": int,
               "seed": int, "log_interval": int}
_DATA_KEYS = {"root": str, "count": int, "height": int, "width": int,
              "seed": int, "coverage_min": float, "coverage_max": float,
              "density": str}
_PATHS_KEYS = {"checkpoint": str, "out_dir": str}
_BENCH_KEYS = {"lengths": _parse_int_list, "channels": int,
               "state_size": int, "warmup": int, "repeats": int,
               "seed": int}
_INFER_KEYS = {"hazy": str, "sar": str, "output": str}

_SECTIONS = {
    "model": ("model", _MODEL_KEYS),
    "train": ("train", _TRAIN_KEYS),
    "data": ("data", _DATA_KEYS),
    "paths": ("paths", _PATHS_KEYS),
    "bench": ("bench", _BENCH_KEYS),
    "infer": ("infer", _INFER_KEYS),
}


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config: {e}") from e
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(
                f"unknown config section [{section}]; known sections are "
                f"{sorted(_SECTIONS)}")
        attr, keys = _SECTIONS[section]
        target = getattr(cfg, attr)
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]; known "
                    f"keys are {sorted(keys)}")
            try:
                value = keys[key](raw)
            except ValueError as e:
                raise ConfigError(
                    f"bad value for {section}.{key}: {raw!r} ({e})") from e
            setattr(target, key, value)
    if "model" in parser and "variant" in parser["model"]:
        # re-derive depths/widths for the named preset, then re-apply any
        # explicit overrides from the file (currently only force_w1)
        cfg.model = ModelConfig.preset(parser["model"]["variant"])
        if "force_w1" in parser["model"]:
            cfg.model.force_w1 = _parse_opt_float(
                parser["model"]["force_w1"])
    cfg.validate()
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config(text)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    out = io.StringIO()
    for section, (attr, keys) in _SECTIONS.items():
        target = getattr(cfg, attr)
        out.write(f"[{section}]\n")
        for key in keys:
            out.write(f"{key} = {_format_value(getattr(target, key))}\n")
        out.write("\n")
    return out.getvalue()
