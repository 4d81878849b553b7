"""Flat key=value run configuration.

Format: one `section.key = value` per line, `#` starts a comment, blank lines
ignored.  Unknown keys are rejected.  The effective configuration (defaults
filled in) can be rendered back to text; a rerun from the echoed text is
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .blocks import NetworkConfig
from .data import DegradationSpec


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    total_steps: int = 2000
    batch: int = 4
    patch_size: int = 32
    lr_init: float = 2e-4
    lr_min: float = 1e-6
    seed: int = 0
    loss_mode: str = "per_pixel_mean"
    checkpoint_every: int = 500


@dataclass
class DataConfig:
    manifest: str = ""
    spec: DegradationSpec = field(default_factory=DegradationSpec)


@dataclass
class EvalConfig:
    channel_mode: str = "rgb"


@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=lambda: NetworkConfig(
        n_rrg=1, mrb_per_rrg=1, n_streams=2, n_columns=1, base_channels=8))
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


# key -> (target resolver, attribute, type)
_SCHEMA = {
    "network.n_rrg": ("network", "n_rrg", int),
    "network.mrb_per_rrg": ("network", "mrb_per_rrg", int),
    "network.n_streams": ("network", "n_streams", int),
    "network.n_columns": ("network", "n_columns", int),
    "network.base_channels": ("network", "base_channels", int),
    "train.total_steps": ("train", "total_steps", int),
    "train.batch": ("train", "batch", int),
    "train.patch_size": ("train", "patch_size", int),
    "train.lr_init": ("train", "lr_init", float),
    "train.lr_min": ("train", "lr_min", float),
    "train.seed": ("train", "seed", int),
    "train.loss_mode": ("train", "loss_mode", str),
    "train.checkpoint_every": ("train", "checkpoint_every", int),
    "data.manifest": ("data", "manifest", str),
    "data.task": ("data.spec", "task", str),
    "data.noise_sigma": ("data.spec", "noise_sigma", float),
    "data.scale_factor": ("data.spec", "scale_factor", int),
    "data.exposure_gain": ("data.spec", "exposure_gain", float),
    "data.gamma": ("data.spec", "gamma", float),
    "data.seed": ("data.spec", "seed", int),
    "eval.channel_mode": ("eval", "channel_mode", str),
}


def _target(cfg: RunConfig, path: str):
    obj = cfg
    for part in path.split("."):
        obj = getattr(obj, part)
    return obj


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        entry = _SCHEMA.get(key)
        if entry is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        path, attr, typ = entry
        try:
            parsed = typ(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
        setattr(_target(cfg, path), attr, parsed)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    try:
        cfg.network.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.train.total_steps < 1:
        raise ConfigError("train.total_steps must be >= 1")
    if cfg.train.patch_size % cfg.network.divisor:
        raise ConfigError(
            f"train.patch_size {cfg.train.patch_size} must be divisible by "
            f"{cfg.network.divisor} for {cfg.network.n_streams} streams")
    if cfg.train.loss_mode not in ("per_pixel_mean", "global_norm"):
        raise ConfigError(f"unknown train.loss_mode {cfg.train.loss_mode!r}")
    if cfg.eval.channel_mode not in ("rgb", "y_channel"):
        raise ConfigError(f"unknown eval.channel_mode {cfg.eval.channel_mode!r}")
    try:
        cfg.data.spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def render_config(cfg: RunConfig) -> str:
    """Effective configuration as canonical key=value text."""
    lines = []
    for key, (path, attr, typ) in _SCHEMA.items():
        value = getattr(_target(cfg, path), attr)
        if typ is float:
            value = repr(float(value))
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
