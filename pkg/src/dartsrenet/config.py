"""Run configuration: a flat key=value namespace shared by all commands.

Precedence is defaults < config file < command-line flags.  Unknown keys
are rejected before any compute, and every run writes its fully resolved
configuration (defaults included) into the output directory so the run can
be reproduced bit-for-bit from that copy.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .data import AugmentConfig
from .network import ConvSpec, NetworkConfig
from .search import TrainSettings


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    # data
    data: str = ""              # dataset root; falls back to $DARTSRENET_DATA
    dataset: str = "cifar10"    # cifar10 | drim | synthetic
    drim_train: str = ""
    drim_test: str = ""
    limit_train: int = 0        # 0 = use everything
    limit_eval: int = 0
    synthetic_train: int = 8000
    synthetic_eval: int = 2000
    # model
    variant: str = "vanilla"    # vanilla | sigmoid_weighting | dws
    cell: str = "preset:dws"    # preset:<name> | file:<path> | gru | lstm | mixed
    hidden_dim: int = 256
    window: int = 2
    stem_channels: str = "64,64,64"
    head_dim: int = 1024
    num_classes: int = 10
    num_vertices: int = 8
    input_mode: str = "current"
    init_scheme: str = "calibrated"
    # optimization
    batch_size: int = 64
    epochs: int = 50
    patience: int = 5
    lr_weights: float = 1e-3
    lr_alpha: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 0.25
    clip_alpha: float = 0.0
    seed: int = 0
    search_fraction: float = 0.5
    retrain_val_size: int = 5000
    # augmentation
    augment: bool = True
    hflip_prob: float = 0.5
    crop_pad: int = 4
    cutout_size: int = 16
    # runtime
    finite_checks: bool = True
    out: str = "runs/latest"
    checkpoint: str = ""
    norm_stats: str = ""
    eval_split: str = "test"    # test | train

    # -- derived views -------------------------------------------------------

    def data_root(self) -> str:
        return self.data or os.environ.get("DARTSRENET_DATA", "")

    def network_config(self, cell_source: str | None = None) -> NetworkConfig:
        channels = [int(v) for v in self.stem_channels.split(",")]
        if len(channels) != 3:
            raise ConfigError("stem_channels must list exactly 3 values")
        return NetworkConfig(
            stem=[ConvSpec(c) for c in channels],
            hidden_dim=self.hidden_dim,
            window=self.window,
            variant=self.variant,
            cell_source=cell_source or self.cell,
            head_dim=self.head_dim,
            num_classes=self.num_classes,
            input_mode=self.input_mode,
            num_vertices=self.num_vertices,
            init_scheme=self.init_scheme)

    def train_settings(self) -> TrainSettings:
        aug = AugmentConfig(self.hflip_prob, self.crop_pad, self.cutout_size) \
            if self.augment else None
        return TrainSettings(
            batch_size=self.batch_size, epochs=self.epochs, patience=self.patience,
            lr_weights=self.lr_weights, lr_alpha=self.lr_alpha, beta1=self.beta1,
            beta2=self.beta2, adam_eps=self.adam_eps, clip_norm=self.clip_norm,
            clip_alpha=self.clip_alpha, seed=self.seed,
            search_fraction=self.search_fraction,
            retrain_val_size=self.retrain_val_size, augment=aug)


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    default = getattr(RunConfig(), key)
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("on", "true", "1", "yes"):
            return True
        if low in ("off", "false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected on/off, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_file(path) -> dict[str, str]:
    """Line-oriented `key = value`; '#' starts a comment."""
    out: dict[str, str] = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{ln}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        out[key] = value
    return out


def resolve_config(file_values: dict[str, str] | None = None,
                   overrides: dict[str, str] | None = None) -> RunConfig:
    """Merge defaults, config-file values, and CLI overrides; validate keys."""
    config = RunConfig()
    for source, values in (("config file", file_values), ("flag", overrides)):
        if not values:
            continue
        for key, raw in values.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown {source} key {key!r}")
            setattr(config, key, _coerce(key, str(raw)))
    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    if config.variant not in ("vanilla", "sigmoid_weighting", "dws"):
        raise ConfigError(f"variant: bad value {config.variant!r}")
    if config.dataset not in ("cifar10", "drim", "synthetic"):
        raise ConfigError(f"dataset: bad value {config.dataset!r}")
    if config.input_mode not in ("current", "previous"):
        raise ConfigError(f"input_mode: bad value {config.input_mode!r}")
    if config.init_scheme not in ("calibrated", "plain"):
        raise ConfigError(f"init_scheme: bad value {config.init_scheme!r}")
    if config.eval_split not in ("test", "train"):
        raise ConfigError(f"eval_split: bad value {config.eval_split!r}")
    for key in ("hidden_dim", "window", "head_dim", "batch_size", "num_vertices"):
        if getattr(config, key) < 1:
            raise ConfigError(f"{key} must be >= 1")
    if not 0 < config.search_fraction < 1:
        raise ConfigError("search_fraction must be in (0, 1)")


def freeze_config(config: RunConfig, out_dir) -> Path:
    """Echo every resolved value (defaults included) for provenance."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{f.name} = {_format(getattr(config, f.name))}" for f in fields(RunConfig)]
    path = out_dir / "config.resolved"
    path.write_text("\n".join(lines) + "\n")
    return path


def _format(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    return str(value)
