"""Run configuration: `key = value` lines under [section] headers."""

import configparser
from dataclasses import dataclass, field

from .datagen import SynthSpec
from .objectives import JointMode
from .projector import MlpConfig, PwtpConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "pwtp": {
        "t": ("T", int),
        "d": ("D", int),
        "k": ("k", int),
        "s": ("s", int),
        "c_prime": ("c_prime", int),
        "ridge": ("ridge", float),
        "mlp.r": ("mlp.r", int),
        "mlp.beta": ("mlp.beta", float),
        "mlp.blocks": ("mlp.blocks", int),
    },
    "train": {
        "lr": ("lr", float),
        "momentum": ("momentum", float),
        "steps": ("steps", int),
        "batch": ("batch", int),
        "warmup_steps": ("warmup_steps", int),
        "weight_decay": ("weight_decay", float),
        "seed": ("seed", int),
    },
    "joint": {"mode": ("mode", str)},
    "data": {
        "h": ("H", int),
        "w": ("W", int),
        "s": ("S", int),
        "t": ("T", int),
        "k": ("K", int),
        "n_train": ("n_train", int),
        "n_test": ("n_test", int),
        "confound": ("confound", float),
        "seed": ("seed", int),
    },
}


@dataclass
class RunConfig:
    pwtp: PwtpConfig = field(default_factory=PwtpConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    joint: JointMode = field(default_factory=lambda: JointMode("mgda"))
    data: SynthSpec = field(default_factory=SynthSpec)


def parse_run_config(path) -> RunConfig:
    """Load and validate a config file; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            attr, conv = _SCHEMA[section][key]
            try:
                value = conv(raw)
            except ValueError:
                raise ConfigError(
                    f"bad value {raw!r} for {section}.{key} (expected {conv.__name__})"
                ) from None
            _assign(cfg, section, attr, value)
    try:
        cfg.pwtp.validate()
        cfg.train.validate()
        cfg.joint.validate()
        cfg.data.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _assign(cfg: RunConfig, section: str, attr: str, value):
    if section == "pwtp":
        if attr.startswith("mlp."):
            setattr(cfg.pwtp.mlp, attr[4:], value)
        else:
            setattr(cfg.pwtp, attr, value)
    elif section == "train":
        setattr(cfg.train, attr, value)
    elif section == "joint":
        cfg.joint = JointMode.parse(value)
    elif section == "data":
        setattr(cfg.data, attr, value)
