"""Flat ``key = value`` run configuration.

Keys are ``<group>.<field>`` where the group is one of generator, critic,
loss, adam, schedule, data or perceptual, and the field is a field of the
matching config class.  Values are JSON literals (numbers, ``null``, lists,
quoted strings); bare words are read as strings.  ``#`` and ``;`` start
comments.
"""

import configparser
from dataclasses import dataclass, field, fields, replace
import json

from .critic import CriticConfig
from .exceptions import ConfigError
from .generator import GeneratorConfig
from .losses import LossWeights
from .trainer import AdamConfig, TrainSchedule


@dataclass(frozen=True)
class DataConfig:
    split: str = "train"
    crop_height: int = 192
    crop_width: int = 128
    cleaning_list: str = None


@dataclass(frozen=True)
class PerceptualConfig:
    mode: str = "desk"  # desk | vgg19
    weights: str = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("desk", "vgg19"):
            raise ConfigError(f"perceptual.mode must be desk or vgg19, got {self.mode!r}")
        if self.mode == "vgg19" and not self.weights:
            raise ConfigError("perceptual.mode = vgg19 needs perceptual.weights")


@dataclass(frozen=True)
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    adam: AdamConfig = field(default_factory=AdamConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    data: DataConfig = field(default_factory=DataConfig)
    perceptual: PerceptualConfig = field(default_factory=PerceptualConfig)

    def extractor(self):
        from .losses import FeatureExtractor

        if self.perceptual.mode == "vgg19":
            return FeatureExtractor.vgg19(self.perceptual.weights)
        return FeatureExtractor.desk(self.perceptual.seed)


GROUPS = {f.name: f for f in fields(RunConfig)}


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config(text):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    updates = {}
    for key, raw in parser.items("run"):
        group, _, name = key.partition(".")
        if group not in GROUPS or not name:
            raise ConfigError(f"unknown config key {key!r}")
        updates.setdefault(group, {})[name] = _parse_value(raw.strip())
    base = RunConfig()
    groups = {}
    for group, values in updates.items():
        current = getattr(base, group)
        allowed = {f.name for f in fields(current)}
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise ConfigError(f"unknown keys in group {group!r}: {unknown}")
        try:
            groups[group] = replace(current, **values)
        except TypeError as exc:
            raise ConfigError(f"bad value in group {group!r}: {exc}") from None
    return replace(base, **groups)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            return parse_config(f.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def dump_config(cfg):
    lines = []
    for group in GROUPS:
        obj = getattr(cfg, group)
        for f in fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                value = list(value)
            lines.append(f"{group}.{f.name} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"
