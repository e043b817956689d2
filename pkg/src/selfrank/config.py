"""Experiment configuration stored as a plain ``key = value`` text file."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .crops import CropGenConfig
from .ranking import RankingConfig
from .tensor import SgdConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "counting"
    arm: str = "multitask"
    seed: int = 0
    # network and optimisation
    arch: str = "conv:8,relu,pool,conv:16,relu,pool,conv:16,relu,conv:1"
    image_size: int = 64
    lr: float = 1e-4
    lr_decay: float = 0.1
    lr_interval: int = 10_000
    weight_decay: float = 5e-4
    momentum: float = 0.9
    steps: int = 10_000
    batch_labeled: int = 25
    batch_ranked: int = 25
    margin: float = 0.0
    lam: float = 0.01
    log_every: int = 100
    # data
    n_labeled: int = 50
    n_unlabeled: int = 500
    n_test: int = 200
    groups_per_image: int = 1
    # counting task
    count_lo: int = 0
    count_hi: int = 100
    density_sigma: float = 4.0
    blob_std_lo: float = 1.5
    blob_std_hi: float = 1.5
    crop_k: int = 5
    crop_scale: float = 0.75
    crop_r: float = 8.0
    anchor_mode: str = "area"
    # quality task
    kinds: str = "blur,awgn,jpeg,quantization"
    levels: int = 4
    # active learning
    al_cycles: int = 9
    al_initial: float = 0.1
    al_step: float = 0.1
    al_k: int = 100
    al_policy: str = "certainty"
    al_steps: int = 1000
    al_warm_start: bool = True
    al_unit: str = "image"

    def __post_init__(self):
        if self.task not in ("counting", "quality"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.arm not in ("baseline", "multitask", "active"):
            raise ConfigError(f"unknown arm {self.arm!r}")
        if self.al_policy not in ("certainty", "random"):
            raise ConfigError(f"unknown selection policy {self.al_policy!r}")
        try:
            self.sgd()
            self.ranking()
            self.crop_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sgd(self, steps=None) -> SgdConfig:
        return SgdConfig(self.lr, self.lr_decay, self.lr_interval, self.weight_decay,
                         steps or self.steps, self.momentum)

    def ranking(self) -> RankingConfig:
        return RankingConfig(self.margin, self.lam)

    def crop_config(self) -> CropGenConfig:
        return CropGenConfig(self.crop_k, self.crop_scale, self.crop_r, self.image_size, self.anchor_mode)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {n}: unknown key {key!r}")
            kw[key] = _coerce(key, val, types[key])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read(), **overrides)


def _coerce(key, val, typ):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
        if typ == "bool":
            if val.lower() in ("1", "true", "yes", "on"):
                return True
            if val.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(val)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {val!r} as {typ}") from None
    return val
