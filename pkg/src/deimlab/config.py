"""Sectioned INI experiment configuration.

Every section maps onto a dataclass whose defaults are the reference
experiment settings. Unknown sections or keys are errors, the seed has no
default, and :func:`dump_config` writes the fully resolved configuration
that each run echoes next to its outputs.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass
class RunSection:
    seed: int | None = None
    format: str = "binary"  # bulk field output: binary | csv


@dataclass
class BurgersSection:
    Re: float = 1000.0
    n: int = 128
    t_final: float = 2.0
    n_steps: int = 300
    L: float = 1.0


@dataclass
class RomSection:
    modes: int = 12
    points: int = 24
    mode: str = "static"  # static | full


@dataclass
class SamplerSection:
    points: int = 24
    hidden: tuple = (256, 256)
    warm_logit: float = 6.0
    warm_width: float = 1.0
    epochs: int = 500
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    segment: int = 20
    tau_start: float = 1.0
    tau_end: float = 0.3
    noise: bool = True
    net_input: str = "rom"
    eval_every: int = 1
    clip: float | None = 1.0


@dataclass
class VortexSection:
    nx: int = 64
    ny: int = 64
    Re: float = 1000.0
    dt: float = 0.02
    n_steps: int = 200
    amplitude: float = 1.0
    rho: float = float(np.pi)
    weak_ratio: float = 0.8
    laplacian: str = "fd"
    jacobian: str = "arakawa"
    census_threshold: float = 0.5


@dataclass
class NodeSection:
    channels: int = 32
    n_train: int = 100
    epochs: int = 2000
    lr: float = 1e-3
    batch_size: int | None = None
    loss_mode: str = "derivative"
    standardize: bool = True
    blowup_factor: float = 1000.0


@dataclass
class WindowedSection:
    window_size: int = 20
    stride: int = 1
    n_points: int = 16


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    burgers: BurgersSection = field(default_factory=BurgersSection)
    rom: RomSection = field(default_factory=RomSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    vortex: VortexSection = field(default_factory=VortexSection)
    node: NodeSection = field(default_factory=NodeSection)
    windowed: WindowedSection = field(default_factory=WindowedSection)

    @property
    def seed(self) -> int:
        if self.run.seed is None:
            raise ConfigError("a seed is required: set [run] seed or pass --seed")
        return int(self.run.seed)

    def to_dict(self) -> dict:
        return {
            f.name: {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(getattr(self, f.name)).items()}
            for f in fields(self)
        }


SECTIONS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(raw: str, annotation, where: str):
    text = raw.strip()
    hint = str(annotation)
    optional = "None" in hint
    if optional and text.lower() in ("none", ""):
        return None
    try:
        if hint.startswith("int"):
            return int(text)
        if hint.startswith("float"):
            return float(text)
        if hint == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint == "tuple":
            return tuple(int(t) for t in text.replace(" ", "").split(",") if t)
        if hint == "str":
            return text
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {hint}") from None
    raise ConfigError(f"{where}: unsupported option type {hint}")


def _section_types(name: str) -> dict:
    cls = typing.get_type_hints(ExperimentConfig)[name]
    return {f.name: f.type for f in fields(cls)}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keep key case (Re)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = ExperimentConfig()
    for sec in parser.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{sec}]; known: {', '.join(SECTIONS)}")
        types = _section_types(sec)
        target = getattr(cfg, sec)
        for key, raw in parser.items(sec):
            if key not in types:
                raise ConfigError(f"{source}: unknown key '{key}' in [{sec}]; known: {', '.join(types)}")
            setattr(target, key, _convert(raw, types[key], f"{source} [{sec}] {key}"))
    validate(cfg)
    return cfg


def load_config(path: str | Path | None = None, seed: int | None = None) -> ExperimentConfig:
    """Read ``path`` (or start from defaults) and apply a seed override."""
    if path is None:
        cfg = ExperimentConfig()
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        cfg = parse_config(p.read_text(), str(p))
    if seed is not None:
        if seed < 0 or seed >= 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        cfg.run.seed = int(seed)
    _ = cfg.seed  # mandatory
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    checks = [
        (cfg.run.format in ("binary", "csv"), "[run] format must be binary or csv"),
        (cfg.rom.mode in ("static", "full"), "[rom] mode must be static or full"),
        (cfg.sampler.net_input in ("rom", "fom"), "[sampler] net_input must be rom or fom"),
        (cfg.node.loss_mode in ("derivative", "one-step"), "[node] loss_mode must be derivative or one-step"),
        (cfg.vortex.laplacian in ("fd", "spectral"), "[vortex] laplacian must be fd or spectral"),
        (cfg.vortex.jacobian in ("arakawa", "central"), "[vortex] jacobian must be arakawa or central"),
        (cfg.burgers.n_steps > 0 and cfg.burgers.n >= 4, "[burgers] needs n >= 4 and n_steps > 0"),
        (cfg.sampler.tau_start > 0 and cfg.sampler.tau_end > 0, "[sampler] temperatures must be positive"),
        (cfg.windowed.window_size >= cfg.windowed.n_points, "[windowed] window_size must be >= n_points"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def dump_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name, values in cfg.to_dict().items():
        parser[name] = {
            k: ("none" if v is None else ",".join(str(x) for x in v) if isinstance(v, list) else repr(v) if isinstance(v, float) else str(v))
            for k, v in values.items()
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
