"""Pipeline configuration document.

A JSON object with optional sections ``simulate``, ``blur``, ``physical``,
``voxel``, ``model`` and ``eval``.  Every field has a default; unknown keys
are rejected with their dotted path and numeric fields are range-checked
when the document is parsed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .nn.refid import RefidConfig
from .quality import BlurProtocol
from .simulator import SimConfig


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _number(path, value, *, lo=None, hi=None, lo_open=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    if integer and not float(value).is_integer():
        raise ConfigError(path, f"expected an integer, got {value}")
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value}")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(path, f"must be <= {hi}, got {value}")
    return int(value) if integer else float(value)


def _section(cls, path: str, data) -> object:
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a JSON object")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")
    kwargs = {}
    for key, value in data.items():
        rule = _RANGES[cls.__name__].get(key)
        if rule is None:
            kwargs[key] = value
        elif rule == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{path}.{key}", "expected true or false")
            kwargs[key] = value
        elif isinstance(rule, tuple) and rule and isinstance(rule[0], str):
            if value not in rule:
                raise ConfigError(f"{path}.{key}", f"expected one of {list(rule)}, got {value!r}")
            kwargs[key] = value
        else:
            kwargs[key] = _number(f"{path}.{key}", value, **rule)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


@dataclass(frozen=True)
class BlurSection:
    per_blur: int = 11
    skip: int = 1
    fps: float = 240.0

    def __post_init__(self):
        self.protocol()  # odd window length and the other protocol rules

    def protocol(self) -> BlurProtocol:
        return BlurProtocol(self.per_blur, self.skip, self.fps)


@dataclass(frozen=True)
class SimulateSection:
    c_mean: float = 0.2
    c_std: float = 0.03
    c_mode: str = "fixed"
    log_eps: float = 1e-3
    seed: int = 0
    noise_rate: float = 0.0
    hot_pixel_fraction: float = 0.0
    hot_pixel_rate: float = 1000.0
    c_floor: float = 0.01
    fps: float = 240.0

    def sim_config(self) -> SimConfig:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "fps"}
        return SimConfig(**d)


@dataclass(frozen=True)
class PhysicalSection:
    c: float = 0.2
    deblur: bool = True


@dataclass(frozen=True)
class VoxelSection:
    n: int = 3
    exposure_bins: int = 6


@dataclass(frozen=True)
class ModelSection:
    scales: int = 2
    base_channels: int = 8
    residual_blocks_per_evr: int = 2
    image_residual_blocks: int = 1
    image_channels: int = 1
    reduction: int = 4
    shared_squeeze: bool = False
    bidirectional: bool = True
    activation: str = "leaky_relu"
    residual_scale: float = 1.0
    seed: int = 0
    lr: float = 1e-3
    steps: int = 500


@dataclass(frozen=True)
class EvalSection:
    peak: float = 1.0
    ssim_window: int = 11
    ssim_sigma: float = 1.5


_INT = dict(integer=True)
_RANGES: dict[str, dict] = {
    "SimulateSection": {
        "c_mean": dict(lo=0, lo_open=True), "c_std": dict(lo=0),
        "c_mode": ("fixed", "gaussian-per-pixel"), "log_eps": dict(lo=0, lo_open=True),
        "seed": dict(lo=0, **_INT), "noise_rate": dict(lo=0),
        "hot_pixel_fraction": dict(lo=0, hi=0.999999), "hot_pixel_rate": dict(lo=0),
        "c_floor": dict(lo=0, lo_open=True), "fps": dict(lo=0, lo_open=True),
    },
    "BlurSection": {
        "per_blur": dict(lo=1, **_INT), "skip": dict(lo=0, **_INT), "fps": dict(lo=0, lo_open=True),
    },
    "PhysicalSection": {"c": dict(lo=0, lo_open=True), "deblur": "bool"},
    "VoxelSection": {"n": dict(lo=0, hi=4096, **_INT), "exposure_bins": dict(lo=2, hi=4096, **_INT)},
    "ModelSection": {
        "scales": dict(lo=1, hi=6, **_INT), "base_channels": dict(lo=1, hi=1024, **_INT),
        "residual_blocks_per_evr": dict(lo=0, hi=64, **_INT),
        "image_residual_blocks": dict(lo=0, hi=64, **_INT),
        "image_channels": dict(lo=1, hi=3, **_INT), "reduction": dict(lo=1, **_INT),
        "shared_squeeze": "bool", "bidirectional": "bool",
        "activation": ("relu", "leaky_relu"), "residual_scale": dict(lo=0, hi=1, lo_open=True),
        "seed": dict(lo=0, **_INT), "lr": dict(lo=0, lo_open=True), "steps": dict(lo=0, **_INT),
    },
    "EvalSection": {
        "peak": dict(lo=0, lo_open=True), "ssim_window": dict(lo=1, **_INT),
        "ssim_sigma": dict(lo=0, lo_open=True),
    },
}

_SECTIONS = {
    "simulate": SimulateSection,
    "blur": BlurSection,
    "physical": PhysicalSection,
    "voxel": VoxelSection,
    "model": ModelSection,
    "eval": EvalSection,
}


@dataclass(frozen=True)
class PipelineConfig:
    simulate: SimulateSection = field(default_factory=SimulateSection)
    blur: BlurSection = field(default_factory=BlurSection)
    physical: PhysicalSection = field(default_factory=PhysicalSection)
    voxel: VoxelSection = field(default_factory=VoxelSection)
    model: ModelSection = field(default_factory=ModelSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_dict(cls, data) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("$", "expected a JSON object")
        for key in data:
            if key not in _SECTIONS:
                raise ConfigError(key, "unknown section")
        return cls(**{k: _section(c, k, data.get(k)) for k, c in _SECTIONS.items()})

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        return {k: {f.name: getattr(getattr(self, k), f.name) for f in fields(c)}
                for k, c in _SECTIONS.items()}

    def refid_config(self) -> RefidConfig:
        m = self.model
        try:
            return RefidConfig(
                scales=m.scales, base_channels=m.base_channels, n_interp=self.voxel.n,
                residual_blocks_per_evr=m.residual_blocks_per_evr,
                image_residual_blocks=m.image_residual_blocks,
                exposure_voxel_bins=self.voxel.exposure_bins, image_channels=m.image_channels,
                reduction=m.reduction, shared_squeeze=m.shared_squeeze,
                bidirectional=m.bidirectional, activation=m.activation,
                residual_scale=m.residual_scale,
            )
        except ValueError as exc:
            raise ConfigError("model", str(exc)) from None


def load_sim_config(path) -> SimConfig:
    """Flat JSON object whose keys mirror :class:`SimConfig` fields."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    section = _section(SimulateSection, "simulate", data)
    return section.sim_config()
