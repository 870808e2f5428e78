"""Declarative model configuration, presets and the canonical config hash."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigurationError


@dataclass(frozen=True)
class ScaleSpec:
    """One Latent Block: its downsampling factor and feature/latent widths."""

    factor: int
    channels: int
    latent_channels: int


@dataclass(frozen=True)
class ModelConfig:
    scales: tuple[ScaleSpec, ...]
    enable_temporal_prediction: bool = True
    enable_decoding_fusion: bool = True
    temporal_context_len: int = 2
    stem_factor: int | None = None
    blocks_per_scale: int = 1
    fusion_depth: int = 2
    expansion: int = 4
    kernel: int = 7
    lmbda: float = 1024.0
    init_seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        scales = tuple(s if isinstance(s, ScaleSpec) else ScaleSpec(**s) for s in self.scales)
        object.__setattr__(self, "scales", scales)
        if len(scales) < 2:
            raise ConfigurationError(f"need at least 2 latent blocks, got {len(scales)}")
        factors = [s.factor for s in scales]
        for a, b in zip(factors, factors[1:]):
            if b > a or a % b:
                raise ConfigurationError(f"scale factors must be non-increasing divisors coarse->fine: {factors}")
        if factors[0] == factors[-1]:
            raise ConfigurationError(f"scale ladder has a single resolution: {factors}")
        for s in scales:
            if s.factor < 1 or s.channels < 1 or s.latent_channels < 1:
                raise ConfigurationError(f"invalid ScaleSpec {s}")
        if self.temporal_context_len < 1:
            raise ConfigurationError("temporal_context_len must be >= 1")
        stem = self.stem
        if stem < 1 or factors[-1] % stem:
            raise ConfigurationError(f"stem factor {stem} must divide the finest scale factor {factors[-1]}")
        if self.lmbda < 0:
            raise ConfigurationError("lambda must be non-negative")

    @property
    def num_scales(self) -> int:
        return len(self.scales)

    @property
    def stem(self) -> int:
        return self.stem_factor or self.scales[-1].factor

    @property
    def coarsest_factor(self) -> int:
        return self.scales[0].factor

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scales"] = [dataclasses.asdict(s) for s in self.scales]
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> bytes:
        """32-byte SHA-256 of the canonical JSON form."""
        return hashlib.sha256(self.canonical_json().encode()).digest()

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        d["scales"] = tuple(ScaleSpec(**s) for s in d["scales"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _ladder(factors, channels, latent, **kw) -> ModelConfig:
    return ModelConfig(scales=tuple(ScaleSpec(f, channels, latent) for f in factors), **kw)


def full_config(**kw) -> ModelConfig:
    """Five Latent Blocks at 1/64, 1/32, 1/16, 1/16, 1/8 with 192 channels."""
    kw.setdefault("name", "full")
    kw.setdefault("stem_factor", 4)
    return _ladder((64, 32, 16, 16, 8), 192, 32, **kw)


def desk_config(**kw) -> ModelConfig:
    """Four Latent Blocks at 1/16 .. 1/2 with 48 channels (64x64 frames)."""
    kw.setdefault("name", "desk")
    return _ladder((16, 8, 4, 2), 48, 8, **kw)


def toy_config(**kw) -> ModelConfig:
    """Small CPU preset used for the directional experiments on 32x32 clips."""
    kw.setdefault("name", "toy")
    return _ladder((16, 8, 4, 2), 24, 4, **kw)


PRESETS = {"full": full_config, "desk": desk_config, "toy": toy_config}


def preset(name: str, **kw) -> ModelConfig:
    try:
        return PRESETS[name](**kw)
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
