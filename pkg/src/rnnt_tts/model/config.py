from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field


class UnknownKeyError(KeyError):
    pass


def from_dict(cls, data: dict | None):
    """Build a (possibly nested) dataclass from a dict, rejecting unknown keys."""
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise TypeError(f"{cls.__name__}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise UnknownKeyError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory if fields[name].default_factory is not dataclasses.MISSING else None
        sample = default() if default is not None else None
        if dataclasses.is_dataclass(sample):
            kwargs[name] = from_dict(type(sample), value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


@dataclass
class StackConfig:
    layers: int = 4
    dim: int = 128
    heads: int = 4
    ff_dim: int = 256
    ff_kernel: int = 1

    def __post_init__(self):
        if min(self.layers, self.dim, self.heads, self.ff_dim, self.ff_kernel) < 1:
            raise ValueError("stack dimensions must be positive")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by {self.heads} heads")


@dataclass
class GstConfig:
    num_tokens: int = 32
    token_dim: int = 128
    ref_channels: list = field(default_factory=lambda: [32, 64])
    rnn_dim: int = 64
    heads: int = 4

    def __post_init__(self):
        if self.token_dim % self.heads:
            raise ValueError("GST token_dim must be divisible by heads")


@dataclass
class ModelConfig:
    encoder: StackConfig = field(default_factory=lambda: StackConfig(4, 128, 4, 256))
    predictor: StackConfig = field(default_factory=lambda: StackConfig(2, 128, 4, 256))
    joint_dim: int = 128
    rch: StackConfig = field(default_factory=lambda: StackConfig(4, 128, 4, 256))
    gst: GstConfig = field(default_factory=GstConfig)
    text_vocab: int = 256
    code_vocab: int = 64
    num_codebooks: int = 4
    feature_dim: int = 8
    max_symbols_per_step: int = 32
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.num_codebooks < 2:
            raise ValueError("need at least 2 codebooks")
        if min(self.joint_dim, self.text_vocab, self.code_vocab, self.feature_dim) < 1:
            raise ValueError("model dimensions must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return from_dict(cls, data)


def full_scale_config() -> ModelConfig:
    """Layer counts and widths of the full-size system (8 codebooks of 1024 entries)."""
    return ModelConfig(
        encoder=StackConfig(layers=12, dim=640, heads=2, ff_dim=1536, ff_kernel=3),
        predictor=StackConfig(layers=6, dim=512, heads=4, ff_dim=2048),
        joint_dim=640,
        rch=StackConfig(layers=12, dim=512, heads=2, ff_dim=1536, ff_kernel=3),
        gst=GstConfig(num_tokens=1024, token_dim=640, ref_channels=[32, 32, 64, 64, 128, 128], rnn_dim=128,
                      heads=4),
        text_vocab=16384,
        code_vocab=1024,
        num_codebooks=8,
        feature_dim=80,
    )


def tiny_config(**overrides) -> ModelConfig:
    """One layer per stack at width 8, for finite-difference checks."""
    base = dict(
        encoder=StackConfig(1, 8, 2, 16),
        predictor=StackConfig(1, 8, 2, 16),
        joint_dim=8,
        rch=StackConfig(1, 8, 2, 16),
        gst=GstConfig(num_tokens=4, token_dim=8, ref_channels=[4], rnn_dim=8, heads=2),
        text_vocab=12,
        code_vocab=6,
        num_codebooks=3,
        feature_dim=3,
        dtype="float64",
    )
    base.update(overrides)
    return ModelConfig(**base)
