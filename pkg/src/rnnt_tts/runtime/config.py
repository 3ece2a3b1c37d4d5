"""Single JSON run configuration merging model, training, decoding and codec settings."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..codec import CodecSpec
from ..model import ModelConfig
from ..model.config import from_dict
from ..numerics.layers import ConfigError
from .decode import DecodeConfig
from .train import TrainConfig


@dataclass
class TextConfig:
    vocab_size: int = 256
    char_only: bool = False


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    codec: CodecSpec = field(default_factory=CodecSpec)
    text: TextConfig = field(default_factory=TextConfig)

    def __post_init__(self):
        m, c = self.model, self.codec
        if (m.code_vocab, m.num_codebooks, m.feature_dim) != (c.codebook_size, c.num_codebooks, c.feature_dim):
            raise ConfigError("model code_vocab/num_codebooks/feature_dim must match the codec")
        if self.text.vocab_size > m.text_vocab:
            raise ConfigError("text vocab_size exceeds the model's text_vocab")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            return from_dict(cls, data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc).strip("'\"")) from exc

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)
