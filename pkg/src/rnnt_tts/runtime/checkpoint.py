"""Save and restore model weights, optimizer moments, run config, vocabulary and codebooks in one TTSX file."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..formats import FormatError, read_checkpoint, write_checkpoint
from ..model import TransducerTTS
from ..numerics.optim import AdamWState
from ..text import BpeVocab
from .config import RunConfig

MOMENT_PREFIX = ("optim.m.", "optim.v.")


@dataclass
class Checkpoint:
    config: RunConfig
    model: TransducerTTS
    optimizer: AdamWState
    step: int
    vocab: BpeVocab
    codebooks: np.ndarray
    meta: dict


def save_checkpoint(path: str | Path, config: RunConfig, model: TransducerTTS, optimizer: AdamWState, step: int,
                    vocab: BpeVocab, codebooks: np.ndarray) -> None:
    meta = {
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "step": int(step),
        "optimizer_step": int(optimizer.step),
        "vocab": vocab.to_dict(),
        # JSON floats round-trip float64 exactly; the array records are f32
        "codebooks": np.asarray(codebooks, dtype=np.float64).tolist(),
    }
    arrays: dict[str, np.ndarray] = dict(model.state_dict())
    for name, _ in model.named_parameters():
        if name in optimizer.m:
            arrays[MOMENT_PREFIX[0] + name] = optimizer.m[name]
            arrays[MOMENT_PREFIX[1] + name] = optimizer.v[name]
    write_checkpoint(path, meta, arrays)


def load_checkpoint(path: str | Path) -> Checkpoint:
    meta, arrays = read_checkpoint(path)
    try:
        config = RunConfig.from_dict(meta["config"])
        if config.hash() != meta["config_hash"]:
            raise FormatError(f"{path}: stored config hash does not match its config")
        model = TransducerTTS(config.model)
        params = {k: v for k, v in arrays.items() if not k.startswith(MOMENT_PREFIX)}
        model.load_state_dict(params)
        t = config.train
        opt = AdamWState(weight_decay=t.weight_decay, step=int(meta["optimizer_step"]))
        for name, value in arrays.items():
            if name.startswith(MOMENT_PREFIX[0]):
                opt.m[name[len(MOMENT_PREFIX[0]):]] = value.astype(model.dtype)
            elif name.startswith(MOMENT_PREFIX[1]):
                opt.v[name[len(MOMENT_PREFIX[1]):]] = value.astype(model.dtype)
        vocab = BpeVocab.from_dict(meta["vocab"])
        codebooks = np.asarray(meta["codebooks"], dtype=np.float64)
    except (KeyError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: malformed checkpoint ({exc})") from exc
    return Checkpoint(config, model, opt, int(meta["step"]), vocab, codebooks, meta)
