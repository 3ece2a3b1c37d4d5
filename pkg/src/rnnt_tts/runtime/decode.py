"""Inference: nucleus-sampled label-looping transducer decode, greedy residual head, codec decode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..codec import rvq_decode
from ..model import TransducerTTS
from ..numerics import tensor as T
from ..rnnt import AlignmentPath, frame_map
from ..text import BpeVocab


@dataclass
class DecodeConfig:
    p: float = 0.95
    max_symbols_per_step: int = 32
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError("nucleus p must lie in (0, 1]")
        if self.max_symbols_per_step < 1:
            raise ValueError("max_symbols_per_step must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def nucleus_sample(log_probs: np.ndarray, p: float, temperature: float, rng: np.random.Generator) -> int:
    """Sample from the smallest top-probability set whose mass reaches ``p``.

    A single-token nucleus returns that token without touching ``rng``, so a small
    enough ``p`` is exactly greedy decoding.
    """
    z = np.asarray(log_probs, dtype=np.float64) / temperature
    probs = np.exp(z - z.max())
    probs /= probs.sum()
    order = np.argsort(-probs, kind="stable")
    cumulative = np.cumsum(probs[order])
    keep = int(np.searchsorted(cumulative, p - 1e-12, side="left")) + 1
    keep = min(keep, probs.size)
    if keep == 1:
        return int(order[0])
    support = order[:keep]
    weights = probs[support] / probs[support].sum()
    return int(support[rng.choice(keep, p=weights)])


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def decode_first_codebook(model: TransducerTTS, enc: np.ndarray, cfg: DecodeConfig,
                          rng: np.random.Generator) -> tuple[np.ndarray, AlignmentPath]:
    """Label-looping decode over text positions.

    Each outer iteration looks for the next code: it samples at the current text
    position and keeps moving to the next position while the sample is blank. A
    found code is emitted and fed to the cached predictor. After
    ``max_symbols_per_step`` codes at one position a blank is forced.
    """
    joint = model.joint
    blank = joint.blank
    w_out, b_out = joint.out.weight.data, joint.out.bias.data
    enc_proj = enc @ joint.enc_proj.weight.data.T + joint.enc_proj.bias.data
    state = model.predictor.start()

    def pred_proj(s):
        return s.output @ joint.pred_proj.weight.data.T + joint.pred_proj.bias.data

    def sample(i, pp):
        h = np.maximum(enc_proj[i] + pp, 0)
        return nucleus_sample(_log_softmax(h @ w_out.T + b_out), cfg.p, cfg.temperature, rng)

    n = enc.shape[0]
    pp = pred_proj(state)
    codes: list[int] = []
    symbols: list[str] = []
    i = 0
    here = 0
    while i < n:
        label = sample(i, pp)
        while label == blank:
            symbols.append("b")
            i += 1
            here = 0
            if i == n:
                break
            label = sample(i, pp)
        if i == n:
            break
        codes.append(label)
        symbols.append("e")
        here += 1
        state = model.predictor.advance(state, label)
        pp = pred_proj(state)
        if here >= cfg.max_symbols_per_step:
            symbols.append("b")
            i += 1
            here = 0
    path = "".join(symbols)
    return np.asarray(codes, dtype=np.int64), AlignmentPath(path, frame_map(path))


def decode_residual(model: TransducerTTS, codes0: np.ndarray, path: AlignmentPath, enc: np.ndarray,
                    speaker: np.ndarray) -> np.ndarray:
    """Fill codebooks 1..K-1 greedily, each level conditioned on all lower predicted levels."""
    k_total = model.cfg.num_codebooks
    codes0 = np.asarray(codes0, dtype=np.int64)
    if codes0.size != path.frame_to_pos.size:
        raise ValueError("alignment frame count does not match the first-codebook codes")
    grid = np.zeros((codes0.size, k_total), dtype=np.int64)
    if codes0.size == 0:
        return grid
    grid[:, 0] = codes0
    aligned = T.Tensor(enc[path.frame_to_pos])
    spk = T.Tensor(speaker)
    with T.no_grad():
        for k in range(1, k_total):
            logits = model.rch_forward(grid[:, :k], aligned, k, spk).data
            grid[:, k] = np.argmax(logits, axis=-1)
    return grid


@dataclass
class Synthesis:
    features: np.ndarray
    codes: np.ndarray
    path: AlignmentPath


def speaker_embedding(model: TransducerTTS, ref: np.ndarray) -> np.ndarray:
    with T.no_grad():
        return model.gst_embed(ref).data


def synthesize_ids(model: TransducerTTS, ids: np.ndarray, ref: np.ndarray, codebooks: np.ndarray,
                   cfg: DecodeConfig, rng: np.random.Generator) -> Synthesis:
    speaker = speaker_embedding(model, ref)
    with T.no_grad():
        enc = model.encode_text(ids, T.Tensor(speaker)).data
    codes0, path = decode_first_codebook(model, enc, cfg, rng)
    grid = decode_residual(model, codes0, path, enc, speaker)
    return Synthesis(rvq_decode(codebooks, grid), grid, path)


def synthesize(text: str, ref: np.ndarray, model: TransducerTTS, vocab: BpeVocab, codebooks: np.ndarray,
               cfg: DecodeConfig, rng: np.random.Generator | None = None) -> Synthesis:
    """Text and a reference recording in, reconstructed feature frames out."""
    if not text:
        raise ValueError("cannot synthesize empty text")
    ids = vocab.encode(text).ids
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    return synthesize_ids(model, ids, ref, codebooks, cfg, rng)
