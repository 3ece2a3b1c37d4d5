"""Text encoder, prediction network, joint network, residual codebook head and style-token speaker encoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import tensor as T
from ..numerics.layers import (
    GRU,
    Conv1d,
    Embedding,
    KVCache,
    Linear,
    Module,
    MultiHeadAttention,
    Param,
    TransformerStack,
    sinusoidal_positions,
)
from ..numerics.tensor import Tensor
from .config import ModelConfig

MIN_REF_FRAMES = 4


class TextEncoder(Module):
    """Bidirectional Transformer over text tokens, LayerNorms conditioned on the speaker."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        c = cfg.encoder
        self.embed = Embedding(cfg.text_vocab, c.dim, rng, dtype)
        self.stack = TransformerStack(c.layers, c.dim, c.heads, c.ff_dim, rng, cond_dim=c.dim,
                                      ff_kernel=c.ff_kernel, dtype=dtype)

    def __call__(self, ids, speaker: Tensor) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            raise ValueError("cannot encode an empty token sequence")
        x = self.embed(ids) + sinusoidal_positions(ids.size, self.embed.weight.shape[1], dtype=self.embed.weight.dtype)
        return self.stack(x, speaker)


@dataclass
class PredictorState:
    caches: list[KVCache]
    output: np.ndarray  # (d_p,) state after the last consumed symbol
    length: int = 0  # symbols consumed, including <SOS>


class Predictor(Module):
    """Causal Transformer over first-codebook codes with <SOS> (id = code_vocab) prepended."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        c = cfg.predictor
        self.sos = cfg.code_vocab
        self.embed = Embedding(cfg.code_vocab + 1, c.dim, rng, dtype)
        self.stack = TransformerStack(c.layers, c.dim, c.heads, c.ff_dim, rng, causal=True, dtype=dtype)

    def __call__(self, codes) -> Tensor:
        codes = np.asarray(codes, dtype=np.int64).reshape(-1)
        if codes.size and (codes.min() < 0 or codes.max() >= self.sos):
            raise IndexError(f"code out of range [0, {self.sos})")
        ids = np.concatenate([[self.sos], codes])
        x = self.embed(ids) + sinusoidal_positions(ids.size, self.embed.weight.shape[1], dtype=self.embed.weight.dtype)
        return self.stack(x)

    def start(self) -> PredictorState:
        state = PredictorState(self.stack.new_caches(), np.empty(0))
        return self.advance(state, self.sos)

    def advance(self, state: PredictorState, code: int) -> PredictorState:
        """Consume one symbol using the key/value caches (inference only)."""
        if not 0 <= code <= self.sos:
            raise IndexError(f"code out of range [0, {self.sos})")
        with T.no_grad():
            x = self.embed([code]) + sinusoidal_positions(1, self.embed.weight.shape[1], offset=state.length,
                                                          dtype=self.embed.weight.dtype)
            out = self.stack(x, caches=state.caches)
        return PredictorState(state.caches, out.data[0], state.length + 1)


class Joint(Module):
    """log Softmax(Linear(ReLU(enc_proj(e_i) + pred_proj(p_j)))) over codes plus blank (last index)."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        self.enc_proj = Linear(cfg.encoder.dim, cfg.joint_dim, rng, dtype=dtype)
        self.pred_proj = Linear(cfg.predictor.dim, cfg.joint_dim, rng, dtype=dtype)
        self.out = Linear(cfg.joint_dim, cfg.code_vocab + 1, rng, dtype=dtype)

    @property
    def blank(self) -> int:
        return self.out.weight.shape[0] - 1

    def grid(self, enc: Tensor, pred: Tensor) -> Tensor:
        """Logits for every (text position, predictor state) pair: (N, T+1, V+1)."""
        a = self.enc_proj(enc)
        b = self.pred_proj(pred)
        n, d = a.shape
        h = T.relu(a.reshape(n, 1, d) + b.reshape(1, b.shape[0], d))
        return self.out(h)

    def log_probs(self, enc_row: np.ndarray, pred_row: np.ndarray) -> np.ndarray:
        """Single-cell evaluation on arrays (decoding)."""
        with T.no_grad():
            h = T.relu(self.enc_proj(Tensor(enc_row)) + self.pred_proj(Tensor(pred_row)))
            return T.log_softmax(self.out(h)).data


class ResidualHead(Module):
    """Non-autoregressive predictor of codebook k from codebooks < k and alignment-distributed encoder rows."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        c = cfg.rch
        self.code_embed = [Embedding(cfg.code_vocab, c.dim, rng, dtype) for _ in range(cfg.num_codebooks - 1)]
        self.level_embed = Embedding(cfg.num_codebooks, c.dim, rng, dtype)
        self.inp = Linear(c.dim + cfg.encoder.dim, c.dim, rng, dtype=dtype)
        self.stack = TransformerStack(c.layers, c.dim, c.heads, c.ff_dim, rng, cond_dim=cfg.encoder.dim,
                                      ff_kernel=c.ff_kernel, dtype=dtype)
        self.out = Linear(c.dim, cfg.code_vocab, rng, dtype=dtype)

    def __call__(self, codes_below: np.ndarray, aligned: Tensor, level: int, speaker: Tensor) -> Tensor:
        codes_below = np.asarray(codes_below, dtype=np.int64)
        num_levels = len(self.code_embed) + 1
        if not 1 <= level < num_levels:
            raise ValueError(f"residual head predicts levels 1..{num_levels - 1}, got {level}")
        if codes_below.ndim != 2 or codes_below.shape[1] < level:
            raise ValueError(f"need codes for levels 0..{level - 1}, got shape {codes_below.shape}")
        frames = codes_below.shape[0]
        x = self.level_embed(np.full(frames, level))
        for m in range(level):
            x = x + self.code_embed[m](codes_below[:, m])
        x = self.inp(T.concat([x, aligned], axis=-1))
        x = x + sinusoidal_positions(frames, x.shape[1], dtype=x.dtype)
        return self.out(self.stack(x, speaker))


class StyleEncoder(Module):
    """Strided convolutions and a GRU summarise a reference; attention over learned style tokens gives the embedding."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        g = cfg.gst
        chans = [cfg.feature_dim] + list(g.ref_channels)
        self.convs = [Conv1d(chans[i], chans[i + 1], 3, rng, stride=2, dtype=dtype) for i in range(len(chans) - 1)]
        self.gru = GRU(chans[-1], g.rnn_dim, rng, dtype=dtype)
        self.query = Linear(g.rnn_dim, g.token_dim, rng, dtype=dtype)
        self.tokens = Param((0.5 * rng.standard_normal((g.num_tokens, g.token_dim))).astype(dtype))
        self.attn = MultiHeadAttention(g.token_dim, g.heads, rng, out_dim=cfg.encoder.dim, dtype=dtype)

    def __call__(self, ref) -> Tensor:
        ref = T.as_tensor(ref)
        if ref.ndim != 2 or ref.shape[0] < MIN_REF_FRAMES:
            raise ValueError(f"reference needs at least {MIN_REF_FRAMES} frames, got shape {ref.shape}")
        x = ref
        for conv in self.convs:
            x = T.relu(conv(x))
        # unit-scale query: without it attention over the tokens is near uniform and ignores the reference
        q = T.layer_norm(self.query(self.gru(x)))
        out = self.attn(q.reshape(1, q.shape[0]), memory=T.tanh(self.tokens))
        return out.reshape(out.shape[1])


class TransducerTTS(Module):
    """All trainable parts; parameter creation order is fixed so a seed fixes every weight."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(cfg.seed)
        self.gst = StyleEncoder(cfg, rng, dtype)
        self.encoder = TextEncoder(cfg, rng, dtype)
        self.predictor = Predictor(cfg, rng, dtype)
        self.joint = Joint(cfg, rng, dtype)
        self.rch = ResidualHead(cfg, rng, dtype)
        self.assign_names()

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    def gst_embed(self, ref) -> Tensor:
        return self.gst(np.asarray(ref, dtype=self.dtype))

    def encode_text(self, ids, speaker: Tensor) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.text_vocab):
            raise IndexError(f"token id out of range [0, {self.cfg.text_vocab})")
        return self.encoder(ids, speaker)

    def predict_codes(self, prev_codes) -> Tensor:
        return self.predictor(prev_codes)

    def joint_grid(self, enc: Tensor, pred: Tensor) -> Tensor:
        return self.joint.grid(enc, pred)

    def rch_forward(self, codes_below, aligned: Tensor, level: int, speaker: Tensor) -> Tensor:
        return self.rch(codes_below, aligned, level, speaker)

    def parameters_of(self, *parts: str) -> list[Param]:
        return [p for part in parts for p in getattr(self, part).parameters()]


def param_count(cfg: ModelConfig) -> int:
    """Exact number of scalar parameters, computed from shapes without allocating the model."""

    def linear(i, o):
        return i * o + o

    def stack(c, cond_dim):
        norm = 2 * linear(cond_dim, c.dim) if cond_dim else 2 * c.dim
        up = linear(c.dim * c.ff_kernel, c.ff_dim)
        block = 2 * norm + 4 * linear(c.dim, c.dim) + up + linear(c.ff_dim, c.dim)
        return c.layers * block + norm

    d_e, d_p, d_r = cfg.encoder.dim, cfg.predictor.dim, cfg.rch.dim
    g = cfg.gst
    chans = [cfg.feature_dim] + list(g.ref_channels)
    gst = sum(linear(3 * chans[i], chans[i + 1]) for i in range(len(chans) - 1))
    gst += linear(chans[-1], 3 * g.rnn_dim) + linear(g.rnn_dim, 3 * g.rnn_dim)
    gst += linear(g.rnn_dim, g.token_dim) + g.num_tokens * g.token_dim
    gst += 3 * linear(g.token_dim, g.token_dim) + linear(g.token_dim, d_e)
    encoder = cfg.text_vocab * d_e + stack(cfg.encoder, d_e)
    predictor = (cfg.code_vocab + 1) * d_p + stack(cfg.predictor, None)
    joint = linear(d_e, cfg.joint_dim) + linear(d_p, cfg.joint_dim) + linear(cfg.joint_dim, cfg.code_vocab + 1)
    rch = ((cfg.num_codebooks - 1) * cfg.code_vocab * d_r + cfg.num_codebooks * d_r + linear(d_r + d_e, d_r)
           + stack(cfg.rch, d_e) + linear(d_r, cfg.code_vocab))
    return gst + encoder + predictor + joint + rch
