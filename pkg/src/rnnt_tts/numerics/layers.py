"""Parameterised layers on top of :mod:`rnnt_tts.numerics.tensor`."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor

LN_EPS = 1e-5


class ConfigError(ValueError):
    pass


class Param(Tensor):
    """A learnable array with a persistent gradient accumulator of the same shape."""

    __slots__ = ("name",)

    def __init__(self, value, name: str = ""):
        super().__init__(np.array(value), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape})"


class Module:
    """Container that discovers Params and sub-Modules from its attributes, in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Param]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Param):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Param):
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Param]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self) -> None:
        seen = set()
        for name, p in self.named_parameters():
            if name in seen:
                raise ConfigError(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        unexpected = state.keys() - own.keys()
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)[:5]} unexpected={sorted(unexpected)[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype, copy=True)
            p.zero_grad()


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


# functional forms ----------------------------------------------------------------

def affine(x, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    return T.linear(T.as_tensor(x), weight, bias)


def conditional_layer_norm(x: Tensor, speaker: Tensor, gamma: "Linear", beta: "Linear",
                           eps: float = LN_EPS) -> Tensor:
    """LayerNorm whose scale ``1 + gamma(speaker)`` and shift ``beta(speaker)`` come from a condition vector."""
    if x.shape[-1] < 2:
        raise ValueError("conditional_layer_norm needs at least 2 features")
    xhat = T.layer_norm(x, eps)
    return xhat * (gamma(speaker) + 1.0) + beta(speaker)


def sinusoidal_positions(length: int, dim: int, offset: int = 0, dtype=np.float64) -> np.ndarray:
    pos = np.arange(offset, offset + length, dtype=np.float64)[:, None]
    i = np.arange(0, dim, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i / dim)
    out = np.zeros((length, dim))
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle[:, : dim // 2])
    return out.astype(dtype)


# layers -------------------------------------------------------------------------

class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True,
                 zero_init: bool = False, dtype=np.float64):
        if zero_init:
            self.weight = Param(np.zeros((d_out, d_in), dtype=dtype))
        else:
            self.weight = Param(uniform_init(rng, (d_out, d_in), d_in, dtype))
        self.bias = Param(np.zeros(d_out, dtype=dtype)) if bias else None

    def __call__(self, x) -> Tensor:
        return T.linear(T.as_tensor(x), self.weight, self.bias)


class Embedding(Module):
    def __init__(self, num: int, dim: int, rng: np.random.Generator, dtype=np.float64):
        # unit-variance rows so token identity is not swamped by the positional signal
        self.weight = Param(rng.uniform(-math.sqrt(3), math.sqrt(3), size=(num, dim)).astype(dtype))

    def __call__(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        n = self.weight.shape[0]
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise IndexError(f"id out of range [0, {n})")
        return T.take(self.weight, ids, axis=0)


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float64):
        self.gain = Param(np.ones(dim, dtype=dtype))
        self.shift = Param(np.zeros(dim, dtype=dtype))

    def __call__(self, x: Tensor, speaker: Tensor | None = None) -> Tensor:
        return T.layer_norm(x, LN_EPS) * self.gain + self.shift


class ConditionalLayerNorm(Module):
    """Speaker-conditioned LayerNorm; zero-initialised projections make it plain LayerNorm at init."""

    def __init__(self, dim: int, cond_dim: int, rng: np.random.Generator, dtype=np.float64):
        self.gamma = Linear(cond_dim, dim, rng, zero_init=True, dtype=dtype)
        self.beta = Linear(cond_dim, dim, rng, zero_init=True, dtype=dtype)

    def __call__(self, x: Tensor, speaker: Tensor) -> Tensor:
        return conditional_layer_norm(x, speaker, self.gamma, self.beta)


class KVCache:
    """Keys/values already computed for one attention layer, shaped (heads, length, d_head)."""

    def __init__(self):
        self.keys: np.ndarray | None = None
        self.values: np.ndarray | None = None

    @property
    def length(self) -> int:
        return 0 if self.keys is None else self.keys.shape[1]


class MultiHeadAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator, kv_dim: int | None = None,
                 out_dim: int | None = None, dtype=np.float64):
        if dim % heads:
            raise ConfigError(f"model dim {dim} not divisible by {heads} heads")
        kv_dim = dim if kv_dim is None else kv_dim
        self.heads = heads
        self.q = Linear(dim, dim, rng, dtype=dtype)
        self.k = Linear(kv_dim, dim, rng, dtype=dtype)
        self.v = Linear(kv_dim, dim, rng, dtype=dtype)
        self.o = Linear(dim, dim if out_dim is None else out_dim, rng, dtype=dtype)

    def _split(self, x: Tensor) -> Tensor:
        n, d = x.shape
        return x.reshape(n, self.heads, d // self.heads).transpose(1, 0, 2)

    def __call__(self, x: Tensor, memory: Tensor | None = None, causal: bool = False,
                 cache: KVCache | None = None) -> Tensor:
        memory = x if memory is None else memory
        q = self._split(self.q(x))
        k = self._split(self.k(memory))
        v = self._split(self.v(memory))
        past = 0
        if cache is not None:
            past = cache.length
            if past:
                k = T.concat([Tensor(cache.keys), k], axis=1)
                v = T.concat([Tensor(cache.values), v], axis=1)
            cache.keys, cache.values = k.data, v.data
        return self.o(attend(q, k, v, causal=causal, query_offset=past))


def attend(q: Tensor, k: Tensor, v: Tensor, causal: bool = False, query_offset: int = 0) -> Tensor:
    """Scaled dot-product attention over (heads, length, d_head) tensors; heads are merged on output."""
    h, tq, dh = q.shape
    scores = T.matmul(q, k.transpose(0, 2, 1)) * np.asarray(1.0 / math.sqrt(dh), dtype=q.dtype)
    if causal:
        tk = k.shape[1]
        qpos = np.arange(tq)[:, None] + query_offset
        blocked = np.arange(tk)[None, :] > qpos
        if blocked.any():
            scores = scores + np.where(blocked, -1e30, 0.0).astype(q.dtype)
    weights = T.softmax(scores, axis=-1)
    out = T.matmul(weights, v)
    return out.transpose(1, 0, 2).reshape(tq, h * dh)


def multi_head_attention(queries: Tensor, keys: Tensor, values: Tensor, heads: int,
                         causal: bool = False, cache: KVCache | None = None) -> Tensor:
    """Projection-free attention; model dim is split into ``heads`` equal slices."""
    d = queries.shape[-1]
    if d % heads:
        raise ConfigError(f"model dim {d} not divisible by {heads} heads")

    def split(x):
        return x.reshape(x.shape[0], heads, d // heads).transpose(1, 0, 2)

    q, k, v = split(T.as_tensor(queries)), split(T.as_tensor(keys)), split(T.as_tensor(values))
    past = 0
    if cache is not None:
        past = cache.length
        if past:
            k = T.concat([Tensor(cache.keys), k], axis=1)
            v = T.concat([Tensor(cache.values), v], axis=1)
        cache.keys, cache.values = k.data, v.data
    return attend(q, k, v, causal=causal, query_offset=past)


def _window_indices(length: int, kernel: int, stride: int) -> np.ndarray:
    pad = kernel // 2
    starts = np.arange(0, length + 2 * pad - kernel + 1, stride)
    return starts[:, None] + np.arange(kernel)[None, :]


class Conv1d(Module):
    """Time convolution over a (length, channels) sequence with 'same'-style padding."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, stride: int = 1,
                 dtype=np.float64):
        self.kernel = kernel
        self.stride = stride
        self.proj = Linear(c_in * kernel, c_out, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        n, c = x.shape
        pad = self.kernel // 2
        if pad:
            zeros = Tensor(np.zeros((pad, c), dtype=x.dtype))
            x = T.concat([zeros, x, zeros], axis=0)
        windows = T.take(x, _window_indices(n, self.kernel, self.stride), axis=0)
        return self.proj(windows.reshape(windows.shape[0], self.kernel * c))


class FeedForward(Module):
    def __init__(self, dim: int, ff_dim: int, rng: np.random.Generator, kernel: int = 1, dtype=np.float64):
        self.up = Conv1d(dim, ff_dim, kernel, rng, dtype=dtype) if kernel > 1 else Linear(dim, ff_dim, rng, dtype=dtype)
        self.down = Linear(ff_dim, dim, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(T.relu(self.up(x)))


class TransformerBlock(Module):
    """Pre-norm block: x + attn(norm(x)), then x + ff(norm(x))."""

    def __init__(self, dim: int, heads: int, ff_dim: int, rng: np.random.Generator, cond_dim: int | None = None,
                 causal: bool = False, ff_kernel: int = 1, dtype=np.float64):
        if causal and ff_kernel > 1:
            raise ConfigError("causal blocks need a pointwise feed-forward (ff_kernel=1)")
        self.causal = causal
        if cond_dim is None:
            self.norm1, self.norm2 = LayerNorm(dim, dtype), LayerNorm(dim, dtype)
        else:
            self.norm1 = ConditionalLayerNorm(dim, cond_dim, rng, dtype)
            self.norm2 = ConditionalLayerNorm(dim, cond_dim, rng, dtype)
        self.attn = MultiHeadAttention(dim, heads, rng, dtype=dtype)
        self.ff = FeedForward(dim, ff_dim, rng, kernel=ff_kernel, dtype=dtype)

    def __call__(self, x: Tensor, speaker: Tensor | None = None, cache: KVCache | None = None) -> Tensor:
        x = x + self.attn(self.norm1(x, speaker), causal=self.causal, cache=cache)
        return x + self.ff(self.norm2(x, speaker))


class TransformerStack(Module):
    def __init__(self, layers: int, dim: int, heads: int, ff_dim: int, rng: np.random.Generator,
                 cond_dim: int | None = None, causal: bool = False, ff_kernel: int = 1, dtype=np.float64):
        self.blocks = [TransformerBlock(dim, heads, ff_dim, rng, cond_dim, causal, ff_kernel, dtype)
                       for _ in range(layers)]
        self.norm = LayerNorm(dim, dtype) if cond_dim is None else ConditionalLayerNorm(dim, cond_dim, rng, dtype)

    def __call__(self, x: Tensor, speaker: Tensor | None = None, caches: list[KVCache] | None = None) -> Tensor:
        for i, block in enumerate(self.blocks):
            x = block(x, speaker, None if caches is None else caches[i])
        return self.norm(x, speaker)

    def new_caches(self) -> list[KVCache]:
        return [KVCache() for _ in self.blocks]


class GRU(Module):
    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator, dtype=np.float64):
        self.hidden = d_hidden
        self.inp = Linear(d_in, 3 * d_hidden, rng, dtype=dtype)
        self.rec = Linear(d_hidden, 3 * d_hidden, rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        """Run over a (length, d_in) sequence and return the final hidden state."""
        h = self.hidden
        gx = self.inp(x)
        state = Tensor(np.zeros(h, dtype=x.dtype))
        for t in range(x.shape[0]):
            gt = gx[t]
            gh = self.rec(state)
            r = T.sigmoid(gt[:h] + gh[:h])
            z = T.sigmoid(gt[h:2 * h] + gh[h:2 * h])
            n = T.tanh(gt[2 * h:] + r * gh[2 * h:])
            state = n + z * (state - n)
        return state
