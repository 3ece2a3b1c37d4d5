"""AdamW, warmup + cosine schedule, global-norm clipping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layers import Param


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class LrSchedule:
    warmup_steps: int = 200
    max_lr: float = 1e-3
    total_steps: int = 5000
    min_lr: float = 0.0

    def __post_init__(self):
        if not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError("need 0 <= warmup_steps <= total_steps")
        if self.min_lr > self.max_lr:
            raise ValueError("min_lr must not exceed max_lr")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Linear warmup to ``max_lr``, cosine decay to ``min_lr`` at ``total_steps``, flat afterwards."""
    if step < 0:
        raise ValueError("step must be non-negative")
    s = schedule
    if step < s.warmup_steps:
        return s.max_lr * step / s.warmup_steps
    if step >= s.total_steps and step > s.warmup_steps:
        return s.min_lr
    span = s.total_steps - s.warmup_steps
    if span == 0:
        return s.max_lr
    progress = (step - s.warmup_steps) / span
    return s.min_lr + 0.5 * (s.max_lr - s.min_lr) * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamWState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: list[Param], state: AdamWState, lr: float) -> None:
    """One decoupled-weight-decay Adam update; zeroes gradients afterwards."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradient(f"non-finite gradient in parameter {p.name!r} at optimizer step {state.step}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in params:
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = state.v[p.name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[p.name], state.v[p.name] = m.astype(p.dtype), v.astype(p.dtype)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps) + state.weight_decay * p.data
        p.data = (p.data - lr * update).astype(p.dtype)
        p.zero_grad()


def clip_grad_norm(params: list[Param], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad = (p.grad * scale).astype(p.dtype)
    return total
