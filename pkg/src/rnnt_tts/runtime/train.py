"""Joint transducer + residual-head training step and the step loop around it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..model import TransducerTTS
from ..model.config import from_dict
from ..numerics import tensor as T
from ..numerics.optim import AdamWState, LrSchedule, adamw_step, clip_grad_norm, lr_at
from ..rnnt import best_path, transducer_loss


class NonFiniteLoss(FloatingPointError):
    def __init__(self, step: int, detail: str):
        super().__init__(f"non-finite loss at step {step}: {detail}")
        self.step = step


@dataclass
class TrainConfig:
    alpha: float = 0.4
    batch_size: int = 8
    total_steps: int = 5000
    schedule: LrSchedule = field(default_factory=LrSchedule)
    grad_clip: float = 1.0
    weight_decay: float = 0.01
    seed: int = 0
    checkpoint_every: int = 500

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.batch_size < 1 or self.total_steps < 0 or self.checkpoint_every < 1:
            raise ValueError("batch_size and checkpoint_every must be positive, total_steps non-negative")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return from_dict(cls, data)


@dataclass
class LossBreakdown:
    rnnt: float
    ce: float
    total: float
    k: int  # residual level of the first batch item
    levels: list[int] = field(default_factory=list)
    grad_norm: float = 0.0
    lr: float = 0.0

    def log_record(self, step: int) -> dict:
        return {"step": step, "lr": self.lr, "rnnt": self.rnnt, "ce": self.ce, "total": self.total, "k": self.k}


@dataclass
class Example:
    id: str
    ids: np.ndarray  # text token ids
    codes: np.ndarray  # (T, K) ground-truth code grid
    ref: np.ndarray  # reference feature frames for the speaker
    ref_key: str = ""  # examples sharing a key share one style embedding per batch


def new_optimizer(cfg: TrainConfig) -> AdamWState:
    return AdamWState(weight_decay=cfg.weight_decay)


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Everything random in a step comes from (seed, step), so a resumed run replays exactly."""
    return np.random.default_rng([seed, step, 0x5EED])


def choose_batch(n_examples: int, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    size = min(cfg.batch_size, n_examples)
    return np.sort(rng.choice(n_examples, size=size, replace=False))


def compute_losses(model: TransducerTTS, batch: list[Example], alpha: float, levels: list[int],
                   step: int = 0) -> tuple[LossBreakdown, T.Tensor]:
    """Forward pass for a batch; returns the breakdown and the differentiable batch-mean total."""
    if not batch:
        raise ValueError("empty batch")
    k_total = model.cfg.num_codebooks
    styles: dict[str, T.Tensor] = {}
    totals, rnnts, ces = [], [], []
    for ex, k in zip(batch, levels):
        codes = np.asarray(ex.codes, dtype=np.int64)
        if codes.ndim != 2 or codes.shape[1] != k_total:
            raise ValueError(f"{ex.id}: code grid must have {k_total} columns, got shape {codes.shape}")
        if codes.shape[0] == 0:
            raise ValueError(f"{ex.id}: empty code grid")
        key = ex.ref_key or ex.id
        if key not in styles:
            styles[key] = model.gst_embed(ex.ref)
        speaker = styles[key]
        enc = model.encode_text(ex.ids, speaker)
        pred = model.predict_codes(codes[:, 0])
        try:
            l_rnnt, log_probs, _ = transducer_loss(model.joint_grid(enc, pred), codes[:, 0])
        except FloatingPointError as exc:
            raise NonFiniteLoss(step, f"item {ex.id}: {exc}") from exc
        path = best_path(log_probs, codes[:, 0])
        aligned = T.take(enc, path.frame_to_pos, axis=0)
        logits = model.rch_forward(codes[:, :k], aligned, k, speaker)
        l_ce = T.cross_entropy(logits, codes[:, k])
        r, c = float(l_rnnt.data), float(l_ce.data)
        if not (math.isfinite(r) and math.isfinite(c)):
            raise NonFiniteLoss(step, f"item {ex.id}: rnnt={r} ce={c}")
        rnnts.append(r)
        ces.append(c)
        totals.append(l_rnnt * (1.0 - alpha) + l_ce * alpha)
    b = len(batch)
    rnnt, ce = sum(rnnts) / b, sum(ces) / b
    total = T.stack(totals).mean()
    breakdown = LossBreakdown(rnnt, ce, (1.0 - alpha) * rnnt + alpha * ce, levels[0], list(levels))
    return breakdown, total


def train_step(model: TransducerTTS, batch: list[Example], cfg: TrainConfig, opt: AdamWState, step: int,
               rng: np.random.Generator) -> LossBreakdown:
    """One optimizer step on ``batch``; residual levels are drawn per item from ``rng``."""
    k_total = model.cfg.num_codebooks
    levels = [int(x) for x in rng.integers(1, k_total, size=len(batch))]
    params = model.parameters()
    model.zero_grad()
    out, total = compute_losses(model, batch, cfg.alpha, levels, step)
    total.backward()
    out.grad_norm = clip_grad_norm(params, cfg.grad_clip)
    if not math.isfinite(out.grad_norm):
        raise NonFiniteLoss(step, f"gradient norm {out.grad_norm}")
    out.lr = lr_at(cfg.schedule, step)
    adamw_step(params, opt, out.lr)
    return out


def run_training(model: TransducerTTS, examples: list[Example], cfg: TrainConfig, opt: AdamWState,
                 start_step: int, stop_step: int,
                 on_step: Callable[[int, LossBreakdown], None] | None = None) -> int:
    """Run steps ``start_step .. stop_step-1``; ``on_step`` sees each finished step. Returns the next step."""
    step = start_step
    while step < stop_step:
        rng = step_rng(cfg.seed, step)
        batch = [examples[i] for i in choose_batch(len(examples), cfg, rng)]
        out = train_step(model, batch, cfg, opt, step, rng)
        step += 1
        if on_step is not None:
            on_step(step, out)
    return step
