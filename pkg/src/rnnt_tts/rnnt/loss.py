"""Transducer loss over a text-by-frame lattice, its gradient, and best-path alignment.

Axis convention: the encoder axis is text (length N) and the emission axis is codec
frames (length T). A blank moves to the next text position, an emission outputs the
next frame's code. The blank symbol is the last vocabulary index. Every complete
path ends with a blank leaving text position N-1 after all T frames are out.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..numerics.tensor import Tensor, _node

NORMALIZATION_TOL = 1e-3
MAX_ENUMERATION = 12


class LatticeError(ValueError):
    pass


@dataclass
class Lattice:
    log_alpha: np.ndarray  # (N+1, T+1)
    log_beta: np.ndarray  # (N+1, T+1)
    log_prob: float  # total log-probability, from alpha

    @property
    def log_prob_backward(self) -> float:
        return float(self.log_beta[0, 0])


@dataclass
class AlignmentPath:
    path: str  # 'b' (blank: next text position) / 'e' (emit a frame)
    frame_to_pos: np.ndarray
    log_prob: float = float("nan")

    @property
    def num_text(self) -> int:
        return self.path.count("b")

    @property
    def num_frames(self) -> int:
        return self.path.count("e")

    def dwell(self) -> np.ndarray:
        """Frames emitted while sitting on each text position."""
        return np.bincount(self.frame_to_pos, minlength=self.num_text).astype(np.int64)

    def to_json(self) -> dict:
        return {"path": self.path, "frame_to_pos": [int(x) for x in self.frame_to_pos]}


def _check(log_probs: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    log_probs = np.asarray(log_probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if log_probs.ndim != 3:
        raise LatticeError(f"expected a (N, T+1, V+1) grid, got shape {log_probs.shape}")
    n, t1, v1 = log_probs.shape
    if n < 1:
        raise LatticeError("need at least one text position")
    if t1 != targets.size + 1:
        raise LatticeError(f"grid has {t1 - 1} frame steps but target has {targets.size} codes")
    if targets.size and (targets.min() < 0 or targets.max() >= v1 - 1):
        raise LatticeError(f"target codes must lie in [0, {v1 - 1})")
    m = log_probs.max(axis=-1, keepdims=True)
    lse = m[..., 0] + np.log(np.exp(log_probs - m).sum(axis=-1))
    if np.max(np.abs(lse)) > NORMALIZATION_TOL:
        raise LatticeError(f"grid rows are not normalized log-distributions (max |logsumexp| = {np.max(np.abs(lse)):.3g})")
    return log_probs, targets


def edge_scores(log_probs: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, t1, _ = log_probs.shape
    blank = np.ascontiguousarray(log_probs[:, :, -1])
    emit = np.full((n, t1), -np.inf)
    if t1 > 1:
        emit[:, :-1] = log_probs[:, np.arange(t1 - 1), targets]
    return blank, emit


def rnnt_loss(log_probs, targets) -> tuple[float, Lattice]:
    """Negative log of the total probability of all monotonic alignments."""
    log_probs, targets = _check(log_probs, targets)
    blank, emit = edge_scores(log_probs, targets)
    alpha = kernels.forward(blank, emit)
    beta = kernels.backward(blank, emit)
    total = float(alpha[-1, -1])
    return -total, Lattice(alpha, beta, total)


def rnnt_grad(log_probs, targets, lattice: Lattice) -> np.ndarray:
    """Gradient of the loss with respect to the joint logits (``log_probs = log_softmax(logits)``)."""
    log_probs, targets = _check(log_probs, targets)
    n, t1, _ = log_probs.shape
    if lattice.log_alpha.shape != (n + 1, t1) or lattice.log_beta.shape != (n + 1, t1):
        raise LatticeError("lattice does not match the grid")
    blank, emit = edge_scores(log_probs, targets)
    post_blank, post_emit = kernels.edge_posteriors(blank, emit, lattice.log_alpha, lattice.log_beta,
                                                    lattice.log_prob)
    occupancy = post_blank + post_emit
    grad = np.exp(log_probs) * occupancy[..., None]
    grad[:, :, -1] -= post_blank
    if t1 > 1:
        grad[:, np.arange(t1 - 1), targets] -= post_emit[:, :-1]
    return grad


def frame_map(path: str) -> np.ndarray:
    """Text position of each emitted frame: the number of blanks before it."""
    if not path or set(path) - {"b", "e"} or path[-1] != "b":
        raise LatticeError(f"malformed alignment path {path!r}")
    out = []
    blanks = 0
    for sym in path:
        if sym == "b":
            blanks += 1
        else:
            out.append(blanks)
    return np.asarray(out, dtype=np.int64)


def best_path(log_probs, targets) -> AlignmentPath:
    """Maximum-probability alignment; exact ties go to the blank (advance text first)."""
    log_probs, targets = _check(log_probs, targets)
    blank, emit = edge_scores(log_probs, targets)
    score = kernels.viterbi(blank, emit)
    n, t1 = blank.shape
    i = j = 0
    symbols = []
    while i < n:
        take_blank = j == t1 - 1 or blank[i, j] + score[i + 1, j] >= emit[i, j] + score[i, j + 1]
        if take_blank:
            symbols.append("b")
            i += 1
        else:
            symbols.append("e")
            j += 1
    path = "".join(symbols)
    return AlignmentPath(path, frame_map(path), float(score[0, 0]))


def path_log_prob(log_probs: np.ndarray, targets: np.ndarray, path: str) -> float:
    i = j = 0
    total = 0.0
    for sym in path:
        if sym == "b":
            total += log_probs[i, j, -1]
            i += 1
        else:
            total += log_probs[i, j, targets[j]]
            j += 1
    return float(total)


def enumerate_paths(log_probs, targets) -> list[tuple[str, float]]:
    """Every valid alignment with its exact log-probability (test oracle, N+T <= 12)."""
    log_probs, targets = _check(log_probs, targets)
    n, t1, _ = log_probs.shape
    t = t1 - 1
    if n + t > MAX_ENUMERATION:
        raise LatticeError(f"refusing to enumerate: N+T={n + t} exceeds {MAX_ENUMERATION}")
    out = []
    for emit_slots in itertools.combinations(range(n + t - 1), t):
        chosen = set(emit_slots)
        path = "".join("e" if k in chosen else "b" for k in range(n + t - 1)) + "b"
        out.append((path, path_log_prob(log_probs, targets, path)))
    return out


def logsumexp(values) -> float:
    values = np.asarray(list(values), dtype=np.float64)
    m = values.max()
    return float(m + math.log(np.exp(values - m).sum()))


def transducer_loss(logits: Tensor, targets) -> tuple[Tensor, np.ndarray, Lattice]:
    """Autodiff op: loss from raw joint logits (N, T+1, V+1); returns (loss, log_probs, lattice)."""
    z = logits.data.astype(np.float64)
    m = z.max(axis=-1, keepdims=True)
    log_probs = z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    loss, lattice = rnnt_loss(log_probs, targets)
    if not math.isfinite(loss):
        raise FloatingPointError("transducer loss is not finite")

    def backward(g):
        return (float(g) * rnnt_grad(log_probs, targets, lattice)).astype(logits.dtype),

    return _node(np.asarray(loss, dtype=logits.dtype), (logits,), backward), log_probs, lattice
