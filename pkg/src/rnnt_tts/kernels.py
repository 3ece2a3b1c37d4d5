"""Lattice kernels: forward/backward log-variables, occupancy gradient, max-product scores.

Each kernel exists twice: a numba loop (``*_nb``) and a numpy anti-diagonal
wavefront (``*_np``). The dispatch names at the bottom pick one according to
``rnnt_tts._accel.USE_NUMBA``. Inputs are the two per-cell edge scores
``blank[i, j]`` and ``emit[i, j]`` (emit is only meaningful for ``j < T``), both
float64 of shape (N, T+1). Node layout is (N+1, T+1); row N only holds the final
node (N, T).
"""
from __future__ import annotations

import numpy as np

from ._accel import NUMBA_AVAILABLE, USE_NUMBA, njit

NEG_INF = -np.inf


# numba ---------------------------------------------------------------------------

@njit
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit
def forward_nb(blank, emit):
    n, t1 = blank.shape
    alpha = np.full((n + 1, t1), -np.inf)
    alpha[0, 0] = 0.0
    for i in range(n):
        for j in range(t1):
            if i == 0 and j == 0:
                continue
            a = -np.inf
            if i > 0:
                a = alpha[i - 1, j] + blank[i - 1, j]
            if j > 0:
                a = _logaddexp(a, alpha[i, j - 1] + emit[i, j - 1])
            alpha[i, j] = a
    alpha[n, t1 - 1] = alpha[n - 1, t1 - 1] + blank[n - 1, t1 - 1]
    return alpha


@njit
def backward_nb(blank, emit):
    n, t1 = blank.shape
    beta = np.full((n + 1, t1), -np.inf)
    beta[n, t1 - 1] = 0.0
    for i in range(n - 1, -1, -1):
        for j in range(t1 - 1, -1, -1):
            b = beta[i + 1, j] + blank[i, j]
            if j < t1 - 1:
                b = _logaddexp(b, beta[i, j + 1] + emit[i, j])
            beta[i, j] = b
    return beta


@njit
def edge_posteriors_nb(blank, emit, alpha, beta, log_total):
    n, t1 = blank.shape
    post_blank = np.zeros((n, t1))
    post_emit = np.zeros((n, t1))
    for i in range(n):
        for j in range(t1):
            a = alpha[i, j]
            if a == -np.inf:
                continue
            post_blank[i, j] = np.exp(a + blank[i, j] + beta[i + 1, j] - log_total)
            if j < t1 - 1:
                post_emit[i, j] = np.exp(a + emit[i, j] + beta[i, j + 1] - log_total)
    return post_blank, post_emit


@njit
def viterbi_nb(blank, emit):
    """Best continuation score from every node to the end (max-product backward pass)."""
    n, t1 = blank.shape
    score = np.full((n + 1, t1), -np.inf)
    score[n, t1 - 1] = 0.0
    for i in range(n - 1, -1, -1):
        for j in range(t1 - 1, -1, -1):
            b = blank[i, j] + score[i + 1, j]
            if j < t1 - 1:
                e = emit[i, j] + score[i, j + 1]
                if e > b:
                    b = e
            score[i, j] = b
    return score


@njit
def nearest_codes_nb(residual, book):
    n, d = residual.shape
    v = book.shape[0]
    out = np.zeros(n, dtype=np.int64)
    for t in range(n):
        best = np.inf
        arg = 0
        for c in range(v):
            acc = 0.0
            for k in range(d):
                diff = residual[t, k] - book[c, k]
                acc += diff * diff
            if acc < best:
                best = acc
                arg = c
        out[t] = arg
    return out


# numpy ---------------------------------------------------------------------------

def _diagonal(n: int, t1: int, d: int):
    i = np.arange(max(0, d - t1 + 1), min(n - 1, d) + 1)
    return i, d - i


def forward_np(blank: np.ndarray, emit: np.ndarray) -> np.ndarray:
    n, t1 = blank.shape
    alpha = np.full((n + 1, t1), NEG_INF)
    alpha[0, 0] = 0.0
    with np.errstate(invalid="ignore"):
        for d in range(1, n + t1 - 1):
            i, j = _diagonal(n, t1, d)
            from_blank = np.full(i.size, NEG_INF)
            ok = i > 0
            from_blank[ok] = alpha[i[ok] - 1, j[ok]] + blank[i[ok] - 1, j[ok]]
            from_emit = np.full(i.size, NEG_INF)
            ok = j > 0
            from_emit[ok] = alpha[i[ok], j[ok] - 1] + emit[i[ok], j[ok] - 1]
            alpha[i, j] = np.logaddexp(from_blank, from_emit)
    alpha[n, t1 - 1] = alpha[n - 1, t1 - 1] + blank[n - 1, t1 - 1]
    return alpha


def backward_np(blank: np.ndarray, emit: np.ndarray) -> np.ndarray:
    n, t1 = blank.shape
    beta = np.full((n + 1, t1), NEG_INF)
    beta[n, t1 - 1] = 0.0
    with np.errstate(invalid="ignore"):
        for d in range(n + t1 - 2, -1, -1):
            i, j = _diagonal(n, t1, d)
            via_blank = beta[i + 1, j] + blank[i, j]
            via_emit = np.full(i.size, NEG_INF)
            ok = j < t1 - 1
            via_emit[ok] = beta[i[ok], j[ok] + 1] + emit[i[ok], j[ok]]
            beta[i, j] = np.logaddexp(via_blank, via_emit)
    return beta


def edge_posteriors_np(blank, emit, alpha, beta, log_total):
    n, t1 = blank.shape
    a = alpha[:n]
    reach = np.isfinite(a)
    with np.errstate(invalid="ignore", over="ignore"):
        post_blank = np.where(reach, np.exp(a + blank + beta[1:] - log_total), 0.0)
        post_emit = np.zeros((n, t1))
        post_emit[:, :-1] = np.where(reach[:, :-1], np.exp(a[:, :-1] + emit[:, :-1] + beta[:n, 1:] - log_total), 0.0)
    return post_blank, post_emit


def viterbi_np(blank: np.ndarray, emit: np.ndarray) -> np.ndarray:
    n, t1 = blank.shape
    score = np.full((n + 1, t1), NEG_INF)
    score[n, t1 - 1] = 0.0
    for d in range(n + t1 - 2, -1, -1):
        i, j = _diagonal(n, t1, d)
        b = blank[i, j] + score[i + 1, j]
        e = np.full(i.size, NEG_INF)
        ok = j < t1 - 1
        e[ok] = emit[i[ok], j[ok]] + score[i[ok], j[ok] + 1]
        score[i, j] = np.where(e > b, e, b)
    return score


def nearest_codes_np(residual: np.ndarray, book: np.ndarray) -> np.ndarray:
    diff = residual[:, None, :] - book[None, :, :]
    return np.argmin((diff * diff).sum(axis=-1), axis=1)


if USE_NUMBA and NUMBA_AVAILABLE:
    forward, backward, edge_posteriors, viterbi, nearest_codes = (
        forward_nb, backward_nb, edge_posteriors_nb, viterbi_nb, nearest_codes_nb)
else:
    forward, backward, edge_posteriors, viterbi, nearest_codes = (
        forward_np, backward_np, edge_posteriors_np, viterbi_np, nearest_codes_np)
