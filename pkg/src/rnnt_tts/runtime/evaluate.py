"""Corpus-level decode metrics against ground-truth codes and features."""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass

import numpy as np

from ..codec import rvq_decode, rvq_encode
from ..model import TransducerTTS
from ..rnnt import AlignmentPath, frame_map
from .decode import DecodeConfig, Synthesis, synthesize_ids
from .train import Example


def utterance_rng(seed: int, uid: str) -> np.random.Generator:
    """Independent of decode order: keyed on the utterance id."""
    return np.random.default_rng([seed, zlib.crc32(uid.encode("utf-8"))])


def levenshtein(a, b) -> int:
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def pad_to(x: np.ndarray, length: int) -> np.ndarray:
    """Trim or extend with the last frame (zeros if empty) to ``length`` frames."""
    if x.shape[0] >= length:
        return x[:length]
    fill = x[-1] if x.shape[0] else np.zeros(x.shape[1])
    return np.concatenate([x, np.repeat(fill[None], length - x.shape[0], axis=0)])


def monotone(path: AlignmentPath, n_text: int) -> bool:
    f = path.frame_to_pos
    if path.path.count("b") != n_text or not np.array_equal(f, frame_map(path.path)):
        return False
    return bool(f.size == 0 or (np.all(np.diff(f) >= 0) and f[0] >= 0 and f[-1] < n_text))


@dataclass
class EvalReport:
    first_codebook_token_error_rate: float
    full_grid_token_accuracy: float
    exact_sequence_match: float
    mean_relative_length_error: float
    feature_mse_vs_codec_floor: dict
    alignment_monotonicity_violations: int
    split: str = ""
    seed: int = 0
    utterances: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def oracle_synthesis(ex: Example, codebooks: np.ndarray) -> Synthesis:
    """Ground-truth codes passed straight through; the path is the trivial emit-then-advance route."""
    path = "e" * len(ex.codes) + "b" * len(ex.ids)
    return Synthesis(rvq_decode(codebooks, ex.codes), np.asarray(ex.codes), AlignmentPath(path, frame_map(path)))


def evaluate(model: TransducerTTS | None, examples: list[Example], references: list[np.ndarray],
             codebooks: np.ndarray, cfg: DecodeConfig, seed: int, split: str = "", oracle: bool = False) -> EvalReport:
    """Decode every example and score it; ``references`` holds the ground-truth feature frames."""
    if not examples:
        raise ValueError("nothing to evaluate")
    edits = ref_tokens = 0
    grid_hits = grid_total = 0
    exact = 0
    rel_len = []
    se = floor_se = elements = 0.0
    violations = 0
    for ex, feats in zip(examples, references):
        if oracle:
            syn = oracle_synthesis(ex, codebooks)
        else:
            syn = synthesize_ids(model, ex.ids, ex.ref, codebooks, cfg, utterance_rng(seed, ex.id))
        ref_codes = np.asarray(ex.codes)
        pred0, ref0 = syn.codes[:, 0], ref_codes[:, 0]
        edits += levenshtein(pred0, ref0)
        ref_tokens += max(len(pred0), len(ref0))
        exact += int(np.array_equal(pred0, ref0))
        t = min(len(syn.codes), len(ref_codes))
        grid_hits += int(np.sum(syn.codes[:t] == ref_codes[:t]))
        grid_total += max(len(syn.codes), len(ref_codes)) * ref_codes.shape[1]
        rel_len.append(abs(len(pred0) - len(ref0)) / len(ref0))
        pred_feats = pad_to(syn.features, len(feats))
        se += float(np.sum((pred_feats - feats) ** 2))
        floor_se += float(np.sum((rvq_decode(codebooks, rvq_encode(codebooks, feats)) - feats) ** 2))
        elements += feats.size
        violations += int(not monotone(syn.path, len(ex.ids)))
    feature_mse, floor = se / elements, floor_se / elements
    return EvalReport(
        first_codebook_token_error_rate=100.0 * edits / max(ref_tokens, 1),
        full_grid_token_accuracy=100.0 * grid_hits / max(grid_total, 1),
        exact_sequence_match=100.0 * exact / len(examples),
        mean_relative_length_error=float(np.mean(rel_len)),
        feature_mse_vs_codec_floor={"feature_mse": feature_mse, "codec_floor": floor,
                                    "ratio": feature_mse / floor if floor > 0 else None},
        alignment_monotonicity_violations=violations,
        split=split, seed=seed, utterances=len(examples),
    )
