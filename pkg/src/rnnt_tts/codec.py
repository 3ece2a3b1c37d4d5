"""Synthetic residual vector quantizer and the toy corpus built on it.

"Audio" here is a sequence of feature frames. Each text token owns a fixed feature
vector; a speaker stretches tokens over a number of frames and shifts every frame by
its timbre offset. Frames are quantized with greedy residual VQ, so every utterance
has exact ground-truth codes and an exact reconstruction error.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .formats import write_codes, write_features
from .text import BpeVocab, TokenSeq, bpe_train

LEVEL_DECAY = 0.5
ALPHABET = "abcdefghijkl"


@dataclass
class CodecSpec:
    num_codebooks: int = 4
    codebook_size: int = 64
    feature_dim: int = 8
    frame_rate: float = 75.0

    def __post_init__(self):
        if self.num_codebooks < 2:
            raise ValueError("need at least 2 codebooks")
        if self.codebook_size < 2:
            raise ValueError("need at least 2 entries per codebook")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")


@dataclass
class ToySpeaker:
    id: str
    duration_factor: float
    timbre_offset: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 1.0 <= self.duration_factor <= 8.0:
            raise ValueError("duration_factor must lie in [1, 8]")
        self.timbre_offset = np.asarray(self.timbre_offset, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"id": self.id, "duration_factor": self.duration_factor,
                "timbre_offset": [float(x) for x in self.timbre_offset]}

    @classmethod
    def from_dict(cls, d: dict) -> "ToySpeaker":
        return cls(d["id"], float(d["duration_factor"]), np.asarray(d["timbre_offset"]))


# RVQ ---------------------------------------------------------------------------

def rvq_init(spec: CodecSpec, seed: int) -> np.ndarray:
    """Gaussian codebooks, level k scaled by 0.5**k so later levels refine the residual."""
    rng = np.random.default_rng(seed)
    books = rng.standard_normal((spec.num_codebooks, spec.codebook_size, spec.feature_dim))
    scale = LEVEL_DECAY ** np.arange(spec.num_codebooks)
    return books * scale[:, None, None]


def rvq_encode(codebooks: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Greedy residual quantization of (T, d_f) frames into a (T, K) code grid (ties -> lowest index)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != codebooks.shape[2]:
        raise ValueError(f"features must be (T, {codebooks.shape[2]}), got {features.shape}")
    residual = features.copy()
    codes = np.zeros((features.shape[0], codebooks.shape[0]), dtype=np.int64)
    for k, book in enumerate(codebooks):
        codes[:, k] = kernels.nearest_codes(residual, np.ascontiguousarray(book))
        residual -= book[codes[:, k]]
    return codes


def rvq_decode(codebooks: np.ndarray, codes: np.ndarray, levels: int | None = None) -> np.ndarray:
    """Sum the selected entries of the first ``levels`` codebooks for every frame."""
    codes = np.asarray(codes, dtype=np.int64)
    k_total, v, d = codebooks.shape
    levels = k_total if levels is None else levels
    if not 0 <= levels <= k_total or codes.ndim != 2 or codes.shape[1] < levels:
        raise ValueError(f"cannot decode {levels} levels from codes of shape {codes.shape}")
    if levels and codes.size and (codes[:, :levels].min() < 0 or codes[:, :levels].max() >= v):
        raise IndexError(f"code out of range [0, {v})")
    out = np.zeros((codes.shape[0], d))
    for k in range(levels):
        out += codebooks[k][codes[:, k]]
    return out


def is_fixed_point(codebooks: np.ndarray, codes: np.ndarray) -> bool:
    codes = np.asarray(codes, dtype=np.int64)
    return bool(np.array_equal(rvq_encode(codebooks, rvq_decode(codebooks, codes)), codes))


def mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


# toy data model ----------------------------------------------------------------

@dataclass
class TokenFeatureTable:
    """Fixed feature vector per text token id."""

    vectors: np.ndarray  # (text vocab, d_f)

    def lookup(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.vectors)):
            raise IndexError("token id outside the feature table")
        return self.vectors[ids]


def build_token_table(num_tokens: int, codebooks: np.ndarray, speakers: list[ToySpeaker], seed: int,
                      noise: float = 0.08, max_draws: int = 1000) -> TokenFeatureTable:
    """Draw one vector per token near a random codebook combination.

    Each token's draws come from its own seeded stream. A draw is kept only if, for
    every speaker, its frames quantize to a code tuple that survives decode->encode
    unchanged, so the generated corpus has no ambiguous quantization cells.
    """
    k_total, v, d = codebooks.shape
    vectors = np.zeros((num_tokens, d))
    for tok in range(num_tokens):
        rng = np.random.default_rng([seed, tok])
        for _ in range(max_draws):
            combo = rng.integers(0, v, size=k_total)
            candidate = sum(codebooks[k][combo[k]] for k in range(k_total)) + noise * rng.standard_normal(d)
            frames = np.stack([candidate + s.timbre_offset for s in speakers])
            if is_fixed_point(codebooks, rvq_encode(codebooks, frames)):
                vectors[tok] = candidate
                break
        else:
            raise RuntimeError(f"no quantization-stable feature vector found for token {tok}")
    return TokenFeatureTable(vectors)


def durations(n_tokens: int, speaker: ToySpeaker, rng: np.random.Generator, jitter: float = 0.25) -> np.ndarray:
    u = rng.uniform(-jitter, jitter, size=n_tokens) if jitter > 0 else np.zeros(n_tokens)
    return np.maximum(1, np.round(speaker.duration_factor * (1.0 + u))).astype(np.int64)


def synth_features(tokens: TokenSeq, speaker: ToySpeaker, seed, table: TokenFeatureTable,
                   jitter: float = 0.25) -> np.ndarray:
    """Repeat each token's vector for its jittered duration and add the speaker's timbre."""
    if len(tokens) == 0:
        raise ValueError("cannot synthesize features for an empty token sequence")
    rng = np.random.default_rng(seed)
    reps = durations(len(tokens), speaker, rng, jitter)
    return np.repeat(table.lookup(tokens.ids), reps, axis=0) + speaker.timbre_offset


def make_speakers(count: int, feature_dim: int, seed: int, timbre_scale: float = 0.6) -> list[ToySpeaker]:
    """Speakers with duration factors spread evenly over [2, 4] and random timbre offsets."""
    if count < 1:
        raise ValueError("need at least one speaker")
    rng = np.random.default_rng([seed, 7919])
    factors = [2.0] if count == 1 else list(np.linspace(2.0, 4.0, count))
    out = []
    for i, f in enumerate(factors):
        offset = rng.standard_normal(feature_dim)
        offset *= timbre_scale / np.linalg.norm(offset)
        out.append(ToySpeaker(f"spk{i}", float(f), offset))
    return out


def random_sentences(count: int, seed: int, lexicon_size: int = 24, min_words: int = 3,
                     max_words: int = 6) -> list[str]:
    rng = np.random.default_rng([seed, 104729])
    lexicon: list[str] = []
    while len(lexicon) < lexicon_size:
        word = "".join(rng.choice(list(ALPHABET), size=int(rng.integers(2, 6))))
        if word not in lexicon:
            lexicon.append(word)
    return [" ".join(rng.choice(lexicon, size=int(rng.integers(min_words, max_words + 1))))
            for _ in range(count)]


# corpus on disk ------------------------------------------------------------------

@dataclass
class Corpus:
    """Everything needed to regenerate or consume a toy corpus."""

    vocab: BpeVocab
    codebooks: np.ndarray
    speakers: list[ToySpeaker]
    table: TokenFeatureTable


def _write_split(root: Path, name: str, sentences: list[str], count: int, corpus: Corpus, seed: int,
                 offset: int) -> int:
    """Utterance n reads text n // S with speaker n % S, so every text is heard from each speaker in turn."""
    lines = []
    n_spk = len(corpus.speakers)
    for n in range(count):
        uid = f"{name}{n:04d}"
        text = sentences[n // n_spk]
        speaker = corpus.speakers[n % n_spk]
        tokens = corpus.vocab.encode(text)
        feats = synth_features(tokens, speaker, [seed, offset + n], corpus.table)
        codes = rvq_encode(corpus.codebooks, feats)
        write_codes(root / "codes" / f"{uid}.ttsc", codes)
        write_features(root / "features" / f"{uid}.ttsf", feats)
        lines.append(json.dumps({"id": uid, "text": text, "speaker": speaker.id,
                                 "codes": f"codes/{uid}.ttsc", "ref": f"refs/{speaker.id}.ttsf"}))
    manifest = "manifest.jsonl" if name == "utt" else f"{name}.jsonl"
    (root / manifest).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return len(lines)


def corpus_generate(out_dir: str | Path, sentences: int, speakers: list[ToySpeaker], spec: CodecSpec, seed: int,
                    vocab_size: int = 256, char_only: bool = False, heldout: int = 0) -> dict:
    """Write a toy corpus: manifest(s), per-utterance codes and features, speaker refs, vocab, codebooks."""
    if sentences < 1:
        raise ValueError("need at least one sentence")
    if not speakers:
        raise ValueError("need at least one speaker")
    root = Path(out_dir)
    try:
        for sub in ("codes", "features", "refs"):
            (root / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {root}: {exc.strerror}") from exc
    n_spk = len(speakers)
    n_train, n_held = -(-sentences // n_spk), -(-heldout // n_spk)
    texts = random_sentences(n_spk + n_held + n_train, seed)
    ref_text, heldout_text, train = texts[:n_spk], texts[n_spk:n_spk + n_held], texts[n_spk + n_held:]
    vocab = bpe_train(train + heldout_text + ref_text, vocab_size, char_only=char_only)
    codebooks = rvq_init(spec, seed)
    table = build_token_table(len(vocab), codebooks, speakers, seed)
    corpus = Corpus(vocab, codebooks, speakers, table)

    for s, (speaker, text) in enumerate(zip(speakers, ref_text)):
        ref = synth_features(vocab.encode(text), speaker, [seed, 10_000_000 + s], table)
        write_features(root / "refs" / f"{speaker.id}.ttsf", ref)
    n_train = _write_split(root, "utt", train, sentences, corpus, seed, 0)
    n_held = _write_split(root, "heldout", heldout_text, heldout, corpus, seed, 1_000_000) if heldout else 0

    vocab.save(root / "vocab.bpe")
    np.save(root / "codebooks.npy", codebooks)
    np.save(root / "token_table.npy", table.vectors)
    meta = {"seed": seed, "codec": asdict(spec), "speakers": [s.to_dict() for s in speakers],
            "sentences": n_train, "heldout": n_held, "vocab_size": len(vocab)}
    (root / "corpus.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return meta


def load_corpus(root: str | Path) -> tuple[Corpus, dict]:
    root = Path(root)
    try:
        meta = json.loads((root / "corpus.json").read_text(encoding="utf-8"))
        vocab = BpeVocab.load(root / "vocab.bpe")
        codebooks = np.load(root / "codebooks.npy")
        table = TokenFeatureTable(np.load(root / "token_table.npy"))
    except OSError as exc:
        raise OSError(f"cannot read corpus at {root}: {exc}") from exc
    speakers = [ToySpeaker.from_dict(d) for d in meta["speakers"]]
    return Corpus(vocab, codebooks, speakers, table), meta
