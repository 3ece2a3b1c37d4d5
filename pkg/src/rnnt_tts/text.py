"""Byte-pair encoding over characters, with whitespace kept as a standalone symbol."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

HEADER = "BPEV1"


class TokenizationError(ValueError):
    pass


@dataclass
class TokenSeq:
    ids: np.ndarray
    text: str

    def __len__(self) -> int:
        return int(self.ids.size)


def _split(text: str) -> list[str]:
    """Words and single whitespace characters, in order; merges never cross a whitespace char."""
    parts: list[str] = []
    word = []
    for ch in text:
        if ch.isspace():
            if word:
                parts.append("".join(word))
                word = []
            parts.append(ch)
        else:
            word.append(ch)
    if word:
        parts.append("".join(word))
    return parts


def _apply(symbols: list[str], rank: dict[tuple[str, str], int]) -> list[str]:
    while len(symbols) > 1:
        best = None
        for pair in zip(symbols, symbols[1:]):
            r = rank.get(pair)
            if r is not None and (best is None or r < best[0]):
                best = (r, pair)
        if best is None:
            break
        left, right = best[1]
        merged = []
        k = 0
        while k < len(symbols):
            if k + 1 < len(symbols) and symbols[k] == left and symbols[k + 1] == right:
                merged.append(left + right)
                k += 2
            else:
                merged.append(symbols[k])
                k += 1
        symbols = merged
    return symbols


@dataclass
class BpeVocab:
    base: list[str]
    merges: list[tuple[str, str]]
    tokens: list[str] = field(init=False)
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.tokens = list(self.base) + [a + b for a, b in self.merges]
        self.token_to_id = {}
        for i, tok in enumerate(self.tokens):
            self.token_to_id.setdefault(tok, i)
        self._rank = {pair: r for r, pair in enumerate(self.merges)}
        self._base_set = set(self.base)
        self._cache: dict[str, list[int]] = {}

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        """Reserved id one past the last token; never produced by ``encode``."""
        return len(self.tokens)

    def encode(self, text: str) -> TokenSeq:
        return bpe_encode(self, text)

    def decode(self, ids) -> str:
        return bpe_decode(self, ids)

    def to_dict(self) -> dict:
        return {"base": list(self.base), "merges": [list(m) for m in self.merges]}

    @classmethod
    def from_dict(cls, d: dict) -> "BpeVocab":
        return cls(list(d["base"]), [tuple(m) for m in d["merges"]])

    def save(self, path: str | Path) -> None:
        lines = [f"{HEADER} {len(self.base)} {len(self.merges)}"]
        lines += [_escape(s) for s in self.base]
        lines += [f"{_escape(a)}\t{_escape(b)}" for a, b in self.merges]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BpeVocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        head = lines[0].split()
        if len(head) != 3 or head[0] != HEADER:
            raise ValueError(f"{path}: not a {HEADER} vocabulary file")
        n_base, n_merges = int(head[1]), int(head[2])
        base = [_unescape(s) for s in lines[1:1 + n_base]]
        merges = []
        for line in lines[1 + n_base:1 + n_base + n_merges]:
            a, b = line.split("\t")
            merges.append((_unescape(a), _unescape(b)))
        return cls(base, merges)


_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", " ": "\\s", "\r": "\\r"}
_UNESCAPES = {v[1]: k for k, v in _ESCAPES.items()}


def _escape(s: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in s)


def _unescape(s: str) -> str:
    out = []
    k = 0
    while k < len(s):
        if s[k] == "\\" and k + 1 < len(s):
            out.append(_UNESCAPES[s[k + 1]])
            k += 2
        else:
            out.append(s[k])
            k += 1
    return "".join(out)


def bpe_train(corpus: Iterable[str], vocab_size: int = 256, char_only: bool = False) -> BpeVocab:
    """Greedy most-frequent-pair merges; ties go to the lexicographically smallest pair.

    Stops when ``vocab_size`` tokens exist or no adjacent pair is left to merge.
    ``char_only`` returns the character vocabulary with no merges.
    """
    lines = [line for line in corpus]
    if not lines or not any(lines):
        raise TokenizationError("cannot train a vocabulary on an empty corpus")
    words: Counter[str] = Counter()
    chars = set()
    for line in lines:
        for part in _split(line):
            chars.update(part)
            if not part.isspace():
                words[part] += 1
    base = sorted(chars)
    merges: list[tuple[str, str]] = []
    if char_only:
        return BpeVocab(base, merges)
    segmented = {w: list(w) for w in words}
    while len(base) + len(merges) < vocab_size:
        counts: Counter[tuple[str, str]] = Counter()
        for w, freq in words.items():
            syms = segmented[w]
            for pair in zip(syms, syms[1:]):
                counts[pair] += freq
        if not counts:
            break
        top = max(counts.values())
        pair = min(p for p, c in counts.items() if c == top)
        merges.append(pair)
        rank = {pair: 0}
        for w in segmented:
            segmented[w] = _apply(segmented[w], rank)
    return BpeVocab(base, merges)


def bpe_encode(vocab: BpeVocab, text: str) -> TokenSeq:
    ids: list[int] = []
    for part in _split(text):
        cached = vocab._cache.get(part)
        if cached is None:
            for ch in part:
                if ch not in vocab._base_set:
                    raise TokenizationError(f"character {ch!r} is not in the vocabulary")
            cached = [vocab.token_to_id[s] for s in _apply(list(part), vocab._rank)]
            vocab._cache[part] = cached
        ids.extend(cached)
    return TokenSeq(np.asarray(ids, dtype=np.int64), text)


def bpe_decode(vocab: BpeVocab, ids) -> str:
    out = []
    for i in np.asarray(ids, dtype=np.int64).reshape(-1):
        if i < 0 or i >= len(vocab.tokens):
            raise IndexError(f"token id {int(i)} out of range [0, {len(vocab.tokens)})")
        out.append(vocab.tokens[i])
    return "".join(out)
