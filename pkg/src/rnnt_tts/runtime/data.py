"""Manifest reading: JSONL entries resolved against the manifest's directory."""
from __future__ import annotations

import json
from pathlib import Path

from ..formats import read_codes, read_features
from ..text import BpeVocab
from .train import Example


def read_manifest(path: str | Path) -> list[dict]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"cannot read manifest {path}: {exc.strerror}") from exc
    entries = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{n}: invalid JSON ({exc})") from exc
        missing = {"id", "text", "speaker", "codes", "ref"} - set(entry)
        if missing:
            raise ValueError(f"{path}:{n}: missing keys {sorted(missing)}")
        entries.append(entry)
    return entries


def load_examples(manifest: str | Path, vocab: BpeVocab) -> list[Example]:
    manifest = Path(manifest)
    root = manifest.parent
    refs: dict[str, object] = {}
    out = []
    for entry in read_manifest(manifest):
        ref_path = entry["ref"]
        if ref_path not in refs:
            refs[ref_path] = read_features(root / ref_path)
        out.append(Example(entry["id"], vocab.encode(entry["text"]).ids, read_codes(root / entry["codes"]),
                           refs[ref_path], ref_key=ref_path))
    return out


def ground_truth_features(manifest: str | Path, uid: str):
    return read_features(Path(manifest).parent / "features" / f"{uid}.ttsf")
