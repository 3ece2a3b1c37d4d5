"""Binary containers: TTSC code grids, TTSF feature matrices, TTSX checkpoints."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

CODES_MAGIC = b"TTSC"
FEATURES_MAGIC = b"TTSF"
CHECKPOINT_MAGIC = b"TTSX"
CODES_VERSION = 1
CHECKPOINT_VERSION = 1


class FormatError(ValueError):
    pass


def _read(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc


def write_codes(path: str | Path, codes: np.ndarray) -> None:
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise FormatError("code grid must be T x K")
    if codes.size and (codes.min() < 0 or codes.max() > 0xFFFF):
        raise FormatError("codes must fit in u16")
    t, k = codes.shape
    payload = CODES_MAGIC + struct.pack("<III", CODES_VERSION, t, k) + codes.astype("<u2").tobytes()
    Path(path).write_bytes(payload)


def read_codes(path: str | Path) -> np.ndarray:
    raw = _read(path)
    if raw[:4] != CODES_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, t, k = struct.unpack_from("<III", raw, 4)
    if version != CODES_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = raw[16:]
    if len(body) != 2 * t * k:
        raise FormatError(f"{path}: expected {t}x{k} codes, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<u2").reshape(t, k).astype(np.int64)


def write_features(path: str | Path, features: np.ndarray) -> None:
    features = np.asarray(features)
    if features.ndim != 2:
        raise FormatError("features must be T x d_f")
    t, d = features.shape
    Path(path).write_bytes(FEATURES_MAGIC + struct.pack("<II", t, d) + features.astype("<f4").tobytes())


def read_features(path: str | Path) -> np.ndarray:
    raw = _read(path)
    if raw[:4] != FEATURES_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    t, d = struct.unpack_from("<II", raw, 4)
    body = raw[12:]
    if len(body) != 4 * t * d:
        raise FormatError(f"{path}: expected {t}x{d} floats, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(t, d).astype(np.float64)


def write_checkpoint(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Header JSON followed by one record per array, in the given order, stored as f32."""
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)), blob]
    for name, value in arrays.items():
        value = np.asarray(value)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)) + encoded)
        parts.append(struct.pack("<I", value.ndim) + struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(value.astype("<f4").tobytes())
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = _read(path)
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version, n = struct.unpack_from("<IQ", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 16
    meta = json.loads(raw[off:off + n].decode("utf-8"))
    off += n
    arrays: dict[str, np.ndarray] = {}
    while off < len(raw):
        (ln,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + ln].decode("utf-8")
        off += ln
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arrays[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(shape).astype(np.float32)
        off += 4 * count
    return meta, arrays
