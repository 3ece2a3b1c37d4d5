"""Numba toggle shared by every hot kernel.

Set ``RNNT_TTS_DISABLE_NUMBA=1`` before import to force the pure-numpy paths.
Both paths are always importable so tests and the benchmark can compare them.
"""
from __future__ import annotations

import os

USE_NUMBA = os.environ.get("RNNT_TTS_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")

try:
    from numba import njit as _njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def _njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


def njit(fn):
    """Compile ``fn`` with numba (cached) when available, else return it unchanged."""
    return _njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if (USE_NUMBA and NUMBA_AVAILABLE) else "numpy"
