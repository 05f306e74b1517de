"""Retrieval kernel with a compiled fast path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``TSARAG_KERNEL=python`` to
force the fallback or ``TSARAG_KERNEL=native`` to require the compiled
extension (ImportError if it was not built); the default ``auto`` prefers
the extension when available.
"""
from __future__ import annotations

import os

from . import _fallback


def _load():
    choice = os.environ.get("TSARAG_KERNEL", "auto").lower()
    if choice not in ("auto", "native", "python"):
        raise ValueError(f"unknown TSARAG_KERNEL value: {choice!r}")
    if choice in ("auto", "native"):
        try:
            from . import _native
            return _native, "native"
        except ImportError:
            if choice == "native":
                raise
    return _fallback, "python"


_impl, _backend = _load()

retrieve_batch = _impl.retrieve_batch


def backend_name() -> str:
    """Name of the active backend: 'native' or 'python'."""
    return _backend
