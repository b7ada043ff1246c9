"""Hot-kernel backend selection.

The compiled extension (``_core``, Cython) is preferred when it imported
cleanly; the pure-numpy fallback is always available. Set
``SGCRL_LAB_BACKEND=numpy`` or ``=cython`` to force a choice — forcing
``cython`` raises if the extension is missing rather than silently degrading.
"""
from __future__ import annotations

import importlib
import os

from . import _numpy

_FORCED = os.environ.get("SGCRL_LAB_BACKEND", "").strip().lower()

_core = None
if _FORCED != "numpy":
    try:
        _core = importlib.import_module("._core", __name__)
    except ImportError:
        _core = None
        if _FORCED == "cython":
            raise ImportError(
                "SGCRL_LAB_BACKEND=cython but the compiled extension is not built; "
                "reinstall the package or unset the variable"
            )

_impl = _core if _core is not None else _numpy

backend_name: str = getattr(_impl, "BACKEND", "numpy")

infonce_batch_update = _impl.infonce_batch_update
scalar_batch_update = _impl.scalar_batch_update
rollout = _impl.rollout


def available_backends() -> list[str]:
    names = ["numpy"]
    if _core is not None:
        names.insert(0, "cython")
    return names


def get_backend(name: str):
    """Return the kernel module for an explicit backend name (benchmarks, tests)."""
    if name == "numpy":
        return _numpy
    if name == "cython":
        if _core is None:
            raise ValueError("cython backend not built")
        return _core
    raise ValueError(f"unknown backend {name!r}")
