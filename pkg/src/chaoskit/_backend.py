"""Select the compiled sweeps when available, else the NumPy reference.

Set ``CHAOSKIT_PURE=1`` to force the NumPy implementation.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("CHAOSKIT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        kernels = _ckernels
        BACKEND = "cython"


def get(name: str | None = None):
    """Kernel module by name (``"cython"``/``"python"``), default the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels  # type: ignore[attr-defined]

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
